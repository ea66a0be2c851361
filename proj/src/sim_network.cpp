#include <sstream>

#include "tip/error.hpp"
#include "tip/transport.hpp"
#include "tip/wire.hpp"

namespace tip::net {

class SimNetwork::Endpoint final : public Transport {
public:
    Endpoint(SimNetwork& net, std::string address) : net_(net), address_(std::move(address)) {}

    const std::string& address() const override { return address_; }
    void send(const std::string& to, ByteView datagram) override {
        ++sent_;
        net_.send(address_, to, datagram);
    }
    void multicast(const std::string& group, ByteView datagram) override {
        ++sent_;
        net_.multicast(address_, group, datagram);
    }
    void join_group(const std::string& group) override { net_.join(address_, group); }
    std::uint64_t now_us() const override { return net_.now(); }
    TimerId schedule(std::uint64_t delay_us, std::function<void()> fn) override {
        return net_.add_timer(address_, delay_us, std::move(fn));
    }
    void cancel(TimerId id) override { net_.cancel_timer(id); }
    void set_receiver(Receiver r) override { receiver_ = std::move(r); }

    void deliver(const std::string& from, ByteView bytes) {
        if (receiver_) receiver_(from, bytes);
    }

private:
    SimNetwork& net_;
    std::string address_;
    Receiver receiver_;
};

std::string datagram_kind(ByteView bytes) {
    if (bytes.size() >= wire::kHeaderSize && bytes[0] == 0x54 && bytes[1] == 0x49) {
        try {
            return std::string(wire::packet_type_name(wire::packet_type_from_code(bytes[3])));
        } catch (const Error&) {
            return "TIP?";
        }
    }
    return "RAW";
}

SimNetwork::SimNetwork(std::uint64_t seed, std::uint64_t start_us) : now_(start_us), rng_(seed) {}

SimNetwork::~SimNetwork() = default;

Transport& SimNetwork::add_node(const std::string& address) {
    if (nodes_.count(address)) throw Error(Errc::ConfigError, "duplicate sim address " + address);
    auto& slot = nodes_[address];
    slot = std::make_unique<Endpoint>(*this, address);
    return *slot;
}

Transport& SimNetwork::endpoint(const std::string& address) {
    auto it = nodes_.find(address);
    if (it == nodes_.end()) throw Error(Errc::UnknownNode, "unknown sim node " + address);
    return *it->second;
}

bool SimNetwork::has_node(const std::string& address) const { return nodes_.count(address) != 0; }

void SimNetwork::set_link(const std::string& from, const std::string& to, LinkParams p) { links_[{from, to}] = p; }

void SimNetwork::set_link_symmetric(const std::string& a, const std::string& b, LinkParams p) {
    set_link(a, b, p);
    set_link(b, a, p);
}

LinkParams SimNetwork::link(const std::string& from, const std::string& to) const {
    auto it = links_.find({from, to});
    return it == links_.end() ? default_link_ : it->second;
}

void SimNetwork::set_extra_delay(const std::string& address, std::uint64_t us) {
    if (us == 0)
        extra_delay_.erase(address);
    else
        extra_delay_[address] = us;
}

void SimNetwork::set_muted(const std::string& address, bool m) {
    if (m)
        muted_.insert(address);
    else
        muted_.erase(address);
}

bool SimNetwork::muted(const std::string& address) const { return muted_.count(address) != 0; }

void SimNetwork::record(const std::string& line) {
    if (logging_) log_.push_back(line);
}

void SimNetwork::enqueue_delivery(const std::string& from, const std::string& to, ByteView bytes) {
    auto kind = datagram_kind(bytes);
    auto lp = link(from, to);
    // Draw only when loss is configured so lossless runs consume no randomness.
    bool lost = lp.loss > 0.0 && rng_.uniform01() < lp.loss;
    if (lost || muted(from)) {
        ++dropped_;
        std::ostringstream os;
        os << now_ << ' ' << from << ' ' << to << ' ' << kind << ' ' << bytes.size() << (lost ? " lost" : " muted");
        record(os.str());
        return;
    }
    std::uint64_t delay = lp.latency_us;
    if (auto it = extra_delay_.find(from); it != extra_delay_.end()) delay += it->second;
    std::uint64_t id = order_++;
    deliveries_.emplace(id, Delivery{from, to, Bytes(bytes.begin(), bytes.end())});
    queue_.push(Event{now_ + delay, id});
}

void SimNetwork::send(const std::string& from, const std::string& to, ByteView bytes) {
    if (!has_node(from)) throw Error(Errc::UnknownNode, "unknown sim node " + from);
    if (!has_node(to)) throw Error(Errc::UnknownNode, "unknown sim node " + to);
    enqueue_delivery(from, to, bytes);
}

void SimNetwork::multicast(const std::string& from, const std::string& group, ByteView bytes) {
    if (!has_node(from)) throw Error(Errc::UnknownNode, "unknown sim node " + from);
    auto it = groups_.find(group);
    if (it == groups_.end()) return;
    for (const auto& member : it->second)
        if (member != from) enqueue_delivery(from, member, bytes);
}

void SimNetwork::join(const std::string& address, const std::string& group) { groups_[group].insert(address); }

TimerId SimNetwork::add_timer(const std::string& owner, std::uint64_t delay_us, std::function<void()> fn) {
    std::uint64_t id = order_++;
    timers_.emplace(id, Timer{owner, std::move(fn)});
    queue_.push(Event{now_ + delay_us, id});
    return id;
}

void SimNetwork::cancel_timer(TimerId id) { timers_.erase(id); }

void SimNetwork::drop_cancelled() {
    while (!queue_.empty() && !deliveries_.count(queue_.top().order) && !timers_.count(queue_.top().order))
        queue_.pop();
}

bool SimNetwork::step() {
    drop_cancelled();
    while (!queue_.empty()) {
        Event ev = queue_.top();
        queue_.pop();
        if (ev.time > now_) now_ = ev.time;
        if (auto d = deliveries_.find(ev.order); d != deliveries_.end()) {
            Delivery del = std::move(d->second);
            deliveries_.erase(d);
            std::ostringstream os;
            os << now_ << ' ' << del.from << ' ' << del.to << ' ' << datagram_kind(del.bytes) << ' ' << del.bytes.size();
            if (muted(del.to)) {
                ++dropped_;
                os << " muted";
                record(os.str());
                return true;
            }
            ++delivered_;
            record(os.str());
            static_cast<Endpoint&>(*nodes_.at(del.to)).deliver(del.from, del.bytes);
            return true;
        }
        if (auto t = timers_.find(ev.order); t != timers_.end()) {
            auto fn = std::move(t->second.fn);
            timers_.erase(t);
            fn();
            return true;
        }
    }
    return false;
}

void SimNetwork::run_until(std::uint64_t t) {
    for (drop_cancelled(); !queue_.empty() && queue_.top().time <= t; drop_cancelled()) step();
    if (now_ < t) now_ = t;
}

bool SimNetwork::run_until(const std::function<bool()>& done, std::uint64_t deadline) {
    while (!done()) {
        drop_cancelled();
        if (queue_.empty() || queue_.top().time > deadline) {
            if (now_ < deadline) now_ = deadline;
            return done();
        }
        step();
    }
    return true;
}

std::string SimNetwork::log_text() const {
    std::string out;
    for (const auto& l : log_) {
        out += l;
        out += '\n';
    }
    return out;
}

}  // namespace tip::net
