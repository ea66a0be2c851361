#include "tip/discovery.hpp"

#include <algorithm>

#include "tip/dnssd.hpp"
#include "tip/error.hpp"

namespace tip::discovery {

void DiscoveryCache::put(const std::string& capability_id, std::vector<NodeRecord> records, std::uint64_t now) {
    entries_[capability_id] = {std::move(records), now + ttl_};
}

std::optional<std::vector<NodeRecord>> DiscoveryCache::get(const std::string& capability_id, std::uint64_t now) {
    auto it = entries_.find(capability_id);
    if (it == entries_.end()) return std::nullopt;
    if (now >= it->second.second) {
        entries_.erase(it);
        return std::nullopt;
    }
    return it->second.first;
}

// ---------------------------------------------------------------------------

struct LocalDiscovery::Browse {
    std::string capability;
    Hit on_hit;
    std::function<void(std::vector<NodeRecord>)> done;
    std::vector<NodeRecord> heard;
    net::TimerId timer = 0;
};

LocalDiscovery::LocalDiscovery(io::PacketIo& io, const NodeRecord& self, std::string group)
    : io_(io), self_(self), group_(std::move(group)), alive_(std::make_shared<bool>(true)) {}

LocalDiscovery::~LocalDiscovery() {
    for (auto& [id, b] : browses_) io_.transport().cancel(b->timer);
}

void LocalDiscovery::attach() {
    io_.transport().join_group(group_);
    io_.on_raw([this](const std::string& from, ByteView bytes) { on_datagram(from, bytes); });
}

void LocalDiscovery::announce() {
    if (self_.capabilities.empty()) return;
    ++announcements_;
    io_.transport().multicast(group_, dnssd::encode_announcement(self_, io_.identity().key));
}

std::uint64_t LocalDiscovery::browse(const std::string& capability_id, std::uint64_t timeout_us, Hit on_hit,
                                     std::function<void(std::vector<NodeRecord>)> done) {
    auto b = std::make_shared<Browse>();
    b->capability = capability_id;
    b->on_hit = std::move(on_hit);
    b->done = std::move(done);
    std::uint64_t id = next_++;
    browses_[id] = b;
    std::weak_ptr<bool> alive = alive_;
    b->timer = io_.transport().schedule(timeout_us, [this, alive, id] {
        if (alive.expired()) return;
        auto it = browses_.find(id);
        if (it == browses_.end()) return;
        auto br = it->second;
        browses_.erase(it);
        if (br->done) br->done(br->heard);
    });
    io_.transport().multicast(group_, dnssd::encode_query(capability_id));
    return id;
}

void LocalDiscovery::cancel(std::uint64_t browse_id) {
    auto it = browses_.find(browse_id);
    if (it == browses_.end()) return;
    io_.transport().cancel(it->second->timer);
    browses_.erase(it);
}

void LocalDiscovery::on_datagram(const std::string& from, ByteView bytes) {
    if (auto cap = dnssd::decode_query(bytes)) {
        if (self_.find_capability(*cap))
            io_.transport().send(from, dnssd::encode_announcement(self_, io_.identity().key));
        return;
    }
    auto a = dnssd::decode_announcement(bytes);
    if (!a || a->node.node_id == self_.node_id) return;
    io_.learn_peer(a->node.addresses.empty() ? from : a->node.primary_address(), a->node.signing_public);
    // Copy the ids first: a hit callback may cancel browses.
    std::vector<std::uint64_t> ids;
    for (const auto& [id, b] : browses_) ids.push_back(id);
    for (auto id : ids) {
        auto it = browses_.find(id);
        if (it == browses_.end()) continue;
        auto b = it->second;
        bool offers = false;
        for (const auto& s : a->services)
            if (s.txt_value("cap") == b->capability && a->node.find_capability(b->capability)) offers = true;
        if (!offers) continue;
        bool dup = std::any_of(b->heard.begin(), b->heard.end(),
                               [&](const NodeRecord& r) { return r.node_id == a->node.node_id; });
        if (dup) continue;
        NodeRecord rec = a->node;
        rec.last_seen = io_.now();
        b->heard.push_back(rec);
        if (b->on_hit) b->on_hit(rec);
    }
}

// ---------------------------------------------------------------------------

struct Discovery::Run {
    std::string capability;
    DiscoverOptions opts;
    Done done;
    std::map<NodeId, NodeRecord> found;
    DiscoverStats stats;
    std::uint64_t started = 0;
    std::uint64_t browse_id = 0;
    std::uint64_t lookup_id = 0;
    bool lookup_running = false;
    net::TimerId grace_timer = 0;
    net::TimerId timeout_timer = 0;
    bool finished = false;
    bool literal = false;
};

Discovery::Discovery(io::PacketIo& io, dht::Dht& dht, LocalDiscovery& local)
    : io_(io), dht_(dht), local_(local), cache_(io.config().cache_ttl_us), alive_(std::make_shared<bool>(true)) {}

void Discovery::discover(const std::string& capability_id, const DiscoverOptions& opts, Done done) {
    auto run = std::make_shared<Run>();
    run->capability = capability_id;
    run->opts = opts;
    run->done = std::move(done);
    run->started = io_.now();
    const auto& cfg = io_.config();
    std::uint64_t timeout = opts.timeout_us.value_or(cfg.discovery_timeout_us);
    run->literal = !cfg.early_cancel || opts.wide_area;
    std::weak_ptr<bool> alive = alive_;

    if (!opts.bypass_cache) {
        if (auto cached = cache_.get(capability_id, io_.now())) {
            for (auto& r : *cached)
                if (!opts.exclude.count(r.node_id)) run->found.emplace(r.node_id, r);
            run->stats.cache_hit = true;
            io_.transport().schedule(0, [this, alive, run] {
                if (!alive.expired()) complete(run);
            });
            return;
        }
    }

    auto accept = [run, capability_id](const NodeRecord& r) {
        if (run->opts.exclude.count(r.node_id) || !r.find_capability(capability_id)) return false;
        return run->found.emplace(r.node_id, r).second;
    };

    auto start_dht = [this, alive, run, capability_id, accept] {
        if (run->finished || run->lookup_running || dht_.table().size() == 0) return;
        run->stats.dht_started = true;
        run->lookup_running = true;
        run->lookup_id =
            dht_.iterative_lookup(capability_key(capability_id), true, [this, alive, run, accept](const dht::LookupResult& r) {
                if (alive.expired() || run->finished) return;
                run->lookup_running = false;
                for (const auto& p : r.providers)
                    if (accept(p.provider)) ++run->stats.dht_hits;
                if (!run->literal) complete(run);
            });
    };

    run->browse_id = local_.browse(
        capability_id, timeout,
        [this, run, accept](const NodeRecord& r) {
            if (run->finished || !accept(r)) return;
            ++run->stats.local_hits;
            // A local answer after the grace period wins over the WAN path.
            if (!run->literal && run->stats.dht_started) complete(run);
        },
        {});

    if (run->literal) {
        start_dht();
    } else {
        run->grace_timer = io_.transport().schedule(cfg.local_grace_us, [this, alive, run, start_dht] {
            if (alive.expired() || run->finished) return;
            if (run->stats.local_hits > 0)
                complete(run);
            else
                start_dht();
        });
    }
    run->timeout_timer = io_.transport().schedule(timeout, [this, alive, run] {
        if (!alive.expired()) complete(run);
    });
}

void Discovery::complete(const std::shared_ptr<Run>& run) {
    if (run->finished) return;
    run->finished = true;
    io_.transport().cancel(run->grace_timer);
    io_.transport().cancel(run->timeout_timer);
    if (run->browse_id) local_.cancel(run->browse_id);
    if (run->lookup_running) dht_.cancel(run->lookup_id);
    run->stats.elapsed_us = io_.now() - run->started;

    std::vector<NodeRecord> out;
    for (auto& [id, r] : run->found) {
        io_.learn_peer(r.primary_address(), r.signing_public);
        out.push_back(r);
    }
    if (!run->stats.cache_hit && !out.empty() && run->opts.exclude.empty()) cache_.put(run->capability, out, io_.now());
    if (run->done) run->done(std::move(out), run->stats);
}

}  // namespace tip::discovery
