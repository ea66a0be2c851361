#pragma once

// Datagram substrate shared by the simulated network and the UDP backend.
// A node talks to exactly one Transport; everything it does (receive, timer
// callbacks) runs on that transport's single logical loop.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tip/bytes.hpp"
#include "tip/ids.hpp"

namespace tip::net {

using TimerId = std::uint64_t;
using Receiver = std::function<void(const std::string& from, ByteView datagram)>;

class Transport {
public:
    virtual ~Transport() = default;

    virtual const std::string& address() const = 0;
    virtual void send(const std::string& to, ByteView datagram) = 0;
    virtual void multicast(const std::string& group, ByteView datagram) = 0;
    virtual void join_group(const std::string& group) = 0;
    virtual std::uint64_t now_us() const = 0;
    virtual TimerId schedule(std::uint64_t delay_us, std::function<void()> fn) = 0;
    virtual void cancel(TimerId id) = 0;
    virtual void set_receiver(Receiver r) = 0;

    std::uint64_t sent_count() const { return sent_; }

protected:
    std::uint64_t sent_ = 0;
};

struct LinkParams {
    std::uint64_t latency_us = 1000;
    double loss = 0.0;
};

/// Virtual epoch used when a scenario does not choose one: 2024-01-01T00:00Z.
inline constexpr std::uint64_t kSimEpochUs = 1'704'067'200'000'000ULL;

/// Deterministic discrete-event network. Deliveries and timers share one
/// queue ordered by (virtual time, insertion order); every random draw comes
/// from the seeded generator, so identical seeds give identical runs.
class SimNetwork {
public:
    explicit SimNetwork(std::uint64_t seed, std::uint64_t start_us = kSimEpochUs);
    ~SimNetwork();
    SimNetwork(const SimNetwork&) = delete;
    SimNetwork& operator=(const SimNetwork&) = delete;

    /// Throws ConfigError on a duplicate address.
    Transport& add_node(const std::string& address);
    Transport& endpoint(const std::string& address);  // UnknownNode
    bool has_node(const std::string& address) const;

    void set_default_link(LinkParams p) { default_link_ = p; }
    void set_link(const std::string& from, const std::string& to, LinkParams p);
    void set_link_symmetric(const std::string& a, const std::string& b, LinkParams p);
    LinkParams link(const std::string& from, const std::string& to) const;
    /// Extra one-way delay added to everything `address` sends.
    void set_extra_delay(const std::string& address, std::uint64_t us);
    /// A muted node neither sends nor receives.
    void set_muted(const std::string& address, bool muted);
    bool muted(const std::string& address) const;

    void send(const std::string& from, const std::string& to, ByteView bytes);        // UnknownNode
    void multicast(const std::string& from, const std::string& group, ByteView bytes);  // UnknownNode
    void join(const std::string& address, const std::string& group);

    /// Processes the next event; false when the queue is empty.
    bool step();
    /// Runs every event with time <= t, then sets the clock to t.
    void run_until(std::uint64_t t);
    void run_for(std::uint64_t duration_us) { run_until(now_ + duration_us); }
    /// Steps until `done` holds or the clock would pass `deadline`.
    bool run_until(const std::function<bool()>& done, std::uint64_t deadline);

    std::uint64_t now() const { return now_; }
    Rng& rng() { return rng_; }

    const std::vector<std::string>& log() const { return log_; }
    std::string log_text() const;
    void set_logging(bool on) { logging_ = on; }

    std::uint64_t delivered() const { return delivered_; }
    std::uint64_t dropped() const { return dropped_; }

private:
    class Endpoint;
    struct Event {
        std::uint64_t time;
        std::uint64_t order;
        bool operator>(const Event& o) const { return time != o.time ? time > o.time : order > o.order; }
    };
    struct Delivery {
        std::string from, to;
        Bytes bytes;
    };
    struct Timer {
        std::string owner;
        std::function<void()> fn;
    };

    void drop_cancelled();  // pops cancelled timers off the top of the queue
    void enqueue_delivery(const std::string& from, const std::string& to, ByteView bytes);
    TimerId add_timer(const std::string& owner, std::uint64_t delay_us, std::function<void()> fn);
    void cancel_timer(TimerId id);
    void record(const std::string& line);

    std::uint64_t now_;
    Rng rng_;
    std::uint64_t order_ = 0;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
    std::unordered_map<std::uint64_t, Delivery> deliveries_;
    std::unordered_map<std::uint64_t, Timer> timers_;
    std::map<std::string, std::unique_ptr<Endpoint>> nodes_;
    std::map<std::pair<std::string, std::string>, LinkParams> links_;
    std::map<std::string, std::uint64_t> extra_delay_;
    std::set<std::string> muted_;
    std::map<std::string, std::set<std::string>> groups_;
    LinkParams default_link_{};
    std::vector<std::string> log_;
    bool logging_ = true;
    std::uint64_t delivered_ = 0;
    std::uint64_t dropped_ = 0;
};

/// Short name of the TIP packet type carried in a datagram ("RAW" otherwise).
std::string datagram_kind(ByteView bytes);

inline constexpr std::size_t kMaxUdpPayload = 65507;

/// Real UDP sockets carrying CoAP-wrapped TIP frames. Addresses are
/// "udp://host:port". Single-threaded: poll() drives receive and timers.
class UdpTransport : public Transport {
public:
    /// Throws BindFailure. Port 0 picks an ephemeral port.
    static std::unique_ptr<UdpTransport> bind(const std::string& host, std::uint16_t port, std::uint64_t seed = 1);
    ~UdpTransport() override;

    const std::string& address() const override { return address_; }
    void send(const std::string& to, ByteView datagram) override;  // OversizedDatagram, ConfigError
    /// Multicast goes to every peer registered with add_multicast_peer (a
    /// unicast emulation of the link bus) and, when enabled, to 224.0.0.251:5353.
    void multicast(const std::string& group, ByteView datagram) override;
    void join_group(const std::string& group) override { groups_.insert(group); }
    std::uint64_t now_us() const override;
    TimerId schedule(std::uint64_t delay_us, std::function<void()> fn) override;
    void cancel(TimerId id) override { timers_.erase(id); }
    void set_receiver(Receiver r) override { receiver_ = std::move(r); }

    void add_multicast_peer(const std::string& address) { mcast_peers_.insert(address); }
    /// Joins 224.0.0.251 on port 5353; false when the OS refuses.
    bool enable_os_multicast();

    /// Waits up to `timeout_us` for datagrams, then fires due timers.
    void poll(std::uint64_t timeout_us);
    bool run_until(const std::function<bool()>& done, std::uint64_t timeout_us);

    std::uint16_t port() const { return port_; }
    std::uint64_t dropped_count() const { return dropped_; }

private:
    UdpTransport() = default;
    void send_raw(int fd, const std::string& host, std::uint16_t port, ByteView bytes);
    void drain(int fd);

    int fd_ = -1;
    int mcast_fd_ = -1;
    std::uint16_t port_ = 0;
    std::string address_;
    Receiver receiver_;
    Rng rng_{1};
    std::set<std::string> groups_;
    std::set<std::string> mcast_peers_;
    std::map<TimerId, std::pair<std::uint64_t, std::function<void()>>> timers_;
    TimerId next_timer_ = 1;
    std::uint64_t dropped_ = 0;
};

/// Splits "udp://host:port"; throws ConfigError.
std::pair<std::string, std::uint16_t> parse_udp_address(const std::string& address);

}  // namespace tip::net
