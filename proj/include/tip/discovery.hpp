#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tip/kademlia.hpp"
#include "tip/packet_io.hpp"
#include "tip/types.hpp"

namespace tip::discovery {

class DiscoveryCache {
public:
    explicit DiscoveryCache(std::uint64_t ttl_us = 60'000'000) : ttl_(ttl_us) {}

    void put(const std::string& capability_id, std::vector<NodeRecord> records, std::uint64_t now);
    /// nullopt when absent or expired; expired entries are dropped.
    std::optional<std::vector<NodeRecord>> get(const std::string& capability_id, std::uint64_t now);
    void erase(const std::string& capability_id) { entries_.erase(capability_id); }
    std::size_t size() const { return entries_.size(); }
    std::uint64_t ttl_us() const { return ttl_; }

private:
    std::uint64_t ttl_;
    std::map<std::string, std::pair<std::vector<NodeRecord>, std::uint64_t>> entries_;
};

/// Local-link announcement and browsing over the multicast bus.
class LocalDiscovery {
public:
    using Hit = std::function<void(const NodeRecord&)>;

    LocalDiscovery(io::PacketIo& io, const NodeRecord& self, std::string group);
    ~LocalDiscovery();

    /// Joins the group and takes over non-TIP datagrams.
    void attach();
    void announce();

    /// Queries the link and reports each distinct matching node to `on_hit`
    /// until `timeout_us`, then calls `done` with everything heard.
    std::uint64_t browse(const std::string& capability_id, std::uint64_t timeout_us, Hit on_hit,
                         std::function<void(std::vector<NodeRecord>)> done);
    void cancel(std::uint64_t browse_id);

    std::uint64_t announcements_sent() const { return announcements_; }

private:
    struct Browse;
    void on_datagram(const std::string& from, ByteView bytes);

    io::PacketIo& io_;
    const NodeRecord& self_;
    std::string group_;
    std::map<std::uint64_t, std::shared_ptr<Browse>> browses_;
    std::uint64_t next_ = 1;
    std::uint64_t announcements_ = 0;
    std::shared_ptr<bool> alive_;
};

struct DiscoverOptions {
    bool bypass_cache = false;
    bool wide_area = false;  // intent asks for WAN providers: never cut the DHT short
    std::set<NodeId> exclude;
    std::optional<std::uint64_t> timeout_us;
};

struct DiscoverStats {
    bool cache_hit = false;
    bool dht_started = false;
    std::size_t local_hits = 0;
    std::size_t dht_hits = 0;
    std::uint64_t elapsed_us = 0;
};

/// Dual-phase resolution: cache, then local-link browse and DHT lookup
/// merged and deduplicated by node id.
///
/// With early cancel on (default) the DHT phase waits `local_grace_us`; if
/// the link has answered by then, discovery completes without any FIND_NODE
/// traffic. A local answer arriving later still completes discovery at once
/// and abandons the lookup. With early cancel off both phases start together
/// and run until the timeout.
class Discovery {
public:
    using Done = std::function<void(std::vector<NodeRecord>, DiscoverStats)>;

    Discovery(io::PacketIo& io, dht::Dht& dht, LocalDiscovery& local);

    void discover(const std::string& capability_id, const DiscoverOptions& opts, Done done);
    DiscoveryCache& cache() { return cache_; }

private:
    struct Run;
    void complete(const std::shared_ptr<Run>& run);

    io::PacketIo& io_;
    dht::Dht& dht_;
    LocalDiscovery& local_;
    DiscoveryCache cache_;
    std::shared_ptr<bool> alive_;
};

}  // namespace tip::discovery
