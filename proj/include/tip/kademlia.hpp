#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "tip/ids.hpp"
#include "tip/packet_io.hpp"
#include "tip/types.hpp"

namespace tip::dht {

Key256 xor_distance(const Key256& a, const Key256& b);
/// floor(log2(a ^ b)); throws Error(Errc::SelfReference) when a == b.
int bucket_index(const NodeId& local, const NodeId& remote);

inline constexpr int kBuckets = 256;

class RoutingTable {
public:
    enum class Insert { Added, Refreshed, Full, Self };

    explicit RoutingTable(NodeId local, std::size_t k = 20);

    /// Adds or refreshes without contacting anyone. A full bucket is left
    /// untouched and reported as Full; the caller decides about eviction.
    Insert insert(const NodeRecord& n);
    bool remove(const NodeId& id);
    const NodeRecord* find(const NodeId& id) const;
    /// Least-recently-seen entry of a bucket, or nullptr.
    const NodeRecord* least_recent(int bucket) const;

    /// Up to `count` known nodes sorted by distance to `target`, ascending.
    std::vector<NodeRecord> closest(const Key256& target, std::size_t count,
                                    const NodeId* exclude = nullptr) const;

    const std::deque<NodeRecord>& bucket(int i) const { return buckets_.at(static_cast<std::size_t>(i)); }
    std::vector<NodeRecord> all() const;
    std::size_t size() const;
    std::size_t k() const { return k_; }
    const NodeId& local_id() const { return local_; }

    /// Every entry sits in the bucket its distance demands and no bucket
    /// exceeds k.
    bool check_invariants() const;

private:
    NodeId local_;
    std::size_t k_;
    std::vector<std::deque<NodeRecord>> buckets_;  // front = least recently seen
};

struct LookupResult {
    Key256 target;
    std::vector<NodeRecord> closest;  // ascending distance, responsive nodes only
    std::vector<ProviderRecord> providers;
    int rounds = 0;
    std::size_t rpcs = 0;
};

/// Kademlia node logic on top of PacketIo: FIND_NODE / STORE handlers,
/// ping-based bucket maintenance, α-parallel iterative lookups in strict
/// rounds, and the local provider store.
class Dht {
public:
    using LookupDone = std::function<void(const LookupResult&)>;

    /// `self` is read each time a reply is built, so later capability
    /// changes are advertised.
    Dht(io::PacketIo& io, const NodeRecord& self);
    ~Dht();

    RoutingTable& table() { return table_; }
    const RoutingTable& table() const { return table_; }

    /// Handles DISCOVERY_QUERY / DISCOVERY_ANNOUNCE. Install once.
    void attach();

    /// Kademlia insertion discipline: refresh if known, append if there is
    /// room, otherwise ping the least-recently-seen occupant and keep it if
    /// it answers, replace it if it does not.
    void table_insert(const NodeRecord& n);

    /// The handler side of FIND_NODE.
    std::vector<NodeRecord> find_node(const Key256& target, const NodeId* requester = nullptr) const;

    /// `stop_on_value` ends the lookup as soon as a provider record for the
    /// target is known (find-value). Returns a handle for cancel().
    std::uint64_t iterative_lookup(const Key256& target, bool stop_on_value, LookupDone done);
    void cancel(std::uint64_t lookup);

    /// Stores a signed provider record locally and at the k closest nodes.
    /// `done` receives the number of acknowledged STOREs. Throws NoPeers.
    void publish(const std::string& capability_id, std::function<void(std::size_t)> done = {});

    std::vector<ProviderRecord> stored(const Key256& key) const;
    void store(const ProviderRecord& rec);
    std::uint64_t record_ttl_us() const;

    std::uint64_t pings_sent() const { return pings_; }

private:
    struct Lookup;
    void next_round(const std::shared_ptr<Lookup>& l);
    void finish(const std::shared_ptr<Lookup>& l);
    void on_query(const io::Inbound& in);
    void on_announce(const io::Inbound& in);
    void observe(const io::Inbound& in);
    payload::DiscoveryAnnounce self_announce() const;

    io::PacketIo& io_;
    const NodeRecord& self_;
    RoutingTable table_;
    std::map<Key256, std::map<NodeId, std::pair<ProviderRecord, std::uint64_t>>> store_;
    std::map<std::uint64_t, std::shared_ptr<Lookup>> lookups_;
    std::set<int> pinging_;
    std::uint64_t next_lookup_ = 1;
    std::uint64_t pings_ = 0;
    std::shared_ptr<bool> alive_;
};

}  // namespace tip::dht
