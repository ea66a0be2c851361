#include "tip/kademlia.hpp"

#include <algorithm>

#include "tip/error.hpp"

namespace tip::dht {

Key256 xor_distance(const Key256& a, const Key256& b) { return a ^ b; }

int bucket_index(const NodeId& local, const NodeId& remote) {
    int bit = xor_distance(local, remote).highest_bit();
    if (bit < 0) throw Error(Errc::SelfReference, "bucket_index of the local id");
    return bit;
}

// ---------------------------------------------------------------------------

RoutingTable::RoutingTable(NodeId local, std::size_t k) : local_(local), k_(k), buckets_(kBuckets) {}

namespace {

void merge_into(NodeRecord& old, const NodeRecord& fresh) {
    if (!fresh.addresses.empty()) old.addresses = fresh.addresses;
    if (!fresh.capabilities.empty()) old.capabilities = fresh.capabilities;
    old.availability = fresh.availability;
    old.last_seen = std::max(old.last_seen, fresh.last_seen);
}

}  // namespace

RoutingTable::Insert RoutingTable::insert(const NodeRecord& n) {
    if (n.node_id == local_) return Insert::Self;
    auto& b = buckets_[static_cast<std::size_t>(bucket_index(local_, n.node_id))];
    auto it = std::find_if(b.begin(), b.end(), [&](const NodeRecord& r) { return r.node_id == n.node_id; });
    if (it != b.end()) {
        NodeRecord updated = *it;
        merge_into(updated, n);
        b.erase(it);
        b.push_back(std::move(updated));
        return Insert::Refreshed;
    }
    if (b.size() >= k_) return Insert::Full;
    b.push_back(n);
    return Insert::Added;
}

bool RoutingTable::remove(const NodeId& id) {
    if (id == local_) return false;
    auto& b = buckets_[static_cast<std::size_t>(bucket_index(local_, id))];
    auto it = std::find_if(b.begin(), b.end(), [&](const NodeRecord& r) { return r.node_id == id; });
    if (it == b.end()) return false;
    b.erase(it);
    return true;
}

const NodeRecord* RoutingTable::find(const NodeId& id) const {
    if (id == local_) return nullptr;
    const auto& b = buckets_[static_cast<std::size_t>(bucket_index(local_, id))];
    for (const auto& r : b)
        if (r.node_id == id) return &r;
    return nullptr;
}

const NodeRecord* RoutingTable::least_recent(int bucket) const {
    const auto& b = buckets_.at(static_cast<std::size_t>(bucket));
    return b.empty() ? nullptr : &b.front();
}

std::vector<NodeRecord> RoutingTable::closest(const Key256& target, std::size_t count, const NodeId* exclude) const {
    std::vector<const NodeRecord*> all;
    for (const auto& b : buckets_)
        for (const auto& r : b)
            if (!exclude || r.node_id != *exclude) all.push_back(&r);
    auto by_distance = [&](const NodeRecord* a, const NodeRecord* b) {
        return xor_distance(a->node_id, target) < xor_distance(b->node_id, target);
    };
    std::size_t n = std::min(count, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), by_distance);
    std::vector<NodeRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(*all[i]);
    return out;
}

std::vector<NodeRecord> RoutingTable::all() const {
    std::vector<NodeRecord> out;
    for (const auto& b : buckets_) out.insert(out.end(), b.begin(), b.end());
    return out;
}

std::size_t RoutingTable::size() const {
    std::size_t n = 0;
    for (const auto& b : buckets_) n += b.size();
    return n;
}

bool RoutingTable::check_invariants() const {
    for (int i = 0; i < kBuckets; ++i) {
        const auto& b = buckets_[static_cast<std::size_t>(i)];
        if (b.size() > k_) return false;
        for (const auto& r : b)
            if (r.node_id == local_ || bucket_index(local_, r.node_id) != i) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

struct Dht::Lookup {
    std::uint64_t id = 0;
    Key256 target;
    bool stop_on_value = false;
    LookupDone done;
    std::map<Key256, NodeRecord> shortlist;  // keyed by distance to target
    std::set<NodeId> queried;
    std::set<NodeId> failed;
    std::set<NodeId> responded;
    std::map<NodeId, ProviderRecord> providers;
    std::size_t outstanding = 0;
    Key256 best{};
    bool have_best = false;
    bool final_round = false;
    bool finished = false;
    int rounds = 0;
    std::size_t rpcs = 0;
};

Dht::Dht(io::PacketIo& io, const NodeRecord& self)
    : io_(io), self_(self), table_(self.node_id, io.config().k), alive_(std::make_shared<bool>(true)) {}

Dht::~Dht() = default;

void Dht::attach() {
    io_.on(wire::PacketType::DiscoveryQuery, [this](const io::Inbound& in) { on_query(in); });
    io_.on(wire::PacketType::DiscoveryAnnounce, [this](const io::Inbound& in) { on_announce(in); });
}

payload::DiscoveryAnnounce Dht::self_announce() const {
    payload::DiscoveryAnnounce a;
    a.node_id = self_.node_id;
    a.capabilities = self_.capabilities;
    a.addresses = self_.addresses;
    a.signing_public = self_.signing_public;
    return a;
}

void Dht::observe(const io::Inbound& in) {
    NodeRecord r;
    r.node_id = in.sender_id;
    r.signing_public = in.sender_key;
    r.addresses = {in.from};
    r.last_seen = in.received_us;
    if (auto* a = std::get_if<payload::DiscoveryAnnounce>(&in.message); a && a->node_id == in.sender_id) {
        r.capabilities = a->capabilities;
        if (!a->addresses.empty()) r.addresses = a->addresses;
    }
    table_insert(r);
}

void Dht::table_insert(const NodeRecord& n) {
    if (!n.self_consistent() || n.node_id == self_.node_id) return;
    if (!n.addresses.empty()) io_.learn_peer(n.primary_address(), n.signing_public);
    if (table_.insert(n) != RoutingTable::Insert::Full) return;

    int b = bucket_index(table_.local_id(), n.node_id);
    if (pinging_.count(b)) return;  // one eviction probe per bucket at a time
    const NodeRecord* lrs = table_.least_recent(b);
    if (!lrs || lrs->addresses.empty()) return;
    pinging_.insert(b);
    ++pings_;
    NodeId old = lrs->node_id;
    std::weak_ptr<bool> alive = alive_;
    io_.request(
        lrs->primary_address(), wire::PacketType::DiscoveryQuery, payload::DiscoveryQuery{},
        [this, alive, b, old, n](const io::Inbound* reply) {
            if (alive.expired()) return;
            pinging_.erase(b);
            if (reply) {
                if (const NodeRecord* cur = table_.find(old)) {
                    NodeRecord refreshed = *cur;
                    refreshed.last_seen = reply->received_us;
                    table_.insert(refreshed);  // moves to most-recently-seen; newcomer dropped
                }
            } else {
                table_.remove(old);
                table_.insert(n);
            }
        },
        io_.config().rpc_timeout_us, {}, /*accept_ack=*/true);
}

std::vector<NodeRecord> Dht::find_node(const Key256& target, const NodeId* requester) const {
    return table_.closest(target, table_.k(), requester);
}

void Dht::on_query(const io::Inbound& in) {
    const auto& q = std::get<payload::DiscoveryQuery>(in.message);
    observe(in);
    io::SendOptions o;
    o.transaction_id = in.txid();
    if (auto* key = std::get_if<Key256>(&q.target)) {
        auto reply = self_announce();
        reply.contacts = find_node(*key, &in.sender_id);
        reply.providers = stored(*key);
        io_.send(in.from, wire::PacketType::DiscoveryAnnounce, reply, o);
    } else if (auto* cap = std::get_if<std::string>(&q.target)) {
        if (self_.find_capability(*cap)) io_.send(in.from, wire::PacketType::DiscoveryAnnounce, self_announce(), o);
    }
    // Empty target: a ping, already acknowledged by the packet layer.
}

void Dht::on_announce(const io::Inbound& in) {
    const auto& a = std::get<payload::DiscoveryAnnounce>(in.message);
    observe(in);
    for (const auto& rec : a.providers)
        if (rec.verify()) store(rec);
}

std::uint64_t Dht::record_ttl_us() const {
    std::uint64_t interval = io_.config().announce_interval_us;
    return 3 * (interval ? interval : 15'000'000);
}

void Dht::store(const ProviderRecord& rec) {
    store_[rec.key][rec.provider.node_id] = {rec, io_.now() + record_ttl_us()};
}

std::vector<ProviderRecord> Dht::stored(const Key256& key) const {
    std::vector<ProviderRecord> out;
    auto it = store_.find(key);
    if (it == store_.end()) return out;
    std::uint64_t now = io_.now();
    for (const auto& [id, entry] : it->second)
        if (entry.second >= now) out.push_back(entry.first);
    return out;
}

std::uint64_t Dht::iterative_lookup(const Key256& target, bool stop_on_value, LookupDone done) {
    auto l = std::make_shared<Lookup>();
    l->id = next_lookup_++;
    l->target = target;
    l->stop_on_value = stop_on_value;
    l->done = std::move(done);
    for (const auto& rec : stored(target)) l->providers.emplace(rec.provider.node_id, rec);
    for (auto& n : table_.closest(target, table_.k())) l->shortlist.emplace(xor_distance(n.node_id, target), n);
    lookups_[l->id] = l;
    std::weak_ptr<bool> alive = alive_;
    io_.transport().schedule(0, [this, alive, l] {
        if (!alive.expired()) next_round(l);
    });
    return l->id;
}

void Dht::cancel(std::uint64_t lookup) {
    auto it = lookups_.find(lookup);
    if (it == lookups_.end()) return;
    it->second->finished = true;
    lookups_.erase(it);
}

void Dht::next_round(const std::shared_ptr<Lookup>& l) {
    if (l->finished) return;
    if (l->stop_on_value && !l->providers.empty()) return finish(l);

    // Unqueried nodes among the k closest live candidates.
    std::vector<NodeRecord> batch;
    std::size_t seen = 0;
    for (const auto& [dist, n] : l->shortlist) {
        if (l->failed.count(n.node_id)) continue;
        if (seen++ >= table_.k()) break;
        if (!l->queried.count(n.node_id)) batch.push_back(n);
    }
    if (batch.empty()) return finish(l);
    if (!l->final_round && batch.size() > io_.config().alpha) batch.resize(io_.config().alpha);

    ++l->rounds;
    l->outstanding = batch.size();
    std::weak_ptr<bool> alive = alive_;
    for (const auto& n : batch) {
        l->queried.insert(n.node_id);
        ++l->rpcs;
        NodeId peer = n.node_id;
        io_.request(
            n.primary_address(), wire::PacketType::DiscoveryQuery, payload::DiscoveryQuery{l->target},
            [this, alive, l, peer](const io::Inbound* reply) {
                if (alive.expired() || l->finished) return;
                const payload::DiscoveryAnnounce* a =
                    reply ? std::get_if<payload::DiscoveryAnnounce>(&reply->message) : nullptr;
                if (!a || reply->sender_id != peer) {
                    l->failed.insert(peer);
                } else {
                    l->responded.insert(peer);
                    observe(*reply);
                    for (const auto& c : a->contacts) {
                        if (!c.self_consistent() || c.node_id == self_.node_id) continue;
                        io_.learn_peer(c.primary_address(), c.signing_public);
                        l->shortlist.emplace(xor_distance(c.node_id, l->target), c);
                    }
                    for (const auto& rec : a->providers)
                        if (rec.key == l->target && rec.verify()) l->providers.emplace(rec.provider.node_id, rec);
                }
                if (--l->outstanding > 0) return;

                // Round complete: did it bring us closer?
                std::optional<Key256> best;
                for (const auto& [dist, n] : l->shortlist)
                    if (!l->failed.count(n.node_id)) {
                        best = dist;
                        break;
                    }
                bool improved = best && (!l->have_best || *best < l->best);
                if (best) {
                    l->best = *best;
                    l->have_best = true;
                }
                if (!improved) {
                    if (l->final_round) return finish(l);
                    l->final_round = true;  // query every remaining k-closest candidate once
                }
                next_round(l);
            },
            io_.config().rpc_timeout_us);
    }
}

void Dht::finish(const std::shared_ptr<Lookup>& l) {
    if (l->finished) return;
    l->finished = true;
    lookups_.erase(l->id);
    LookupResult r;
    r.target = l->target;
    r.rounds = l->rounds;
    r.rpcs = l->rpcs;
    for (const auto& [dist, n] : l->shortlist) {
        if (r.closest.size() >= table_.k()) break;
        if (l->responded.count(n.node_id)) r.closest.push_back(n);
    }
    for (const auto& [id, rec] : l->providers) r.providers.push_back(rec);
    if (l->done) l->done(r);
}

void Dht::publish(const std::string& capability_id, std::function<void(std::size_t)> done) {
    Key256 key = capability_key(capability_id);
    auto rec = ProviderRecord::make(key, self_, io_.identity().key);
    store(rec);
    if (table_.size() == 0) throw Error(Errc::NoPeers, "routing table is empty");
    std::weak_ptr<bool> alive = alive_;
    iterative_lookup(key, false, [this, alive, rec, done](const LookupResult& r) {
        if (alive.expired()) return;
        auto targets = r.closest;
        if (targets.empty()) {
            if (done) done(0);
            return;
        }
        auto acks = std::make_shared<std::size_t>(0);
        auto left = std::make_shared<std::size_t>(targets.size());
        payload::DiscoveryAnnounce a = self_announce();
        a.providers = {rec};
        for (const auto& t : targets) {
            io_.send_reliable(t.primary_address(), wire::PacketType::DiscoveryAnnounce, a,
                              [acks, left, done](bool ok) {
                                  if (ok) ++*acks;
                                  if (--*left == 0 && done) done(*acks);
                              });
        }
    });
}

}  // namespace tip::dht
