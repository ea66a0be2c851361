#pragma once

// One TIP node: packet layer, DHT, link discovery, reputation, adapters and
// the orchestrator wired together on a single transport.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tip/adapter.hpp"
#include "tip/discovery.hpp"
#include "tip/kademlia.hpp"
#include "tip/negotiation.hpp"
#include "tip/orchestrator.hpp"
#include "tip/packet_io.hpp"
#include "tip/toml_lite.hpp"

namespace tip {

class Node {
public:
    /// `adapters` may be shared between nodes; a fresh registry is made when null.
    Node(net::Transport& transport, const crypto::NodeIdentity& identity, const NodeConfig& config,
         std::uint64_t seed, std::shared_ptr<adapter::AdapterRegistry> adapters = nullptr,
         double availability = 1.0);
    ~Node();
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    /// Installs handlers, joins the link group and starts the periodic
    /// announce/republish timer.
    void start();
    bool started() const { return started_; }

    /// Adds `peer` to the routing table without contacting it.
    void add_peer(const NodeRecord& peer);
    /// add_peer, then a lookup of our own id to fill the table; republishes
    /// served capabilities once it returns.
    void bootstrap(const NodeRecord& peer, std::function<void()> done = {});
    /// Bootstrap from an address alone: a FIND_NODE to it reveals its key.
    /// `done(false)` when it does not answer.
    void bootstrap_address(const std::string& address, std::function<void(bool)> done = {});
    /// Announces on the link and (re)publishes every capability in the DHT.
    void announce();

    void serve(const Capability& cap, orchestrator::Handler handler) { orch_->serve(cap, std::move(handler)); }

    const NodeRecord& record() const { return self_; }
    NodeRecord& record() { return self_; }
    const NodeId& id() const { return self_.node_id; }
    const std::string& address() const { return transport_.address(); }

    io::PacketIo& io() { return *io_; }
    dht::Dht& dht() { return *dht_; }
    discovery::LocalDiscovery& local() { return *local_; }
    discovery::Discovery& discovery() { return *discovery_; }
    negotiation::ReputationStore& reputation() { return reputation_; }
    adapter::AdapterRegistry& adapters() { return *adapters_; }
    orchestrator::Orchestrator& orchestrator() { return *orch_; }

private:
    void schedule_announce();

    net::Transport& transport_;
    NodeRecord self_;
    std::shared_ptr<adapter::AdapterRegistry> adapters_;
    negotiation::ReputationStore reputation_;
    std::unique_ptr<io::PacketIo> io_;
    std::unique_ptr<dht::Dht> dht_;
    std::unique_ptr<discovery::LocalDiscovery> local_;
    std::unique_ptr<discovery::Discovery> discovery_;
    std::unique_ptr<orchestrator::Orchestrator> orch_;
    bool started_ = false;
    net::TimerId announce_timer_ = 0;
    std::shared_ptr<bool> alive_;
};

/// A capability entry of a node configuration file.
struct ServedCapability {
    Capability capability;
    std::string handler = "constant";  // "constant" or "fill"
    double value = 0.0;                // constant handler output
};

/// Node configuration file ([node], [[capability]], [[peer]]).
struct NodeFile {
    std::string name;
    std::string bind = "udp://127.0.0.1:0";
    std::optional<std::string> identity_key;  // path to a 64-hex-char seed file
    std::optional<std::string> reputation_file;
    std::string transport = "udp";
    std::string adapter_dir;
    double availability = 1.0;
    std::uint64_t seed = 1;
    NodeConfig config;
    std::vector<ServedCapability> capabilities;
    std::vector<std::string> peers;  // "udp://host:port"; keys are learned from traffic
};

/// Throws ConfigError (also for an unreadable identity key file).
NodeFile load_node_file(const std::string& path);
crypto::Seed read_identity_seed(const std::string& path);

/// TOML value to CBOR (tables become canonical maps).
cbor::Value toml_to_cbor(const toml::Value& v);

/// Intent fields from a table: capability, schema, max_latency_ms,
/// min_precision, min_rate_hz, streaming, wide_area, params, and either
/// weights = [func, cost, trust, avail] or a 4x4 pairwise matrix `ahp`.
/// Throws ConfigError, InvalidWeights or the AHP errors.
negotiation::Intent intent_from_toml(const toml::Table& t);

/// Intent file: an [intent] table in the format above.
negotiation::Intent load_intent_file(const std::string& path);

/// Loads every *.toml descriptor in `dir` into the registry; returns how many.
std::size_t load_adapter_dir(adapter::AdapterRegistry& reg, const std::string& dir);

}  // namespace tip
