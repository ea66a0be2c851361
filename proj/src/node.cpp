#include "tip/node.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "tip/error.hpp"
#include "tip/log.hpp"
#include "tip/toml_lite.hpp"

namespace tip {

Node::Node(net::Transport& transport, const crypto::NodeIdentity& identity, const NodeConfig& config,
           std::uint64_t seed, std::shared_ptr<adapter::AdapterRegistry> adapters, double availability)
    : transport_(transport),
      adapters_(adapters ? std::move(adapters) : std::make_shared<adapter::AdapterRegistry>()),
      reputation_(config.lambda),
      alive_(std::make_shared<bool>(true)) {
    self_.node_id = identity.node_id;
    self_.signing_public = identity.public_key();
    self_.addresses = {transport.address()};
    self_.availability = availability;
    io_ = std::make_unique<io::PacketIo>(transport, identity, config, seed);
    dht_ = std::make_unique<dht::Dht>(*io_, self_);
    local_ = std::make_unique<discovery::LocalDiscovery>(*io_, self_, config.link_group);
    discovery_ = std::make_unique<discovery::Discovery>(*io_, *dht_, *local_);
    orch_ = std::make_unique<orchestrator::Orchestrator>(
        orchestrator::Context{*io_, self_, *discovery_, *local_, *dht_, *adapters_, reputation_});
}

Node::~Node() {
    if (announce_timer_) transport_.cancel(announce_timer_);
}

void Node::start() {
    if (started_) return;
    started_ = true;
    dht_->attach();
    local_->attach();
    orch_->attach();
    schedule_announce();
    log::info("node_started", {{"node", self_.node_id.hex().substr(0, 16)}, {"address", address()}});
}

void Node::schedule_announce() {
    const std::uint64_t interval = io_->config().announce_interval_us;
    if (interval == 0) return;
    // +-10% jitter keeps a fleet started together from announcing in lockstep.
    const std::uint64_t jitter = interval / 5 == 0 ? 0 : io_->rng().below(interval / 5);
    std::weak_ptr<bool> alive = alive_;
    announce_timer_ = transport_.schedule(interval - interval / 10 + jitter, [this, alive] {
        if (alive.expired()) return;
        announce();
        schedule_announce();
    });
}

void Node::announce() {
    local_->announce();
    if (dht_->table().size() == 0) return;
    for (const auto& cap : self_.capabilities) dht_->publish(cap.id);
}

void Node::add_peer(const NodeRecord& peer) {
    if (peer.node_id == self_.node_id) return;
    io_->learn_peer(peer.primary_address(), peer.signing_public);
    dht_->table().insert(peer);
}

void Node::bootstrap(const NodeRecord& peer, std::function<void()> done) {
    add_peer(peer);
    std::weak_ptr<bool> alive = alive_;
    dht_->iterative_lookup(self_.node_id, false, [this, alive, done](const dht::LookupResult&) {
        if (alive.expired()) return;
        for (const auto& cap : self_.capabilities) dht_->publish(cap.id);
        if (done) done();
    });
}

void Node::bootstrap_address(const std::string& address, std::function<void(bool)> done) {
    std::weak_ptr<bool> alive = alive_;
    io_->request(
        address, wire::PacketType::DiscoveryQuery, payload::DiscoveryQuery{self_.node_id},
        [this, alive, address, done](const io::Inbound* in) {
            if (alive.expired()) return;
            const auto* a = in ? std::get_if<payload::DiscoveryAnnounce>(&in->message) : nullptr;
            if (!a) {
                log::warn("bootstrap_failed", {{"peer", address}});
                if (done) done(false);
                return;
            }
            NodeRecord peer;
            peer.node_id = in->sender_id;
            peer.signing_public = in->sender_key;
            peer.addresses = {address};
            peer.capabilities = a->capabilities;
            bootstrap(peer, [done] {
                if (done) done(true);
            });
        },
        io_->config().rpc_timeout_us);
}

// --- configuration ----------------------------------------------------------

crypto::Seed read_identity_seed(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::ConfigError, "cannot read identity key " + path);
    std::string hex;
    in >> hex;
    try {
        return array_from_hex<32>(hex);
    } catch (const Error&) {
        throw Error(Errc::ConfigError, path + ": identity key must be 64 hex characters");
    }
}

NodeFile load_node_file(const std::string& path) {
    toml::Table root;
    try {
        root = toml::parse_file(path);
    } catch (const Error& e) {
        throw Error(Errc::ConfigError, path + ": " + e.what());
    }
    NodeFile f;
    const std::string dir = std::filesystem::path(path).parent_path().string();
    auto resolve = [&](const std::string& p) {
        if (p.empty() || std::filesystem::path(p).is_absolute() || dir.empty()) return p;
        return (std::filesystem::path(dir) / p).string();
    };
    try {
        const toml::Table* n = toml::find_table(root, "node");
        if (!n) throw Error(Errc::ConfigError, "missing [node] table");
        f.name = toml::get_string(*n, "name").value_or("node");
        f.bind = toml::get_string(*n, "bind").value_or(f.bind);
        f.transport = toml::get_string(*n, "transport").value_or(f.transport);
        if (auto k = toml::get_string(*n, "identity_key")) f.identity_key = resolve(*k);
        if (auto r = toml::get_string(*n, "reputation_file")) f.reputation_file = resolve(*r);
        if (auto a = toml::get_string(*n, "adapter_dir")) f.adapter_dir = resolve(*a);
        f.availability = toml::get_number(*n, "availability").value_or(1.0);
        f.seed = static_cast<std::uint64_t>(toml::get_integer(*n, "seed").value_or(1));
        NodeConfig& c = f.config;
        if (auto v = toml::get_integer(*n, "k")) c.k = static_cast<std::size_t>(*v);
        if (auto v = toml::get_integer(*n, "alpha")) c.alpha = static_cast<std::size_t>(*v);
        if (auto v = toml::get_number(*n, "skew_ms")) c.skew_us = static_cast<std::uint64_t>(*v * 1000);
        if (auto v = toml::get_number(*n, "lambda")) c.lambda = *v;
        if (auto v = toml::get_number(*n, "cache_ttl_s")) c.cache_ttl_us = static_cast<std::uint64_t>(*v * 1e6);
        if (auto v = toml::get_number(*n, "announce_interval_s"))
            c.announce_interval_us = static_cast<std::uint64_t>(*v * 1e6);
        if (auto v = toml::get_number(*n, "contract_lifetime_s"))
            c.contract_lifetime_us = static_cast<std::uint64_t>(*v * 1e6);
        if (c.k == 0 || c.alpha == 0) throw Error(Errc::ConfigError, "k and alpha must be positive");

        if (const auto* caps = toml::find(root, "capability")) {
            for (const auto& v : caps->as_array()) {
                const auto& t = v.as_table();
                ServedCapability sc;
                auto id = toml::get_string(t, "id");
                if (!id) throw Error(Errc::ConfigError, "line " + std::to_string(v.line) + ": capability without id");
                sc.capability.id = *id;
                sc.capability.schema = schema_from_name(toml::get_string(t, "schema").value_or("f32"));
                sc.capability.version = toml::get_string(t, "version").value_or("1.0.0");
                sc.capability.precision = toml::get_number(t, "precision").value_or(1.0);
                sc.capability.rate_hz = toml::get_number(t, "rate_hz").value_or(0.0);
                sc.handler = toml::get_string(t, "handler").value_or("constant");
                sc.value = toml::get_number(t, "value").value_or(0.0);
                sc.capability.check();
                f.capabilities.push_back(std::move(sc));
            }
        }
        if (const auto* peers = toml::find(root, "peer")) {
            for (const auto& v : peers->as_array()) {
                auto a = toml::get_string(v.as_table(), "address");
                if (!a) throw Error(Errc::ConfigError, "line " + std::to_string(v.line) + ": peer without address");
                f.peers.push_back(*a);
            }
        }
    } catch (const Error& e) {
        if (e.code() == Errc::ConfigError) throw Error(Errc::ConfigError, path + ": " + e.what());
        throw Error(Errc::ConfigError, path + ": " + std::string(errc_name(e.code())) + ": " + e.what());
    }
    if (f.identity_key) (void)read_identity_seed(*f.identity_key);  // fail early on a missing key
    return f;
}

cbor::Value toml_to_cbor(const toml::Value& v) {
    return std::visit(
        [](const auto& x) -> cbor::Value {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, toml::Array>) {
                cbor::Array a;
                for (const auto& e : x) a.push_back(toml_to_cbor(e));
                return cbor::Value(std::move(a));
            } else if constexpr (std::is_same_v<T, toml::Table>) {
                cbor::Map m;
                for (const auto& [k, e] : x) m.emplace_back(k, toml_to_cbor(e));
                return cbor::Value(cbor::canonical_map(std::move(m)));
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                return cbor::Value(static_cast<long long>(x));
            } else {
                return cbor::Value(x);
            }
        },
        v.data);
}

negotiation::Intent intent_from_toml(const toml::Table& t) {
    negotiation::Intent in;
    auto cap = toml::get_string(t, "capability");
    if (!cap || cap->empty()) throw Error(Errc::ConfigError, "intent needs 'capability'");
    in.capability_required = *cap;
    in.desired_schema = schema_from_name(toml::get_string(t, "schema").value_or("f32"));
    in.constraints.max_latency_ms = toml::get_number(t, "max_latency_ms");
    in.constraints.min_precision = toml::get_number(t, "min_precision");
    in.constraints.min_rate_hz = toml::get_number(t, "min_rate_hz");
    in.streaming = toml::get_bool(t, "streaming").value_or(false);
    in.wide_area = toml::get_bool(t, "wide_area").value_or(false);
    const auto* w = toml::find(t, "weights");
    const auto* ahp = toml::find(t, "ahp");
    if (w && ahp) throw Error(Errc::ConfigError, "give either 'weights' or 'ahp', not both");
    if (w) {
        const auto& arr = w->as_array();
        if (arr.size() != 4) throw Error(Errc::InvalidWeights, "weights needs four numbers");
        in.weights = negotiation::Weights::from_array(
            {arr[0].as_number(), arr[1].as_number(), arr[2].as_number(), arr[3].as_number()});
    } else if (ahp) {
        const auto& rows = ahp->as_array();
        if (rows.size() != 4) throw Error(Errc::ConfigError, "ahp needs a 4x4 matrix");
        negotiation::Matrix4 m{};
        for (std::size_t i = 0; i < 4; ++i) {
            const auto& r = rows[i].as_array();
            if (r.size() != 4) throw Error(Errc::ConfigError, "ahp needs a 4x4 matrix");
            for (std::size_t j = 0; j < 4; ++j) m[i][j] = r[j].as_number();
        }
        in.weights = negotiation::ahp_weights(m).weights;
    }
    in.weights.check();
    if (const auto* p = toml::find(t, "params")) in.params = toml_to_cbor(*p).as_map();
    return in;
}

negotiation::Intent load_intent_file(const std::string& path) {
    toml::Table root;
    try {
        root = toml::parse_file(path);
    } catch (const Error& e) {
        throw Error(Errc::ConfigError, path + ": " + e.what());
    }
    const toml::Table* t = toml::find_table(root, "intent");
    if (!t) throw Error(Errc::ConfigError, path + ": missing [intent] table");
    return intent_from_toml(*t);
}

std::size_t load_adapter_dir(adapter::AdapterRegistry& reg, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw Error(Errc::ConfigError, "adapter directory " + dir + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".toml") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) reg.get_or_compile(adapter::load_adapter_file(p.string()));
    return files.size();
}

}  // namespace tip
