#pragma once

// Intent lifecycle: discover -> score -> negotiate a dual-signed contract ->
// encrypted data exchange -> QoS monitoring and healing. Also the provider
// side of the same exchange.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tip/adapter.hpp"
#include "tip/discovery.hpp"
#include "tip/negotiation.hpp"
#include "tip/packet_io.hpp"

namespace tip::orchestrator {

struct Contract {
    Uuid contract_id;
    NodeId requester_id;
    NodeId provider_id;
    Capability capability;
    DataSchema agreed_schema = DataSchema::F32;
    std::optional<std::string> adapter_id;
    negotiation::Constraints qos;
    std::uint64_t expiry_us = 0;
    bool streaming = false;
    crypto::Signature requester_signature{};
    crypto::Signature provider_signature{};

    /// Canonical CBOR of every field except the signatures.
    Bytes body() const;
    /// MalformedCbor / SchemaMismatch.
    static Contract from_body(ByteView body);
    bool verify(const crypto::PublicKey& requester, const crypto::PublicKey& provider) const;
};

enum class State { Discovering, Scoring, Negotiating, Active, Healing, Closed, Failed };

std::string_view state_name(State s);

/// Discovering->Scoring->Negotiating->Active, Active->Healing->{Scoring,
/// Failed}, anything->Closed. While healing, Scoring and Negotiating may
/// also end in Failed.
bool legal_transition(State from, State to, bool healing);

struct Transition {
    std::uint64_t time_us = 0;
    std::uint64_t session = 0;
    State from = State::Discovering;
    State to = State::Discovering;
};

struct IntentSession {
    std::uint64_t id = 0;
    State state = State::Discovering;
    negotiation::Intent intent;
    std::optional<Contract> contract;
    std::optional<crypto::SessionKeys> keys;
    NodeRecord provider;
    std::deque<double> latency_window;  // last 8 response latencies, ms
    int violation_count = 0;
    bool healing = false;
    int heals = 0;
    std::set<NodeId> excluded;  // for the current healing round only
    std::vector<negotiation::ScoredCandidate> scores;
    std::optional<Errc> error;
    std::string error_message;
    std::uint64_t requests_sent = 0;
};

struct DataResult {
    std::uint64_t seq = 0;
    Errc error = Errc::Ok;
    std::string message;
    adapter::TypedValue value;            // in the intent's desired schema
    adapter::TypedValue raw;              // as the provider sent it
    bool translated = false;
    double latency_ms = 0;
    NodeId provider;
    bool ok() const { return error == Errc::Ok; }
};

/// Provider handler: request params -> value in the capability's schema.
/// A thrown tip::Error is returned to the requester as an error map.
using Handler = std::function<adapter::TypedValue(const cbor::Value& params)>;

/// Deliberate misbehaviour, for fault-injection tests.
struct ProviderFaults {
    bool omit_countersign = false;
    bool tamper_contract = false;
};

struct Context {
    io::PacketIo& io;
    NodeRecord& self;
    discovery::Discovery& discovery;
    discovery::LocalDiscovery& local;
    dht::Dht& dht;
    adapter::AdapterRegistry& adapters;
    negotiation::ReputationStore& reputation;
};

class Orchestrator {
public:
    using SessionFn = std::function<void(IntentSession&)>;
    using DataFn = std::function<void(const DataResult&)>;
    using TransitionFn = std::function<void(const Transition&)>;

    explicit Orchestrator(Context ctx);
    ~Orchestrator();
    Orchestrator(const Orchestrator&) = delete;
    Orchestrator& operator=(const Orchestrator&) = delete;

    /// Registers packet handlers and the decryptor.
    void attach();

    // --- provider side ---
    /// Adds the capability to this node's record and announces it on the
    /// link and in the DHT. DuplicateCapabilityId when already served.
    void serve(const Capability& cap, Handler handler);
    bool serves(const std::string& capability_id) const { return handlers_.count(capability_id) != 0; }
    ProviderFaults& faults() { return faults_; }
    /// Contracts this node signed as provider, by contract id.
    const std::map<Uuid, Contract>& provided_contracts() const;
    std::uint64_t handler_calls() const { return handler_calls_; }

    // --- requester side ---
    /// Starts a session; `done` fires once, when it is Active, Closed or
    /// Failed. InvalidWeights is thrown synchronously.
    std::uint64_t submit_intent(const negotiation::Intent& intent, SessionFn done);
    /// Results are delivered exactly once per call, in the order calls were
    /// made, even across a heal.
    std::uint64_t request_data(std::uint64_t session, const cbor::Value& params, DataFn done);
    /// Latency bookkeeping; true when the session must heal.
    bool monitor_qos(IntentSession& s, double latency_ms);
    void close(std::uint64_t session);

    IntentSession* session(std::uint64_t id);
    const std::map<std::uint64_t, std::unique_ptr<IntentSession>>& sessions() const { return sessions_; }
    void on_stream(DataFn fn) { stream_fn_ = std::move(fn); }
    void on_transition(TransitionFn fn) { transition_fn_ = std::move(fn); }
    const std::vector<Transition>& transitions() const { return transitions_; }

    /// Opens a sealed payload from `peer` with whichever session fits.
    std::optional<Bytes> open(const NodeId& peer, const wire::TipPacket& packet);

private:
    struct Offer;         // provider: negotiation in progress
    struct Provided;      // provider: signed contract plus keys
    struct Negotiation;   // requester: one candidate attempt
    struct PendingData;   // requester: one request_data call

    void set_state(IntentSession& s, State to);
    void finish(IntentSession& s);
    void fail(IntentSession& s, Errc code, const std::string& msg);
    void end(IntentSession& s, State terminal, Errc code, const std::string& msg);
    void run_discovery(std::uint64_t sid);
    void probe_and_score(std::uint64_t sid, std::vector<NodeRecord> nodes);
    void try_candidate(std::uint64_t sid, std::size_t index);
    void on_proposal(std::uint64_t sid, std::size_t index, const Uuid& txid, const io::Inbound* in,
                     std::shared_ptr<crypto::X25519Keypair> eph);
    void on_signed(const io::Inbound& in);
    void negotiation_failed(std::uint64_t sid, std::size_t index, Errc code, const std::string& why);
    void start_heal(IntentSession& s, const std::string& reason);
    void dispatch(std::uint64_t sid, std::shared_ptr<PendingData> p);
    void flush_queue(IntentSession& s);
    void on_data_reply(std::uint64_t sid, std::shared_ptr<PendingData> p, std::uint64_t sent_us, const io::Inbound* in);
    void deliver(std::shared_ptr<PendingData> p, DataResult r);
    DataResult interpret(IntentSession& s, const io::Inbound& in);

    void on_intent_request(const io::Inbound& in);
    void on_contract_accept(const io::Inbound& in);
    void on_data_request(const io::Inbound& in);
    void on_data_push(const io::Inbound& in);
    void send_signed(const Provided& p, const std::string& to);
    void schedule_stream(const Uuid& contract_id);

    Context ctx_;
    std::map<std::string, Handler> handlers_;
    ProviderFaults faults_;
    std::map<Uuid, std::shared_ptr<Offer>> offers_;
    std::map<Uuid, std::shared_ptr<Provided>> provided_;
    mutable std::map<Uuid, Contract> provided_view_;
    std::uint64_t handler_calls_ = 0;

    std::map<std::uint64_t, std::unique_ptr<IntentSession>> sessions_;
    std::map<std::uint64_t, SessionFn> session_done_;
    std::map<Uuid, std::shared_ptr<Negotiation>> negotiations_;  // by txid
    std::map<std::uint64_t, std::vector<negotiation::ScoredCandidate>> viable_;
    std::map<std::uint64_t, std::deque<std::shared_ptr<PendingData>>> queued_;  // waiting for Active
    std::map<std::uint64_t, std::deque<std::shared_ptr<PendingData>>> in_order_;  // delivery order
    std::uint64_t next_session_ = 1;
    std::uint64_t next_seq_ = 1;
    DataFn stream_fn_;
    TransitionFn transition_fn_;
    std::vector<Transition> transitions_;
    std::shared_ptr<bool> alive_;
};

}  // namespace tip::orchestrator
