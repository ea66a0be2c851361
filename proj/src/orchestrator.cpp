#include "tip/orchestrator.hpp"

#include <algorithm>

#include "tip/error.hpp"
#include "tip/log.hpp"

namespace tip::orchestrator {

namespace {

constexpr std::size_t kLatencyWindow = 8;

cbor::Value qos_to_cbor(const negotiation::Constraints& c) {
    cbor::Map m;
    if (c.max_latency_ms) m.emplace_back("max_latency_ms", *c.max_latency_ms);
    if (c.min_precision) m.emplace_back("min_precision", *c.min_precision);
    if (c.min_rate_hz) m.emplace_back("min_rate_hz", *c.min_rate_hz);
    return cbor::Value(cbor::canonical_map(std::move(m)));
}

negotiation::Constraints qos_from_cbor(const cbor::Value& v) {
    negotiation::Constraints c;
    if (const auto* x = v.find("max_latency_ms")) c.max_latency_ms = x->as_double();
    if (const auto* x = v.find("min_precision")) c.min_precision = x->as_double();
    if (const auto* x = v.find("min_rate_hz")) c.min_rate_hz = x->as_double();
    return c;
}

std::vector<std::pair<std::string, double>> constraint_pairs(const negotiation::Constraints& c) {
    std::vector<std::pair<std::string, double>> out;
    if (c.max_latency_ms) out.emplace_back("max_latency_ms", *c.max_latency_ms);
    if (c.min_precision) out.emplace_back("min_precision", *c.min_precision);
    if (c.min_rate_hz) out.emplace_back("min_rate_hz", *c.min_rate_hz);
    return out;
}

std::vector<std::pair<std::string, double>> weight_pairs(const negotiation::Weights& w) {
    return {{"w_func", w.func}, {"w_cost", w.cost}, {"w_trust", w.trust}, {"w_avail", w.avail}};
}

wire::HeaderFields fields_of(const wire::PacketHeader& h) {
    wire::HeaderFields f;
    f.packet_type = h.packet_type;
    f.transaction_id = h.transaction_id;
    f.capability_hash = h.capability_hash;
    f.sequence_number = h.sequence_number;
    f.flags = h.flags;
    f.timestamp_us = h.timestamp_us;
    f.ttl_ms = h.ttl_ms;
    return f;
}

cbor::Value error_map(Errc code, const std::string& message) {
    return cbor::Value(cbor::canonical_map({{"code", static_cast<int>(code)},
                                            {"error", std::string(errc_name(code))},
                                            {"message", message}}));
}

std::uint32_t cap_hash(const std::string& id) { return id.empty() ? 0 : wire::capability_hash(id); }

}  // namespace

// --- contract ---------------------------------------------------------------

Bytes Contract::body() const {
    cbor::Map m{{0, ByteView(contract_id.bytes)},
                {1, ByteView(requester_id.bytes)},
                {2, ByteView(provider_id.bytes)},
                {3, capability.to_cbor()},
                {4, static_cast<unsigned>(agreed_schema)},
                {5, adapter_id ? cbor::Value(*adapter_id) : cbor::Value()},
                {6, qos_to_cbor(qos)},
                {7, static_cast<unsigned long long>(expiry_us)},
                {8, streaming}};
    return cbor::encode(cbor::Value(cbor::canonical_map(std::move(m))));
}

Contract Contract::from_body(ByteView body) {
    cbor::Value v = cbor::decode(body);
    if (!v.is_map()) throw Error(Errc::SchemaMismatch, "contract body is not a map");
    Contract c;
    const Bytes& id = v.at(0).as_bytes();
    if (id.size() != 16) throw Error(Errc::SchemaMismatch, "contract id must be 16 bytes");
    std::copy(id.begin(), id.end(), c.contract_id.bytes.begin());
    const Bytes& req = v.at(1).as_bytes();
    const Bytes& prov = v.at(2).as_bytes();
    if (req.size() != 32 || prov.size() != 32) throw Error(Errc::SchemaMismatch, "node ids must be 32 bytes");
    c.requester_id = Key256::from(req);
    c.provider_id = Key256::from(prov);
    c.capability = Capability::from_cbor(v.at(3));
    c.agreed_schema = schema_from_code(v.at(4).as_uint());
    if (const auto& a = v.at(5); !a.is_null()) c.adapter_id = a.as_text();
    c.qos = qos_from_cbor(v.at(6));
    c.expiry_us = v.at(7).as_uint();
    c.streaming = v.at(8).as_bool();
    return c;
}

bool Contract::verify(const crypto::PublicKey& requester, const crypto::PublicKey& provider) const {
    Bytes b = body();
    return crypto::verify(requester, b, requester_signature) && crypto::verify(provider, b, provider_signature);
}

std::string_view state_name(State s) {
    switch (s) {
        case State::Discovering: return "Discovering";
        case State::Scoring: return "Scoring";
        case State::Negotiating: return "Negotiating";
        case State::Active: return "Active";
        case State::Healing: return "Healing";
        case State::Closed: return "Closed";
        case State::Failed: return "Failed";
    }
    return "?";
}

bool legal_transition(State from, State to, bool healing) {
    if (to == State::Closed) return from != State::Closed;
    switch (from) {
        case State::Discovering: return to == State::Scoring;
        case State::Scoring: return to == State::Negotiating || (healing && to == State::Failed);
        case State::Negotiating: return to == State::Active || (healing && to == State::Failed);
        case State::Active: return to == State::Healing;
        case State::Healing: return to == State::Scoring || to == State::Failed;
        default: return false;
    }
}

// --- internal records -------------------------------------------------------

struct Orchestrator::Offer {
    crypto::X25519Keypair ephemeral;
    crypto::PublicKey requester_key{};
    Capability capability;
};

struct Orchestrator::Provided {
    Contract contract;
    Bytes body;
    crypto::SessionKeys keys;
    std::string requester_address;
};

struct Orchestrator::Negotiation {
    std::uint64_t session = 0;
    std::size_t index = 0;
    Contract contract;
    Bytes body;
    crypto::SessionKeys keys;
    NodeRecord provider;
    std::string address;
    net::TimerId deadline = 0;
};

struct Orchestrator::PendingData {
    std::uint64_t seq = 0;
    std::uint64_t session = 0;
    cbor::Value params;
    DataFn done;
    bool retried = false;
    std::optional<Uuid> contract;  // contract the latest attempt went to
    std::optional<DataResult> result;
    bool delivered = false;
};

Orchestrator::Orchestrator(Context ctx) : ctx_(ctx), alive_(std::make_shared<bool>(true)) {}

Orchestrator::~Orchestrator() {
    for (auto& [txid, n] : negotiations_) ctx_.io.transport().cancel(n->deadline);
}

void Orchestrator::attach() {
    using wire::PacketType;
    ctx_.io.on(PacketType::IntentRequest, [this](const io::Inbound& in) { on_intent_request(in); });
    ctx_.io.on(PacketType::ContractAccept, [this](const io::Inbound& in) { on_contract_accept(in); });
    ctx_.io.on(PacketType::ContractSigned, [this](const io::Inbound& in) { on_signed(in); });
    ctx_.io.on(PacketType::DataRequest, [this](const io::Inbound& in) { on_data_request(in); });
    ctx_.io.on(PacketType::DataResponse, [this](const io::Inbound& in) { on_data_push(in); });
    ctx_.io.set_decryptor(
        [this](const NodeId& peer, const wire::TipPacket& p) -> std::optional<Bytes> { return open(peer, p); });
}

std::optional<Bytes> Orchestrator::open(const NodeId& peer, const wire::TipPacket& packet) {
    auto aad = wire::aad_header(fields_of(packet.header), packet.header.payload_length);
    auto attempt = [&](const crypto::SessionKeys& keys) -> std::optional<Bytes> {
        try {
            return crypto::open(keys, packet.payload, aad);
        } catch (const Error&) {
            return std::nullopt;
        }
    };
    for (const auto& [id, s] : sessions_) {
        if (s->contract && s->keys && s->contract->provider_id == peer)
            if (auto r = attempt(*s->keys)) return r;
    }
    for (const auto& [id, p] : provided_) {
        if (p->contract.requester_id == peer)
            if (auto r = attempt(p->keys)) return r;
    }
    return std::nullopt;
}

// --- provider side ----------------------------------------------------------

void Orchestrator::serve(const Capability& cap, Handler handler) {
    cap.check();
    if (handlers_.count(cap.id))
        throw Error(Errc::DuplicateCapabilityId, "capability " + cap.id + " is already served by this node");
    handlers_[cap.id] = std::move(handler);
    ctx_.self.capabilities.push_back(cap);
    ctx_.local.announce();
    try {
        ctx_.dht.publish(cap.id);
    } catch (const Error& e) {
        if (e.code() != Errc::NoPeers) throw;  // stored locally; republished once peers are known
    }
    log::info("capability_served", {{"node", ctx_.self.node_id.hex().substr(0, 16)}, {"capability", cap.id}});
}

const std::map<Uuid, Contract>& Orchestrator::provided_contracts() const {
    provided_view_.clear();
    for (const auto& [id, p] : provided_) provided_view_.emplace(id, p->contract);
    return provided_view_;
}

void Orchestrator::on_intent_request(const io::Inbound& in) {
    const auto* req = std::get_if<payload::IntentRequest>(&in.message);
    if (!req) return;
    payload::IntentProposal prop;
    io::SendOptions opts;
    opts.transaction_id = in.txid();
    opts.capability_hash = in.packet.header.capability_hash;
    const Capability* cap = ctx_.self.find_capability(req->capability_id);
    if (!cap || !handlers_.count(req->capability_id)) {
        prop.capability.id = req->capability_id;
        prop.reject_reason = "capability not served";
        ctx_.io.send(in.from, wire::PacketType::IntentProposal, prop, opts);
        return;
    }
    auto& offer = offers_[in.txid()];
    if (!offer) {
        offer = std::make_shared<Offer>();
        offer->ephemeral = crypto::X25519Keypair::generate(ctx_.io.rng());
        offer->requester_key = in.sender_key;
        offer->capability = *cap;
        std::weak_ptr<bool> alive = alive_;
        Uuid txid = in.txid();
        // Offers that never turn into a contract are forgotten.
        ctx_.io.transport().schedule(ctx_.io.config().rpc_timeout_us * 20, [this, alive, txid] {
            if (!alive.expired()) offers_.erase(txid);
        });
    }
    prop.capability = *cap;
    prop.availability = ctx_.self.availability;
    prop.adapter_required = cap->schema != req->desired_schema;
    prop.ephemeral = crypto::sign_ephemeral(ctx_.io.identity().key, in.txid(), offer->ephemeral.public_key);
    ctx_.io.send(in.from, wire::PacketType::IntentProposal, prop, opts);
}

void Orchestrator::on_contract_accept(const io::Inbound& in) {
    const auto* msg = std::get_if<payload::ContractMessage>(&in.message);
    if (!msg) return;
    const Uuid txid = in.txid();
    if (auto it = provided_.find(txid); it != provided_.end()) {
        // Retransmitted ACCEPT (our ack or SIGNED was lost): answer again.
        if (it->second->contract.requester_id == in.sender_id && !faults_.omit_countersign)
            send_signed(*it->second, in.from);
        return;
    }
    auto reject = [&](const std::string& why) {
        payload::ContractMessage r;
        r.body = msg->body;
        r.reject_reason = why;
        io::SendOptions o;
        o.transaction_id = txid;
        ctx_.io.send(in.from, wire::PacketType::ContractSigned, r, o);
        log::warn("contract_rejected", {{"reason", why}});
    };
    auto oit = offers_.find(txid);
    if (oit == offers_.end()) return reject("no open proposal for this transaction");
    const Offer& offer = *oit->second;
    if (!msg->signature || !crypto::verify(in.sender_key, msg->body, *msg->signature))
        return reject("requester signature does not verify");
    if (!msg->ephemeral) return reject("missing requester ephemeral key");
    Contract c;
    try {
        c = Contract::from_body(msg->body);
    } catch (const Error& e) {
        return reject(std::string("malformed contract: ") + e.what());
    }
    if (c.contract_id != txid) return reject("contract id differs from transaction id");
    if (c.provider_id != ctx_.self.node_id) return reject("contract names another provider");
    if (c.requester_id != in.sender_id) return reject("contract names another requester");
    if (!(c.capability == offer.capability)) return reject("contract capability differs from the offer");
    if (c.expiry_us <= ctx_.io.now()) return reject("contract already expired");
    crypto::SessionKeys keys;
    try {
        keys = crypto::accept_ephemeral(crypto::Role::Responder, offer.ephemeral, *msg->ephemeral, in.sender_key, txid);
    } catch (const Error& e) {
        return reject(std::string("ephemeral key rejected: ") + e.what());
    }
    c.requester_signature = *msg->signature;
    c.provider_signature = crypto::sign(ctx_.io.identity().key, msg->body);
    auto p = std::make_shared<Provided>(Provided{c, msg->body, keys, in.from});
    provided_[txid] = p;
    offers_.erase(oit);
    log::info("contract_signed", {{"role", "provider"}, {"contract", txid.hex()}, {"capability", c.capability.id}});

    std::weak_ptr<bool> alive = alive_;
    const std::uint64_t remaining = c.expiry_us - ctx_.io.now();
    ctx_.io.transport().schedule(remaining, [this, alive, txid] {
        if (!alive.expired()) provided_.erase(txid);
    });
    if (faults_.omit_countersign) return;
    send_signed(*p, in.from);
    if (c.streaming) schedule_stream(txid);
}

void Orchestrator::send_signed(const Provided& p, const std::string& to) {
    payload::ContractMessage m;
    m.body = p.body;
    if (faults_.tamper_contract && !m.body.empty()) m.body.back() ^= 0x01;
    m.signature = p.contract.provider_signature;
    io::SendOptions o;
    o.transaction_id = p.contract.contract_id;
    o.capability_hash = cap_hash(p.contract.capability.id);
    ctx_.io.send_reliable(to, wire::PacketType::ContractSigned, m, {}, o);
}

void Orchestrator::on_data_request(const io::Inbound& in) {
    const auto* req = std::get_if<payload::DataRequest>(&in.message);
    if (!req) return;
    auto it = provided_.find(req->contract_id);
    if (it == provided_.end() || it->second->contract.requester_id != in.sender_id) return;
    Provided& p = *it->second;
    payload::DataResponse resp;
    resp.contract_id = req->contract_id;
    io::SendOptions opts;
    opts.transaction_id = in.txid();
    opts.session = &p.keys;
    opts.capability_hash = in.packet.header.capability_hash;
    if (ctx_.io.now() >= p.contract.expiry_us) {
        resp.value = error_map(Errc::ContractExpired, "contract expired");
    } else {
        ++handler_calls_;
        try {
            adapter::TypedValue v = handlers_.at(p.contract.capability.id)(req->params);
            resp.value = v.value;
            resp.schema = v.schema;
            if (v.schema != p.contract.agreed_schema) opts.flags |= wire::flags::kHasAdapter;
        } catch (const Error& e) {
            resp.value = error_map(e.code(), e.what());
        } catch (const std::exception& e) {
            resp.value = error_map(Errc::ProviderError, e.what());
        }
    }
    ctx_.io.send(in.from, wire::PacketType::DataResponse, resp, opts);
}

void Orchestrator::schedule_stream(const Uuid& contract_id) {
    auto it = provided_.find(contract_id);
    if (it == provided_.end()) return;
    double rate = it->second->contract.capability.rate_hz;
    auto period = static_cast<std::uint64_t>(rate > 0 ? 1e6 / rate : 1e6);
    std::weak_ptr<bool> alive = alive_;
    ctx_.io.transport().schedule(period, [this, alive, contract_id] {
        if (alive.expired()) return;
        auto it = provided_.find(contract_id);
        if (it == provided_.end()) return;
        Provided& p = *it->second;
        if (ctx_.io.now() >= p.contract.expiry_us) return;
        payload::DataResponse resp;
        resp.contract_id = contract_id;
        io::SendOptions opts;
        opts.transaction_id = contract_id;
        opts.session = &p.keys;
        opts.flags = wire::flags::kIsStreaming;
        opts.capability_hash = cap_hash(p.contract.capability.id);
        try {
            ++handler_calls_;
            auto v = handlers_.at(p.contract.capability.id)(cbor::Value(cbor::Map{}));
            resp.value = v.value;
            resp.schema = v.schema;
            if (v.schema != p.contract.agreed_schema) opts.flags |= wire::flags::kHasAdapter;
        } catch (const Error& e) {
            resp.value = error_map(e.code(), e.what());
        }
        ctx_.io.send(p.requester_address, wire::PacketType::DataResponse, resp, opts);
        schedule_stream(contract_id);
    });
}

// --- requester side: lifecycle ---------------------------------------------

IntentSession* Orchestrator::session(std::uint64_t id) {
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second.get();
}

void Orchestrator::set_state(IntentSession& s, State to) {
    if (!legal_transition(s.state, to, s.healing))
        throw Error(Errc::IllegalTransition,
                    std::string(state_name(s.state)) + " -> " + std::string(state_name(to)) + " is not allowed");
    Transition t{ctx_.io.now(), s.id, s.state, to};
    s.state = to;
    transitions_.push_back(t);
    log::debug("session_state", {{"session", s.id}, {"from", std::string(state_name(t.from))},
                                 {"to", std::string(state_name(to))}});
    if (transition_fn_) transition_fn_(t);
}

void Orchestrator::finish(IntentSession& s) {
    auto it = session_done_.find(s.id);
    if (it == session_done_.end()) return;
    auto fn = std::move(it->second);
    session_done_.erase(it);
    if (fn) fn(s);
}

void Orchestrator::end(IntentSession& s, State terminal, Errc code, const std::string& msg) {
    s.error = code;
    s.error_message = msg;
    set_state(s, terminal);
    log::warn("session_ended", {{"session", s.id}, {"state", std::string(state_name(terminal))},
                                {"error", std::string(errc_name(code))}, {"message", msg}});
    auto queued = std::move(queued_[s.id]);
    queued_.erase(s.id);
    for (auto& p : queued) {
        DataResult r;
        r.seq = p->seq;
        r.error = code;
        r.message = msg;
        deliver(p, r);
    }
    finish(s);
}

void Orchestrator::fail(IntentSession& s, Errc code, const std::string& msg) { end(s, State::Failed, code, msg); }

std::uint64_t Orchestrator::submit_intent(const negotiation::Intent& intent, SessionFn done) {
    intent.weights.check();
    if (intent.capability_required.empty()) throw Error(Errc::EmptyCapability, "intent names no capability");
    auto s = std::make_unique<IntentSession>();
    s->id = next_session_++;
    s->intent = intent;
    const std::uint64_t sid = s->id;
    sessions_[sid] = std::move(s);
    session_done_[sid] = std::move(done);
    log::info("intent_submitted", {{"session", sid}, {"capability", intent.capability_required}});
    run_discovery(sid);
    return sid;
}

void Orchestrator::run_discovery(std::uint64_t sid) {
    IntentSession* s = session(sid);
    discovery::DiscoverOptions opts;
    opts.bypass_cache = s->healing;
    opts.wide_area = s->intent.wide_area;
    opts.exclude = s->excluded;
    std::weak_ptr<bool> alive = alive_;
    ctx_.discovery.discover(s->intent.capability_required, opts,
                            [this, alive, sid](std::vector<NodeRecord> nodes, discovery::DiscoverStats) {
                                if (alive.expired()) return;
                                IntentSession* s = session(sid);
                                if (!s || s->state == State::Closed || s->state == State::Failed) return;
                                std::erase_if(nodes, [&](const NodeRecord& n) {
                                    return n.node_id == ctx_.self.node_id || s->excluded.count(n.node_id) ||
                                           n.addresses.empty();
                                });
                                if (nodes.empty()) {
                                    if (s->healing)
                                        fail(*s, Errc::NoAlternateProvider, "no alternate provider found");
                                    else
                                        end(*s, State::Closed, Errc::NoProviders,
                                            "no provider for " + s->intent.capability_required);
                                    return;
                                }
                                probe_and_score(sid, std::move(nodes));
                            });
}

void Orchestrator::probe_and_score(std::uint64_t sid, std::vector<NodeRecord> nodes) {
    IntentSession& s0 = *session(sid);
    set_state(s0, State::Scoring);

    // RTT probe: an empty DISCOVERY_QUERY with REQUIRES_ACK; the ack is the reply.
    struct Probe {
        std::vector<NodeRecord> nodes;
        std::vector<std::optional<double>> rtt;
        std::size_t outstanding = 0;
    };
    auto probe = std::make_shared<Probe>();
    probe->nodes = std::move(nodes);
    probe->rtt.resize(probe->nodes.size());
    probe->outstanding = probe->nodes.size();
    std::weak_ptr<bool> alive = alive_;

    auto complete = [this, alive, sid, probe] {
        if (alive.expired()) return;
        IntentSession* s = session(sid);
        if (!s || s->state != State::Scoring) return;
        std::vector<negotiation::CandidateInput> inputs;
        for (std::size_t i = 0; i < probe->nodes.size(); ++i) {
            if (!probe->rtt[i]) continue;  // unreachable
            const NodeRecord& n = probe->nodes[i];
            const Capability* cap = n.find_capability(s->intent.capability_required);
            if (!cap) continue;
            negotiation::CandidateInput c;
            c.node = n;
            c.capability = *cap;
            c.rtt_ms = *probe->rtt[i];
            c.availability = n.availability;
            c.reputation = ctx_.reputation.get(n.node_id);
            c.adapter_available =
                cap->schema == s->intent.desired_schema || ctx_.adapters.find(cap->schema, s->intent.desired_schema);
            inputs.push_back(std::move(c));
        }
        std::vector<negotiation::ScoredCandidate> viable;
        if (!inputs.empty()) {
            s->scores = negotiation::score(s->intent, inputs, ctx_.io.now(), ctx_.reputation.lambda());
            for (const auto& c : s->scores)
                if (c.u_func > 0.0) viable.push_back(c);
        }
        if (viable.empty()) {
            if (s->healing)
                fail(*s, Errc::NoAlternateProvider, "no acceptable alternate provider");
            else
                end(*s, State::Closed, inputs.empty() ? Errc::NoProviders : Errc::AllCandidatesRejected,
                    "no candidate satisfies the intent");
            return;
        }
        viable_[sid] = std::move(viable);
        set_state(*s, State::Negotiating);
        try_candidate(sid, 0);
    };

    for (std::size_t i = 0; i < probe->nodes.size(); ++i) {
        const NodeRecord& n = probe->nodes[i];
        ctx_.io.learn_peer(n.primary_address(), n.signing_public);
        const std::uint64_t start = ctx_.io.now();
        ctx_.io.request(
            n.primary_address(), wire::PacketType::DiscoveryQuery, payload::DiscoveryQuery{},
            [this, alive, probe, i, start, complete](const io::Inbound* in) {
                if (alive.expired()) return;
                if (in) probe->rtt[i] = static_cast<double>(ctx_.io.now() - start) / 1000.0;
                if (--probe->outstanding == 0) complete();
            },
            ctx_.io.config().rpc_timeout_us, {}, true);
    }
}

void Orchestrator::try_candidate(std::uint64_t sid, std::size_t index) {
    IntentSession* s = session(sid);
    if (!s || s->state != State::Negotiating) return;
    const auto& viable = viable_[sid];
    if (index >= viable.size()) {
        std::string why = "every candidate failed negotiation";
        if (!s->error_message.empty()) why += " (last: " + s->error_message + ")";
        if (s->healing)
            fail(*s, Errc::NoAlternateProvider, why);
        else
            end(*s, State::Closed, Errc::AllCandidatesRejected, why);
        return;
    }
    const auto& cand = viable[index];
    const auto& in = s->intent;
    payload::IntentRequest req;
    req.capability_id = in.capability_required;
    req.desired_schema = in.desired_schema;
    req.params = in.params;
    req.constraints = constraint_pairs(in.constraints);
    req.weights = weight_pairs(in.weights);
    req.wants_streaming = in.streaming;

    Uuid txid = Uuid::v4(ctx_.io.rng());
    io::SendOptions opts;
    opts.transaction_id = txid;
    opts.capability_hash = cap_hash(in.capability_required);
    auto eph = std::make_shared<crypto::X25519Keypair>(crypto::X25519Keypair::generate(ctx_.io.rng()));
    std::weak_ptr<bool> alive = alive_;
    ctx_.io.request(
        cand.node.primary_address(), wire::PacketType::IntentRequest, req,
        [this, alive, sid, index, txid, eph](const io::Inbound* reply) {
            if (!alive.expired()) on_proposal(sid, index, txid, reply, eph);
        },
        ctx_.io.config().rpc_timeout_us, opts);
}

void Orchestrator::negotiation_failed(std::uint64_t sid, std::size_t index, Errc code, const std::string& why) {
    IntentSession* s = session(sid);
    if (!s) return;
    s->error_message = std::string(errc_name(code)) + ": " + why;
    log::info("candidate_failed", {{"session", sid}, {"index", static_cast<std::uint64_t>(index)},
                                   {"error", std::string(errc_name(code))}, {"reason", why}});
    try_candidate(sid, index + 1);
}

void Orchestrator::on_proposal(std::uint64_t sid, std::size_t index, const Uuid& txid, const io::Inbound* in,
                               std::shared_ptr<crypto::X25519Keypair> eph) {
    IntentSession* s = session(sid);
    if (!s || s->state != State::Negotiating) return;
    if (!in) return negotiation_failed(sid, index, Errc::ProposalTimeout, "no proposal");
    const auto* prop = std::get_if<payload::IntentProposal>(&in->message);
    if (!prop) return negotiation_failed(sid, index, Errc::ContractRejected, "reply is not a proposal");
    if (prop->reject_reason) return negotiation_failed(sid, index, Errc::ContractRejected, *prop->reject_reason);
    if (!prop->ephemeral) return negotiation_failed(sid, index, Errc::ContractRejected, "proposal lacks a key");
    const auto& cand = viable_[sid].at(index);
    if (in->sender_id != cand.node.node_id)
        return negotiation_failed(sid, index, Errc::BadSignature, "proposal from an unexpected node");
    const auto& want = s->intent.constraints;
    if (prop->capability.id != s->intent.capability_required ||
        (want.min_precision && prop->capability.precision < *want.min_precision) ||
        (want.min_rate_hz && prop->capability.rate_hz < *want.min_rate_hz))
        return negotiation_failed(sid, index, Errc::ContractRejected, "proposal violates a hard constraint");

    auto n = std::make_shared<Negotiation>();
    try {
        n->keys = crypto::accept_ephemeral(crypto::Role::Initiator, *eph, *prop->ephemeral, in->sender_key, txid);
    } catch (const Error& e) {
        return negotiation_failed(sid, index, e.code(), e.what());
    }
    Contract& c = n->contract;
    c.contract_id = txid;
    c.requester_id = ctx_.self.node_id;
    c.provider_id = in->sender_id;
    c.capability = prop->capability;
    c.agreed_schema = s->intent.desired_schema;
    if (c.capability.schema != c.agreed_schema) {
        auto a = ctx_.adapters.find(c.capability.schema, c.agreed_schema);
        if (!a) return negotiation_failed(sid, index, Errc::TranslationError, "no adapter for the provider schema");
        c.adapter_id = a->spec.id;
    }
    c.qos = s->intent.constraints;
    c.expiry_us = ctx_.io.now() + ctx_.io.config().contract_lifetime_us;
    c.streaming = s->intent.streaming;
    n->body = c.body();
    c.requester_signature = crypto::sign(ctx_.io.identity().key, n->body);
    n->session = sid;
    n->index = index;
    n->provider = cand.node;
    n->address = in->from;

    payload::ContractMessage accept;
    accept.body = n->body;
    accept.signature = c.requester_signature;
    accept.ephemeral = crypto::sign_ephemeral(ctx_.io.identity().key, txid, eph->public_key);
    io::SendOptions opts;
    opts.transaction_id = txid;
    opts.capability_hash = cap_hash(c.capability.id);

    const auto& cfg = ctx_.io.config();
    std::weak_ptr<bool> alive = alive_;
    n->deadline = ctx_.io.transport().schedule(
        cfg.rpc_timeout_us + static_cast<std::uint64_t>(cfg.ack_retries + 1) * cfg.ack_timeout_us,
        [this, alive, txid] {
            if (alive.expired()) return;
            auto it = negotiations_.find(txid);
            if (it == negotiations_.end()) return;
            auto neg = it->second;
            negotiations_.erase(it);
            negotiation_failed(neg->session, neg->index, Errc::ProposalTimeout, "no countersignature");
        });
    negotiations_[txid] = n;
    ctx_.io.send_reliable(in->from, wire::PacketType::ContractAccept, accept, {}, opts);
}

void Orchestrator::on_signed(const io::Inbound& in) {
    const auto* msg = std::get_if<payload::ContractMessage>(&in.message);
    if (!msg) return;
    auto it = negotiations_.find(in.txid());
    if (it == negotiations_.end()) return;  // duplicate or late
    auto n = it->second;
    if (in.sender_id != n->contract.provider_id) return;
    negotiations_.erase(it);
    ctx_.io.transport().cancel(n->deadline);
    if (msg->reject_reason) return negotiation_failed(n->session, n->index, Errc::ContractRejected, *msg->reject_reason);
    if (msg->body != n->body || !msg->signature || !crypto::verify(in.sender_key, msg->body, *msg->signature))
        return negotiation_failed(n->session, n->index, Errc::BadSignature, "countersignature does not verify");

    IntentSession* s = session(n->session);
    if (!s || s->state != State::Negotiating) return;
    n->contract.provider_signature = *msg->signature;
    s->contract = n->contract;
    s->keys = n->keys;
    s->provider = n->provider;
    s->violation_count = 0;
    s->latency_window.clear();
    s->error.reset();
    s->error_message.clear();
    set_state(*s, State::Active);
    log::info("contract_signed", {{"role", "requester"}, {"session", s->id}, {"contract", n->contract.contract_id.hex()},
                                  {"provider", n->provider.node_id.hex().substr(0, 16)}});
    if (s->healing) {
        s->healing = false;
        s->excluded.clear();
        ++s->heals;
        log::info("session_healed", {{"session", s->id}, {"heals", static_cast<std::int64_t>(s->heals)}});
    }
    flush_queue(*s);
    finish(*s);
}

void Orchestrator::close(std::uint64_t sid) {
    IntentSession* s = session(sid);
    if (!s || s->state == State::Closed) return;
    set_state(*s, State::Closed);
    auto queued = std::move(queued_[sid]);
    queued_.erase(sid);
    for (auto& p : queued) {
        DataResult r;
        r.seq = p->seq;
        r.error = Errc::SessionNotActive;
        r.message = "session closed";
        deliver(p, r);
    }
    finish(*s);
}

// --- requester side: data ---------------------------------------------------

bool Orchestrator::monitor_qos(IntentSession& s, double latency_ms) {
    s.latency_window.push_back(latency_ms);
    while (s.latency_window.size() > kLatencyWindow) s.latency_window.pop_front();
    const auto& max = s.intent.constraints.max_latency_ms;
    if (max && latency_ms > *max)
        ++s.violation_count;
    else
        s.violation_count = 0;
    return s.state == State::Active && s.violation_count >= ctx_.io.config().heal_threshold;
}

void Orchestrator::start_heal(IntentSession& s, const std::string& reason) {
    if (s.state != State::Active) return;
    s.healing = true;
    set_state(s, State::Healing);
    log::warn("session_healing", {{"session", s.id}, {"reason", reason},
                                  {"provider", s.provider.node_id.hex().substr(0, 16)}});
    ctx_.reputation.record(s.provider.node_id, false, ctx_.io.now());
    s.excluded = {s.provider.node_id};
    run_discovery(s.id);
}

std::uint64_t Orchestrator::request_data(std::uint64_t sid, const cbor::Value& params, DataFn done) {
    auto p = std::make_shared<PendingData>();
    p->seq = next_seq_++;
    p->session = sid;
    p->params = params;
    p->done = std::move(done);
    in_order_[sid].push_back(p);
    IntentSession* s = session(sid);
    auto refuse = [&](Errc code, const std::string& why) {
        DataResult r;
        r.seq = p->seq;
        r.error = code;
        r.message = why;
        deliver(p, r);
    };
    if (!s) {
        refuse(Errc::SessionNotActive, "unknown session");
    } else if (s->state == State::Active) {
        dispatch(sid, p);
    } else if (s->state == State::Closed || s->state == State::Failed) {
        refuse(s->error.value_or(Errc::SessionNotActive), "session is " + std::string(state_name(s->state)));
    } else {
        queued_[sid].push_back(p);  // resumes once the session is (again) Active
    }
    return p->seq;
}

void Orchestrator::flush_queue(IntentSession& s) {
    auto queued = std::move(queued_[s.id]);
    queued_.erase(s.id);
    for (auto& p : queued) dispatch(s.id, p);
}

void Orchestrator::dispatch(std::uint64_t sid, std::shared_ptr<PendingData> p) {
    IntentSession& s = *session(sid);
    const Contract& c = *s.contract;
    if (ctx_.io.now() >= c.expiry_us) {
        DataResult r;
        r.seq = p->seq;
        r.error = Errc::ContractExpired;
        r.message = "contract expired";
        deliver(p, r);
        return;
    }
    payload::DataRequest req{c.contract_id, p->params};
    io::SendOptions opts;
    opts.session = &*s.keys;
    opts.capability_hash = cap_hash(c.capability.id);
    p->contract = c.contract_id;
    const std::uint64_t sent = ctx_.io.now();
    ++s.requests_sent;
    std::weak_ptr<bool> alive = alive_;
    ctx_.io.request(
        s.provider.primary_address(), wire::PacketType::DataRequest, req,
        [this, alive, sid, p, sent](const io::Inbound* in) {
            if (!alive.expired()) on_data_reply(sid, p, sent, in);
        },
        ctx_.io.config().data_timeout_us, opts);
}

void Orchestrator::on_data_reply(std::uint64_t sid, std::shared_ptr<PendingData> p, std::uint64_t sent_us,
                                 const io::Inbound* in) {
    IntentSession* s = session(sid);
    if (!s) return;
    if (!in) {
        // Hard timeout: heal (if this was the live contract) and retry once.
        if (s->state == State::Active && s->contract && p->contract == s->contract->contract_id)
            start_heal(*s, "timeout");
        if (!p->retried) {
            p->retried = true;
            if (s->state == State::Active) {
                dispatch(sid, p);
                return;
            }
            if (s->state != State::Closed && s->state != State::Failed) {
                queued_[sid].push_back(p);
                return;
            }
        }
        DataResult r;
        r.seq = p->seq;
        r.error = s->state == State::Failed ? s->error.value_or(Errc::Timeout) : Errc::Timeout;
        r.message = "no response";
        deliver(p, r);
        return;
    }
    DataResult r = interpret(*s, *in);
    r.seq = p->seq;
    r.latency_ms = static_cast<double>(ctx_.io.now() - sent_us) / 1000.0;
    r.provider = in->sender_id;
    bool heal = false;
    if (s->contract && p->contract == s->contract->contract_id) {
        heal = monitor_qos(*s, r.latency_ms);
        if (r.ok() && s->violation_count == 0) ctx_.reputation.record(in->sender_id, true, ctx_.io.now());
    }
    deliver(p, r);
    if (heal) start_heal(*s, "qos");
}

DataResult Orchestrator::interpret(IntentSession& s, const io::Inbound& in) {
    DataResult r;
    const auto* msg = std::get_if<payload::DataResponse>(&in.message);
    if (!msg) {
        r.error = Errc::MalformedResult;
        r.message = "reply is not a data response";
        return r;
    }
    if (msg->value.is_map()) {
        if (const auto* e = msg->value.find("error")) {
            r.error = Errc::ProviderError;
            const auto* m = msg->value.find("message");
            r.message = (e->is_text() ? e->as_text() : std::string("error")) +
                        (m && m->is_text() ? ": " + m->as_text() : std::string());
            return r;
        }
    }
    DataSchema native = msg->schema.value_or(s.contract ? s.contract->capability.schema : s.intent.desired_schema);
    r.raw = adapter::TypedValue{native, msg->value};
    const DataSchema want = s.intent.desired_schema;
    if (native == want) {
        r.value = r.raw;
        return r;
    }
    try {
        r.value = adapter::translate(ctx_.adapters, r.raw, want);
        r.translated = true;
    } catch (const Error& e) {
        r.error = Errc::TranslationError;
        r.message = std::string(errc_name(e.code())) + ": " + e.what();
    }
    return r;
}

void Orchestrator::deliver(std::shared_ptr<PendingData> p, DataResult r) {
    if (p->result) return;  // first outcome wins
    p->result = std::move(r);
    auto& order = in_order_[p->session];
    while (!order.empty() && order.front()->result) {
        auto front = order.front();
        order.pop_front();
        if (front->delivered) continue;
        front->delivered = true;
        if (front->done) front->done(*front->result);
    }
}

void Orchestrator::on_data_push(const io::Inbound& in) {
    if (!in.has_flag(wire::flags::kIsStreaming)) return;  // a late reply whose request already timed out
    const auto* msg = std::get_if<payload::DataResponse>(&in.message);
    if (!msg) return;
    for (auto& [id, s] : sessions_) {
        if (s->state != State::Active || !s->contract || s->contract->contract_id != msg->contract_id) continue;
        DataResult r = interpret(*s, in);
        r.provider = in.sender_id;
        if (stream_fn_) stream_fn_(r);
        return;
    }
}

}  // namespace tip::orchestrator
