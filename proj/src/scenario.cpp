#include "tip/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "tip/error.hpp"
#include "tip/fieldbus.hpp"
#include "tip/node.hpp"
#include "tip/toml_lite.hpp"

namespace tip::scenario {

using nlohmann::ordered_json;

namespace {

struct Event {
    std::uint64_t at_us = 0;
    std::size_t order = 0;
    std::string action;
    const toml::Table* args = nullptr;
    int line = 0;
};

struct NodeSpec {
    double availability = 1.0;
    std::string malicious;
};

struct SessionRef {
    std::string node;
    std::uint64_t id = 0;
    std::set<std::uint64_t> seen;
};

std::string required(const Event& e, std::string_view key) {
    auto v = toml::get_string(*e.args, key);
    if (!v)
        throw Error(Errc::ConfigError,
                    "line " + std::to_string(e.line) + ": " + e.action + " needs '" + std::string(key) + "'");
    return *v;
}


ordered_json value_json(const cbor::Value& v) {
    if (v.is_uint()) return v.as_uint();
    if (v.is_int()) return v.as_int();
    if (v.is_float()) return v.as_double();
    if (v.is_bool()) return v.as_bool();
    if (v.is_text()) return v.as_text();
    if (v.is_null()) return nullptr;
    return cbor::diagnostic(v);
}

class Harness {
public:
    Harness(const toml::Table& script, std::uint64_t seed)
        : script_(script), net_(seed), id_rng_(seed ^ 0x7469702d6e6f6465ULL) {
        report_.seed = seed;
        start_ = net_.now();
    }

    Report run() {
        const toml::Table* sc = toml::find_table(script_, "scenario");
        report_.name = sc ? toml::get_string(*sc, "name").value_or("scenario") : "scenario";
        std::uint64_t duration_us = 60'000'000;
        net::LinkParams link;
        if (sc) {
            if (auto d = toml::get_number(*sc, "duration_ms")) duration_us = static_cast<std::uint64_t>(*d * 1000);
            if (auto l = toml::get_number(*sc, "latency_ms")) link.latency_us = static_cast<std::uint64_t>(*l * 1000);
            if (auto l = toml::get_number(*sc, "loss")) link.loss = *l;
        }
        net_.set_default_link(link);
        load_adapters();
        load_nodes();
        auto events = load_events();

        emit({{"event", "scenario_start"}, {"name", report_.name}, {"seed", report_.seed}});
        for (const auto& e : events) {
            advance(start_ + e.at_us);
            try {
                execute(e);
            } catch (const Error& err) {
                if (err.code() == Errc::ConfigError) throw;
                fail("line " + std::to_string(e.line) + ": " + e.action + ": " + std::string(errc_name(err.code())) +
                     ": " + err.what());
            }
        }
        advance(start_ + std::max(duration_us, events.empty() ? 0 : events.back().at_us));
        finish();
        return std::move(report_);
    }

private:
    void advance(std::uint64_t t) {
        while (true) {
            try {
                net_.run_until(t);
                return;
            } catch (const std::exception& e) {
                fail(std::string("exception in event loop: ") + e.what());
            }
        }
    }

    std::uint64_t rel() const { return net_.now() - start_; }

    void emit(ordered_json fields) {
        ordered_json j;
        j["t_us"] = rel();
        for (auto& [k, v] : fields.items()) j[k] = v;
        report_.events.push_back(j.dump());
    }

    void fail(const std::string& why) {
        std::string msg = "t=" + std::to_string(rel() / 1000) + "ms " + why;
        report_.failures.push_back(msg);
        emit({{"event", "failure"}, {"message", msg}});
    }

    void load_adapters() {
        const toml::Value* list = toml::find(script_, "adapter");
        if (!list) return;
        for (const auto& v : list->as_array()) {
            const auto& t = v.as_table();
            adapter::AdapterSpec spec;
            auto get = [&](const char* k) {
                auto s = toml::get_string(t, k);
                if (!s) throw Error(Errc::ConfigError, "line " + std::to_string(v.line) + ": adapter needs '" + k + "'");
                return *s;
            };
            spec.id = get("id");
            spec.source_schema = schema_from_name(get("source_schema"));
            spec.target_schema = schema_from_name(get("target_schema"));
            spec.formula = get("formula");
            adapters_->get_or_compile(spec);
        }
    }

    void load_nodes() {
        const toml::Value* list = toml::find(script_, "node");
        if (!list) return;
        for (const auto& v : list->as_array()) {
            const auto& t = v.as_table();
            auto name = toml::get_string(t, "name");
            if (!name) throw Error(Errc::ConfigError, "line " + std::to_string(v.line) + ": node needs a name");
            NodeSpec spec;
            spec.availability = toml::get_number(t, "availability").value_or(1.0);
            spec.malicious = toml::get_string(t, "malicious").value_or("");
            specs_[*name] = spec;
        }
    }

    std::vector<Event> load_events() {
        std::vector<Event> out;
        const toml::Value* list = toml::find(script_, "event");
        if (!list) return out;
        for (const auto& v : list->as_array()) {
            const auto& t = v.as_table();
            Event e;
            e.args = &t;
            e.line = v.line;
            e.order = out.size();
            auto action = toml::get_string(t, "action");
            if (!action) throw Error(Errc::ConfigError, "line " + std::to_string(v.line) + ": event needs an action");
            e.action = *action;
            double at = toml::get_number(t, "at_ms").value_or(0.0);
            if (at < 0) throw Error(Errc::ConfigError, "line " + std::to_string(v.line) + ": negative at_ms");
            e.at_us = static_cast<std::uint64_t>(at * 1000);
            if (e.action == "request_data") {
                // Expanded into one event per request.
                auto count = toml::get_integer(t, "count").value_or(1);
                double interval = toml::get_number(t, "interval_ms").value_or(0.0);
                for (std::int64_t i = 0; i < count; ++i) {
                    Event r = e;
                    r.at_us = e.at_us + static_cast<std::uint64_t>(static_cast<double>(i) * interval * 1000);
                    r.order = out.size();
                    out.push_back(r);
                }
                continue;
            }
            out.push_back(e);
        }
        std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) { return a.at_us < b.at_us; });
        return out;
    }

    Node& node(const std::string& name) {
        auto it = nodes_.find(name);
        if (it == nodes_.end()) throw Error(Errc::UnknownNode, "node '" + name + "' is not running");
        return *it->second;
    }

    std::string name_of(const NodeId& id) const {
        auto it = names_.find(id);
        return it == names_.end() ? id.hex().substr(0, 12) : it->second;
    }

    SessionRef& session_ref(const Event& e) {
        auto name = required(e, "session");
        auto it = sessions_.find(name);
        if (it == sessions_.end()) throw Error(Errc::SessionNotActive, "no session named '" + name + "'");
        return it->second;
    }

    void execute(const Event& e) {
        const auto& a = *e.args;
        const std::string& act = e.action;
        if (act == "start_node") {
            start_node(required(e, "node"));
        } else if (act == "register_capability") {
            register_capability(e);
        } else if (act == "submit_intent") {
            submit_intent(e);
        } else if (act == "request_data") {
            request_data(e);
        } else if (act == "mute_node" || act == "unmute_node") {
            auto n = required(e, "node");
            net_.set_muted(n, act == "mute_node");
            emit({{"event", act}, {"node", n}});
        } else if (act == "set_latency") {
            auto n = required(e, "node");
            double ms = toml::get_number(a, "latency_ms").value_or(0.0);
            net_.set_extra_delay(n, static_cast<std::uint64_t>(ms * 1000));
            emit({{"event", "set_latency"}, {"node", n}, {"latency_ms", ms}});
        } else if (act == "close_session") {
            auto& ref = session_ref(e);
            node(ref.node).orchestrator().close(ref.id);
        } else if (act == "assert_state") {
            assert_state(e);
        } else if (act == "assert_value") {
            assert_value(e);
        } else if (act == "assert_provider") {
            assert_provider(e);
        } else {
            throw Error(Errc::ConfigError, "line " + std::to_string(e.line) + ": unknown action '" + act + "'");
        }
    }

    void start_node(const std::string& name) {
        if (nodes_.count(name)) throw Error(Errc::ConfigError, "node '" + name + "' started twice");
        NodeSpec spec = specs_.count(name) ? specs_[name] : NodeSpec{};
        auto identity = crypto::NodeIdentity::generate(id_rng_);
        auto& transport = net_.add_node(name);
        auto n = std::make_unique<Node>(transport, identity, NodeConfig{}, id_rng_.next(), adapters_,
                                        spec.availability);
        if (spec.malicious == "omit_countersign") n->orchestrator().faults().omit_countersign = true;
        if (spec.malicious == "tamper_contract") n->orchestrator().faults().tamper_contract = true;
        n->start();
        names_[n->id()] = name;
        Node& ref = *n;
        ref.orchestrator().on_transition([this, name](const orchestrator::Transition& t) { on_transition(name, t); });
        nodes_[name] = std::move(n);
        emit({{"event", "start_node"}, {"node", name}, {"id", ref.id().hex().substr(0, 16)}});
        if (!first_.empty()) ref.bootstrap(node(first_).record());
        else first_ = name;
    }

    void on_transition(const std::string& node_name, const orchestrator::Transition& t) {
        std::string sname = session_name(node_name, t.session);
        emit({{"event", "transition"}, {"node", node_name}, {"session", sname},
              {"from", std::string(orchestrator::state_name(t.from))},
              {"to", std::string(orchestrator::state_name(t.to))}});
        if (t.to == orchestrator::State::Failed) ++report_.failed_states;
        if (t.to == orchestrator::State::Active) {
            auto* s = node(node_name).orchestrator().session(t.session);
            const auto& c = *s->contract;
            bool verified = c.verify(node(node_name).record().signing_public, s->provider.signing_public);
            std::string provider = name_of(c.provider_id);
            report_.sessions[sname].providers.push_back(provider);
            emit({{"event", "contract"}, {"session", sname}, {"contract", c.contract_id.str()},
                  {"provider", provider}, {"capability", c.capability.id},
                  {"provider_schema", std::string(schema_name(c.capability.schema))},
                  {"agreed_schema", std::string(schema_name(c.agreed_schema))},
                  {"adapter", c.adapter_id.value_or("")}, {"dual_signed", verified}});
        }
    }

    std::string session_name(const std::string& node_name, std::uint64_t id) const {
        for (const auto& [name, ref] : sessions_)
            if (ref.node == node_name && ref.id == id) return name;
        return node_name + "#" + std::to_string(id);
    }

    void register_capability(const Event& e) {
        const auto& a = *e.args;
        auto name = required(e, "node");
        Capability cap;
        cap.id = required(e, "capability");
        cap.schema = schema_from_name(toml::get_string(a, "schema").value_or("f32"));
        cap.version = toml::get_string(a, "version").value_or("1.0.0");
        cap.precision = toml::get_number(a, "precision").value_or(1.0);
        cap.rate_hz = toml::get_number(a, "rate_hz").value_or(0.0);
        std::string kind = toml::get_string(a, "handler").value_or("constant");
        orchestrator::Handler h;
        try {
            h = fieldbus::make_handler(kind, cap, toml::get_number(a, "value").value_or(0.0),
                                       kind == "fill" ? &registers_[name] : nullptr);
        } catch (const Error& err) {
            throw Error(err.code(), "line " + std::to_string(e.line) + ": " + err.what());
        }
        node(name).serve(cap, std::move(h));
        emit({{"event", "register_capability"}, {"node", name}, {"capability", cap.id},
              {"schema", std::string(schema_name(cap.schema))}});
    }

    void submit_intent(const Event& e) {
        const auto& a = *e.args;
        auto name = required(e, "node");
        auto sname = required(e, "session");
        (void)required(e, "capability");
        negotiation::Intent in = intent_from_toml(a);
        if (sessions_.count(sname)) throw Error(Errc::ConfigError, "session '" + sname + "' submitted twice");
        emit({{"event", "submit_intent"}, {"node", name}, {"session", sname}, {"capability", in.capability_required}});
        auto& outcome = report_.sessions[sname];
        outcome.name = sname;
        outcome.node = name;
        // Registered before submit so transitions fired synchronously are attributed.
        sessions_[sname] = SessionRef{name, 0, {}};
        try {
            sessions_[sname].id = node(name).orchestrator().submit_intent(
                in, [this, sname](orchestrator::IntentSession& s) {
                    ordered_json j{{"event", "session_ready"}, {"session", sname},
                                   {"state", std::string(orchestrator::state_name(s.state))}};
                    if (s.error) j["error"] = std::string(errc_name(*s.error));
                    emit(j);
                });
        } catch (...) {
            sessions_.erase(sname);
            throw;
        }
    }

    void request_data(const Event& e) {
        auto sname = required(e, "session");
        auto& ref = session_ref(e);
        cbor::Value params{cbor::Map{}};
        if (const auto* p = toml::find(*e.args, "params")) params = toml_to_cbor(*p);
        ++report_.sessions[sname].requests;
        std::uint64_t seq = node(ref.node).orchestrator().request_data(
            ref.id, params, [this, sname](const orchestrator::DataResult& r) { on_result(sname, r); });
        emit({{"event", "request_data"}, {"session", sname}, {"seq", seq}});
    }

    void on_result(const std::string& sname, const orchestrator::DataResult& r) {
        auto& ref = sessions_.at(sname);
        if (!ref.seen.insert(r.seq).second) ++report_.duplicate_responses;
        report_.sessions[sname].results.push_back(r);
        ordered_json j{{"event", "data"}, {"session", sname}, {"seq", r.seq}, {"ok", r.ok()}};
        if (r.ok()) {
            j["value"] = value_json(r.value.value);
            j["schema"] = std::string(schema_name(r.value.schema));
            j["raw"] = value_json(r.raw.value);
            j["raw_schema"] = std::string(schema_name(r.raw.schema));
            j["translated"] = r.translated;
            j["provider"] = name_of(r.provider);
            j["latency_us"] = static_cast<std::uint64_t>(std::llround(r.latency_ms * 1000));
        } else {
            j["error"] = std::string(errc_name(r.error));
            j["message"] = r.message;
        }
        emit(j);
    }

    orchestrator::IntentSession* live_session(const Event& e, std::string& sname) {
        sname = required(e, "session");
        auto& ref = session_ref(e);
        return node(ref.node).orchestrator().session(ref.id);
    }

    void assert_state(const Event& e) {
        std::string sname;
        auto* s = live_session(e, sname);
        auto want = required(e, "state");
        std::string got = s ? std::string(orchestrator::state_name(s->state)) : "missing";
        emit({{"event", "assert_state"}, {"session", sname}, {"expected", want}, {"actual", got}});
        if (got != want) fail("assert_state: session " + sname + " is " + got + ", expected " + want);
    }

    void assert_provider(const Event& e) {
        std::string sname;
        auto* s = live_session(e, sname);
        auto want = required(e, "node");
        std::string got = s && s->contract ? name_of(s->contract->provider_id) : "none";
        emit({{"event", "assert_provider"}, {"session", sname}, {"expected", want}, {"actual", got}});
        if (got != want) fail("assert_provider: session " + sname + " is bound to " + got + ", expected " + want);
    }

    void assert_value(const Event& e) {
        auto sname = required(e, "session");
        auto v = toml::get_number(*e.args, "value");
        if (!v) throw Error(Errc::ConfigError, "line " + std::to_string(e.line) + ": assert_value needs 'value'");
        double tol = toml::get_number(*e.args, "tolerance").value_or(0.0);
        const auto& results = report_.sessions[sname].results;
        std::size_t bad = 0;
        for (const auto& r : results)
            if (!r.ok() || !r.value.value.is_number() || std::fabs(r.value.value.as_double() - *v) > tol) ++bad;
        emit({{"event", "assert_value"}, {"session", sname}, {"expected", *v}, {"results", results.size()},
              {"mismatches", bad}});
        if (results.empty()) fail("assert_value: session " + sname + " has no results");
        else if (bad) fail("assert_value: " + std::to_string(bad) + " of " + std::to_string(results.size()) +
                           " results of " + sname + " differ from " + std::to_string(*v));
    }

    void finish() {
        for (auto& [sname, ref] : sessions_) {
            auto& out = report_.sessions[sname];
            auto* s = node(ref.node).orchestrator().session(ref.id);
            if (s) {
                out.final_state = std::string(orchestrator::state_name(s->state));
                out.heals = s->heals;
                if (s->error) out.error = std::string(errc_name(*s->error));
            }
            if (out.results.size() != out.requests)
                fail("session " + sname + ": " + std::to_string(out.requests) + " requests but " +
                     std::to_string(out.results.size()) + " results");
            emit({{"event", "session_summary"}, {"session", sname}, {"state", out.final_state}, {"heals", out.heals},
                  {"requests", out.requests}, {"results", out.results.size()}});
        }
        // Raw register images must agree with the translated volumes.
        for (const auto& [node_name, regs] : registers_) {
            std::uint64_t pulses = 0;
            for (const auto& r : regs) pulses += fieldbus::map_registers(r).pulses;
            emit({{"event", "registers"}, {"node", node_name}, {"reads", regs.size()}, {"pulses", pulses},
                  {"volume_ml", static_cast<double>(pulses) * fieldbus::kMlPerPulse}});
        }
        if (report_.duplicate_responses)
            fail(std::to_string(report_.duplicate_responses) + " duplicated responses");
        emit({{"event", "scenario_end"}, {"failures", report_.failures.size()},
              {"failed_states", report_.failed_states}, {"delivered", net_.delivered()},
              {"dropped", net_.dropped()}});
        report_.sim_log = net_.log();
        report_.end_time_us = rel();
    }

    const toml::Table& script_;
    net::SimNetwork net_;
    Rng id_rng_;
    std::uint64_t start_ = 0;
    std::shared_ptr<adapter::AdapterRegistry> adapters_ = std::make_shared<adapter::AdapterRegistry>();
    std::map<std::string, NodeSpec> specs_;
    std::map<std::string, std::unique_ptr<Node>> nodes_;
    std::map<NodeId, std::string> names_;
    std::map<std::string, SessionRef> sessions_;
    std::map<std::string, std::vector<fieldbus::RegisterMap>> registers_;
    std::string first_;
    Report report_;
};

}  // namespace

std::string Report::events_text() const {
    std::string out;
    for (const auto& l : events) out += l + "\n";
    return out;
}

std::string Report::sim_log_text() const {
    std::string out;
    for (const auto& l : sim_log) out += l + "\n";
    return out;
}

Report run(const std::string& script, std::uint64_t seed) {
    toml::Table t = toml::parse(script);
    return Harness(t, seed).run();
}

Report run_file(const std::string& path, std::uint64_t seed) {
    toml::Table t = toml::parse_file(path);
    return Harness(t, seed).run();
}

}  // namespace tip::scenario
