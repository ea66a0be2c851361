// tip: node runner, intent client, adapter compiler, golden vectors,
// scenario runner and micro-benchmarks.
//
// Exit codes: 0 success, 1 usage, 2 runtime failure.

#include <atomic>
#include <charconv>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"
#include "tip/bench.hpp"
#include "tip/fieldbus.hpp"
#include "tip/log.hpp"
#include "tip/node.hpp"
#include "tip/scenario.hpp"
#include "tip/vectors.hpp"

using namespace tip;
using nlohmann::ordered_json;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

/// Shortest round-trip text; floats always carry a decimal point.
std::string format_value(const cbor::Value& v, DataSchema schema) {
    if (!v.is_float()) return cbor::diagnostic(v);
    char buf[64];
    const double d = v.as_double();
    auto r = schema == DataSchema::F32 ? std::to_chars(buf, buf + sizeof buf, static_cast<float>(d))
                                       : std::to_chars(buf, buf + sizeof buf, d);
    std::string s(buf, r.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path);
    out << text;
    if (!out) throw Error(Errc::IoError, "write failed for " + path);
}

crypto::NodeIdentity identity_for(const NodeFile& f) {
    if (f.identity_key) return crypto::NodeIdentity::from_seed(read_identity_seed(*f.identity_key));
    Rng rng(f.seed ^ 0x6964656e74697479ULL);
    return crypto::NodeIdentity::generate(rng);
}

std::shared_ptr<adapter::AdapterRegistry> adapters_for(const NodeFile& f) {
    auto reg = std::make_shared<adapter::AdapterRegistry>();
    if (!f.adapter_dir.empty()) load_adapter_dir(*reg, f.adapter_dir);
    return reg;
}

void serve_all(Node& n, const NodeFile& f) {
    for (const auto& sc : f.capabilities) n.serve(sc.capability, fieldbus::make_handler(sc.handler, sc.capability, sc.value));
}

// --- node --------------------------------------------------------------------

int cmd_node(const std::string& config, std::string transport, std::uint64_t run_ms) {
    NodeFile f = load_node_file(config);
    if (transport.empty()) transport = f.transport;
    auto id = identity_for(f);
    auto reg = adapters_for(f);

    auto ready = [&](Node& n) {
        ordered_json caps = ordered_json::array();
        for (const auto& c : n.record().capabilities) caps.push_back(c.id);
        std::cout << ordered_json{{"event", "node_ready"}, {"name", f.name}, {"node_id", n.id().hex()},
                                  {"address", n.address()}, {"transport", transport}, {"capabilities", caps}}
                         .dump()
                  << std::endl;
    };

    if (transport == "sim") {
        net::SimNetwork net(f.seed);
        Node n(net.add_node(f.name), id, f.config, f.seed, reg, f.availability);
        if (f.reputation_file) n.reputation().load(*f.reputation_file);
        n.start();
        serve_all(n, f);
        ready(n);
        net.run_for((run_ms ? run_ms : 1000) * 1000);
        if (f.reputation_file) n.reputation().save(*f.reputation_file);
        std::cout << ordered_json{{"event", "node_stopped"}, {"virtual_us", net.now() - net::kSimEpochUs}}.dump()
                  << std::endl;
        return 0;
    }

    auto [host, port] = net::parse_udp_address(f.bind);
    auto udp = net::UdpTransport::bind(host, port, f.seed);
    Node n(*udp, id, f.config, f.seed, reg, f.availability);
    if (f.reputation_file) n.reputation().load(*f.reputation_file);
    n.start();
    serve_all(n, f);
    for (const auto& p : f.peers) {
        udp->add_multicast_peer(p);
        n.bootstrap_address(p, [p](bool ok) {
            log::info("bootstrap", {{"peer", p}, {"ok", ok}});
        });
    }
    n.announce();
    ready(n);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const auto start = std::chrono::steady_clock::now();
    while (!g_stop) {
        udp->poll(50'000);
        if (run_ms && std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(run_ms)) break;
    }
    if (f.reputation_file) n.reputation().save(*f.reputation_file);
    std::cout << ordered_json{{"event", "node_stopped"}, {"signal", g_stop.load()}}.dump() << std::endl;
    return 0;
}

// --- intent ------------------------------------------------------------------

using Pump = std::function<bool(const std::function<bool()>& done, std::uint64_t timeout_us)>;
using NameOf = std::function<std::string(const NodeId&)>;

void print_candidates(const std::vector<negotiation::ScoredCandidate>& scores, const NameOf& name_of) {
    std::cout << std::left << std::setw(12) << "candidate" << std::setw(8) << "schema" << std::right;
    for (const char* h : {"U_func", "U_cost", "U_trust", "U_avail", "total"}) std::cout << std::setw(10) << h;
    std::cout << "  adapter\n" << std::fixed << std::setprecision(4);
    for (const auto& c : scores) {
        std::cout << std::left << std::setw(12) << name_of(c.node.node_id) << std::setw(8)
                  << schema_name(c.capability.schema) << std::right << std::setw(10) << c.u_func << std::setw(10)
                  << c.u_cost << std::setw(10) << c.u_trust << std::setw(10) << c.u_avail << std::setw(10) << c.total
                  << "  " << (c.adapter_required ? "yes" : "no") << "\n";
    }
    std::cout.unsetf(std::ios::floatfield);
    std::cout << std::setprecision(6);
}

int run_intent(Node& agent, const Pump& pump, const negotiation::Intent& intent, bool explain,
               const std::string& unit, const NameOf& name_of) {
    bool ready = false;
    auto sid = agent.orchestrator().submit_intent(intent, [&](orchestrator::IntentSession&) { ready = true; });
    pump([&] { return ready; }, 30'000'000);
    auto* s = agent.orchestrator().session(sid);
    if (explain && s && !s->scores.empty()) print_candidates(s->scores, name_of);
    if (!s || s->state != orchestrator::State::Active) {
        Errc code = s && s->error ? *s->error : Errc::Timeout;
        throw Error(code, s && !s->error_message.empty() ? s->error_message : "intent did not reach Active");
    }
    const auto& c = *s->contract;
    std::cout << "contract " << c.contract_id.str() << "\n  provider  " << name_of(c.provider_id)
              << "\n  capability " << c.capability.id << " (" << schema_name(c.capability.schema) << " -> "
              << schema_name(c.agreed_schema) << ")\n  adapter   " << c.adapter_id.value_or("none")
              << "\n  signed    " << (c.verify(agent.record().signing_public, s->provider.signing_public) ? "both" : "INVALID")
              << "\n";

    std::optional<orchestrator::DataResult> result;
    agent.orchestrator().request_data(sid, cbor::Value(intent.params),
                                      [&](const orchestrator::DataResult& r) { result = r; });
    pump([&] { return result.has_value(); }, 30'000'000);
    if (!result) throw Error(Errc::Timeout, "no data response");
    if (!result->ok()) throw Error(result->error, result->message);
    std::cout << "value " << format_value(result->value.value, result->value.schema) << (unit.empty() ? "" : " ")
              << unit << "\n";
    agent.orchestrator().close(sid);
    return 0;
}

/// The bottling line in one process: filler stations on a simulated link.
int intent_sim(const negotiation::Intent& intent, bool explain, const std::string& unit, std::uint64_t seed) {
    net::SimNetwork net(seed);
    net.set_default_link({1000, 0.0});
    auto reg = std::make_shared<adapter::AdapterRegistry>();
    reg->get_or_compile(fieldbus::pulse_to_ml_spec());
    reg->get_or_compile(fieldbus::pulse16_to_ml_spec());
    struct Station {
        const char* name;
        const char* capability;
        DataSchema schema;
        double availability;
        const char* handler;
    };
    const Station stations[] = {
        {"agent", nullptr, DataSchema::F32, 1.0, nullptr},
        {"mold", "machine:molding:blow", DataSchema::F32, 0.98, "constant"},
        {"rinse", "machine:rinse:wash", DataSchema::F32, 0.97, "constant"},
        {"fill_A", "machine:fluid:fill", DataSchema::U16, 0.99, "fill"},
        {"fill_B", "machine:fluid:fill", DataSchema::U32, 0.95, "fill"},
        {"cap", "machine:capping:mechanical", DataSchema::F32, 0.96, "constant"},
        {"label", "machine:labelling:sticker", DataSchema::F32, 0.97, "constant"},
    };
    Rng ids(seed ^ 0x7469702d6e6f6465ULL);
    std::vector<std::unique_ptr<Node>> nodes;
    std::map<NodeId, std::string> names;
    for (const auto& st : stations) {
        auto n = std::make_unique<Node>(net.add_node(st.name), crypto::NodeIdentity::generate(ids), NodeConfig{},
                                        ids.next(), reg, st.availability);
        n->start();
        if (st.capability) {
            Capability cap{st.capability, st.schema, "1.0.0", 0.995, 10.0};
            n->serve(cap, fieldbus::make_handler(st.handler, cap, 1.0));
        }
        if (!nodes.empty()) n->bootstrap(nodes.front()->record());
        names[n->id()] = st.name;
        nodes.push_back(std::move(n));
    }
    net.run_for(500'000);
    Pump pump = [&](const std::function<bool()>& done, std::uint64_t timeout) {
        return net.run_until(done, net.now() + timeout);
    };
    NameOf name_of = [&](const NodeId& id) {
        auto it = names.find(id);
        return it == names.end() ? id.hex().substr(0, 10) : it->second;
    };
    return run_intent(*nodes.front(), pump, intent, explain, unit, name_of);
}

int intent_udp(const std::string& config, const negotiation::Intent& intent, bool explain, const std::string& unit) {
    NodeFile f = load_node_file(config);
    auto [host, port] = net::parse_udp_address(f.bind);
    auto udp = net::UdpTransport::bind(host, port, f.seed);
    Node agent(*udp, identity_for(f), f.config, f.seed, adapters_for(f), f.availability);
    if (f.reputation_file) agent.reputation().load(*f.reputation_file);
    agent.start();
    std::size_t pending = f.peers.size(), joined = 0;
    for (const auto& p : f.peers) {
        udp->add_multicast_peer(p);
        agent.bootstrap_address(p, [&](bool ok) {
            --pending;
            joined += ok;
        });
    }
    udp->run_until([&] { return pending == 0; }, 5'000'000);
    if (!f.peers.empty() && joined == 0) throw Error(Errc::Timeout, "no peer answered");
    Pump pump = [&](const std::function<bool()>& done, std::uint64_t timeout) { return udp->run_until(done, timeout); };
    NameOf name_of = [](const NodeId& id) { return id.hex().substr(0, 10); };
    struct SaveOnExit {
        Node& n;
        const std::optional<std::string>& path;
        ~SaveOnExit() {
            if (!path) return;
            try {
                n.reputation().save(*path);
            } catch (const Error& e) {
                log::warn("reputation_save_failed", {{"path", *path}, {"message", std::string(e.what())}});
            }
        }
    } save{agent, f.reputation_file};
    return run_intent(agent, pump, intent, explain, unit, name_of);
}

int cmd_intent(const std::string& file, bool explain, const std::string& config, std::uint64_t seed) {
    auto intent = load_intent_file(file);
    std::string unit;
    if (const auto* t = toml::find_table(toml::parse_file(file), "intent")) unit = toml::get_string(*t, "unit").value_or("");
    return config.empty() ? intent_sim(intent, explain, unit, seed) : intent_udp(config, intent, explain, unit);
}

// --- adapter -----------------------------------------------------------------

int cmd_adapter(const std::string& descriptor, const std::string& emit, const std::optional<double>& test) {
    auto spec = adapter::load_adapter_file(descriptor);
    auto compiled = adapter::compile(spec);
    std::ostringstream key;
    key << std::hex << std::setw(16) << std::setfill('0') << compiled.cache_key;
    std::cerr << "adapter " << spec.id << ": " << schema_name(spec.source_schema) << " -> "
              << schema_name(spec.target_schema) << ", " << (compiled.width == wasm::Width::F64 ? "f64" : "f32")
              << ", " << compiled.wasm_bytes.size() << " bytes, key " << key.str() << "\n  body:";
    for (const auto& ins : compiled.instructions) std::cerr << " " << ins << ";";
    std::cerr << "\n";
    if (!emit.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(emit, ec);
        if (ec) throw Error(Errc::IoError, "cannot create " + emit + ": " + ec.message());
        const auto base = std::filesystem::path(emit) / spec.id;
        write_file(base.string() + ".wasm",
                   std::string(reinterpret_cast<const char*>(compiled.wasm_bytes.data()), compiled.wasm_bytes.size()));
        write_file(base.string() + ".wat", compiled.text_form);
        std::cerr << "wrote " << base.string() << ".wasm and .wat\n";
    }
    if (test) std::cout << format_value(adapter::execute_scalar(compiled, *test), spec.target_schema) << "\n";
    return 0;
}

// --- vectors / scenario / bench ---------------------------------------------

int cmd_vectors(const std::string& out) {
    auto set = vectors::build();
    vectors::write(set, out);
    std::cout << ordered_json{{"event", "vectors_written"}, {"dir", out}, {"count", set.vectors.size()}}.dump() << "\n";
    return 0;
}

int cmd_scenario(const std::string& script, std::uint64_t seed, const std::string& report, const std::string& sim_log) {
    auto r = scenario::run_file(script, seed);
    std::cout << r.events_text();
    if (!report.empty()) write_file(report, r.events_text());
    if (!sim_log.empty()) write_file(sim_log, r.sim_log_text());
    for (const auto& f : r.failures) std::cerr << "FAIL " << f << "\n";
    return r.passed() ? 0 : 2;
}

int cmd_bench(const std::string& kind, std::size_t size) {
    std::vector<bench::Timing> out;
    if (kind == "scoring") out.push_back(bench::scoring(size ? size : 10'000));
    if (kind == "translate") out.push_back(bench::translate(size ? size : 1'000));
    if (kind == "crypto") {
        out.push_back(bench::handshake(size ? size : 200));
        out.push_back(bench::seal_open(size ? size : 200));
    }
    for (const auto& t : out) std::cerr << t.text() << "\n";
    for (const auto& t : out) std::cout << t.json() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (!log::init_from_env()) std::cerr << "warning: TIP_LOG value not recognised, keeping default level\n";

    CLI::App app{"TIP node runner and tooling"};
    app.require_subcommand(1);

    std::string config, transport, file, descriptor, emit, out, script, report, sim_log, kind;
    std::uint64_t seed = 42, run_ms = 0;
    std::size_t size = 0;
    bool explain = false;
    std::optional<double> test;

    auto* node = app.add_subcommand("node", "Run a node from a configuration file");
    node->add_option("--config", config, "Node TOML")->required()->check(CLI::ExistingFile);
    node->add_option("--transport", transport, "Backend (default from config)")->check(CLI::IsMember({"sim", "udp"}));
    node->add_option("--run-ms", run_ms, "Stop after this many ms (0 = until SIGINT/SIGTERM)");

    auto* intent = app.add_subcommand("intent", "Submit an intent and print the outcome");
    intent->add_option("--file", file, "Intent TOML")->required()->check(CLI::ExistingFile);
    intent->add_flag("--explain", explain, "Print the per-candidate utility breakdown");
    intent->add_option("--config", config, "Requester node TOML (UDP); default is the in-process simulated line")
        ->check(CLI::ExistingFile);
    intent->add_option("--seed", seed, "Seed for the simulated line");

    auto* adp = app.add_subcommand("adapter", "Compile an adapter descriptor");
    adp->add_option("--descriptor", descriptor, "Adapter TOML")->required()->check(CLI::ExistingFile);
    adp->add_option("--emit", emit, "Write <id>.wasm and <id>.wat here");
    adp->add_option("--test", test, "Run the adapter on this input and print the result");

    auto* vec = app.add_subcommand("vectors", "Write golden wire vectors and manifest");
    vec->add_option("--out", out, "Output directory")->required();

    auto* scn = app.add_subcommand("scenario", "Run a simulator script");
    scn->add_option("--script", script, "Scenario TOML")->required()->check(CLI::ExistingFile);
    scn->add_option("--seed", seed, "Simulator seed");
    scn->add_option("--report", report, "Also write the event report here");
    scn->add_option("--sim-log", sim_log, "Write the packet log here");

    auto* bch = app.add_subcommand("bench", "Micro-benchmarks");
    bch->add_option("--kind", kind, "scoring | translate | crypto")
        ->required()
        ->check(CLI::IsMember({"scoring", "translate", "crypto"}));
    bch->add_option("--size", size, "Workload size (0 = default)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*node) return cmd_node(config, transport, run_ms);
        if (*intent) return cmd_intent(file, explain, config, seed);
        if (*adp) return cmd_adapter(descriptor, emit, test);
        if (*vec) return cmd_vectors(out);
        if (*scn) return cmd_scenario(script, seed, report, sim_log);
        if (*bch) return cmd_bench(kind, size);
    } catch (const Error& e) {
        std::cerr << ordered_json{{"error", std::string(errc_name(e.code()))},
                                  {"code", static_cast<int>(e.code())},
                                  {"message", e.what()}}
                         .dump()
                  << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << ordered_json{{"error", "Internal"}, {"message", e.what()}}.dump() << "\n";
        return 2;
    }
    return 1;
}
