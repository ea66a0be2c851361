#include "tip/bench.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

#include "json.hpp"
#include "tip/adapter.hpp"
#include "tip/crypto.hpp"

namespace tip::bench {

namespace {

using Clock = std::chrono::steady_clock;

Timing summarize(std::string kind, std::size_t size, std::vector<double> us) {
    Timing t;
    t.kind = std::move(kind);
    t.size = size;
    t.samples = us.size();
    if (us.empty()) return t;
    double sum = 0;
    for (double v : us) sum += v;
    t.mean_us = sum / static_cast<double>(us.size());
    std::sort(us.begin(), us.end());
    t.median_us = us.size() % 2 ? us[us.size() / 2] : (us[us.size() / 2 - 1] + us[us.size() / 2]) / 2;
    t.min_us = us.front();
    t.max_us = us.back();
    return t;
}

template <class F>
double time_us(F&& f) {
    auto t0 = Clock::now();
    f();
    return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

}  // namespace

std::string Timing::json() const {
    nlohmann::ordered_json j{{"kind", kind},       {"size", size},         {"samples", samples},
                             {"mean_us", mean_us}, {"median_us", median_us}, {"min_us", min_us},
                             {"max_us", max_us}};
    return j.dump();
}

std::string Timing::text() const {
    std::ostringstream os;
    os << kind << " size=" << size << " samples=" << samples << " mean=" << mean_us << "us median=" << median_us
       << "us min=" << min_us << "us max=" << max_us << "us";
    return os.str();
}

negotiation::Intent synthetic_intent() {
    negotiation::Intent in;
    in.capability_required = "bench:sensor:read";
    in.desired_schema = DataSchema::F32;
    in.constraints.max_latency_ms = 100;
    in.constraints.min_precision = 0.5;
    in.weights = {0.4, 0.2, 0.3, 0.1};
    return in;
}

std::vector<negotiation::CandidateInput> synthetic_candidates(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    const DataSchema schemas[] = {DataSchema::F32, DataSchema::F64, DataSchema::U16, DataSchema::U32};
    std::vector<negotiation::CandidateInput> out(n);
    for (auto& c : out) {
        c.node.node_id = Key256::random(rng);
        c.capability.id = "bench:sensor:read";
        c.capability.schema = schemas[rng.below(4)];
        c.capability.precision = rng.uniform01();
        c.capability.rate_hz = 1 + 99 * rng.uniform01();
        c.rtt_ms = 200 * rng.uniform01();
        c.availability = rng.uniform01();
        c.reputation.node_id = c.node.node_id;
        c.reputation.score = rng.uniform01();
        c.reputation.interaction_count = rng.below(100);
        c.reputation.last_update = 1'700'000'000'000'000ULL;
        c.adapter_available = rng.below(2) == 0;
    }
    return out;
}

Timing scoring(std::size_t candidates, std::size_t repeats) {
    auto inputs = synthetic_candidates(candidates, 7);
    auto intent = synthetic_intent();
    const std::uint64_t now = 1'700'000'100'000'000ULL;
    std::vector<double> us;
    std::size_t sink = 0;
    (void)negotiation::score(intent, inputs, now);  // warm-up
    for (std::size_t i = 0; i < repeats; ++i)
        us.push_back(time_us([&] { sink += negotiation::score(intent, inputs, now).size(); }));
    if (sink != repeats * candidates) throw std::logic_error("scoring dropped candidates");
    return summarize("scoring", candidates, us);
}

Timing translate(std::size_t invocations) {
    adapter::AdapterRegistry reg;
    reg.get_or_compile({"celsius_to_fahrenheit", DataSchema::F32, DataSchema::F64, "x * 1.8 + 32"});
    (void)adapter::translate(reg, {DataSchema::F32, cbor::Value(20.0)}, DataSchema::F64);  // warm
    std::vector<double> us;
    us.reserve(invocations);
    double acc = 0;
    for (std::size_t i = 0; i < invocations; ++i) {
        adapter::TypedValue in{DataSchema::F32, cbor::Value(static_cast<double>(i % 100))};
        us.push_back(time_us([&] { acc += adapter::translate(reg, in, DataSchema::F64).value.as_double(); }));
    }
    if (!(acc > 0)) throw std::logic_error("translate benchmark produced no output");
    return summarize("translate", invocations, us);
}

Timing handshake(std::size_t runs) {
    Rng rng(11);
    auto a = crypto::NodeIdentity::generate(rng);
    auto b = crypto::NodeIdentity::generate(rng);
    crypto::HandshakeChannel loopback = [](bool, Bytes m) -> std::optional<Bytes> { return m; };
    std::vector<double> us;
    for (std::size_t i = 0; i < runs; ++i) {
        Uuid txid = Uuid::v4(rng);
        us.push_back(time_us([&] { (void)crypto::handshake(a, b, txid, rng, loopback); }));
    }
    return summarize("handshake", runs, us);
}

Timing seal_open(std::size_t runs, std::size_t payload_bytes) {
    Rng rng(13);
    auto x = crypto::X25519Keypair::generate(rng);
    auto y = crypto::X25519Keypair::generate(rng);
    Uuid txid = Uuid::v4(rng);
    auto send = crypto::make_session(crypto::Role::Initiator, x, y.public_key, txid);
    auto recv = crypto::make_session(crypto::Role::Responder, y, x.public_key, txid);
    Bytes plain(payload_bytes);
    rng.fill(plain.data(), plain.size());
    Bytes aad(116, 0x5A);
    std::vector<double> us;
    for (std::size_t i = 0; i < runs; ++i) {
        us.push_back(time_us([&] {
            Bytes sealed = crypto::seal(send, plain, aad);
            Bytes back = crypto::open(recv, sealed, aad);
            if (back.size() != plain.size()) throw std::logic_error("seal/open size mismatch");
        }));
    }
    return summarize("seal_open", payload_bytes, us);
}

}  // namespace tip::bench
