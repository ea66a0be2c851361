// Headline acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any of them fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "tip/bench.hpp"
#include "tip/error.hpp"
#include "tip/fieldbus.hpp"
#include "tip/log.hpp"
#include "tip/scenario.hpp"

using namespace tip;
namespace w = tip::wasm;

namespace {

/// Collects the first failed expectation of a criterion.
struct Check {
    std::ostringstream why;  // summary on success
    std::string failure;
    bool ok = true;
    void expect(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            failure = what;
        }
    }
};

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::Ok;
}

// --- wire ----------------------------------------------------------------------

const std::uint64_t kNow = net::kSimEpochUs + 10'000'000;

struct WireFixture {
    crypto::NodeIdentity id = crypto::NodeIdentity::from_seed(crypto::Seed{1, 2, 3});
    crypto::NodeIdentity other = crypto::NodeIdentity::from_seed(crypto::Seed{9, 9, 9});

    wire::HeaderFields fields(std::uint32_t seq = 7) const {
        wire::HeaderFields f;
        f.packet_type = wire::PacketType::DataRequest;
        f.transaction_id.bytes[0] = 0xAB;
        f.sequence_number = seq;
        f.timestamp_us = kNow;
        f.ttl_ms = 5000;
        return f;
    }
    Bytes frame(const wire::HeaderFields& f, const Bytes& payload = Bytes{0xA1, 0x00, 0x01}) const {
        return wire::build_packet(f, payload, id.key).serialize();
    }
    Errc verdict(const Bytes& raw) const {
        crypto::ReplayCache cache;
        return wire::validate_verdict(raw, id.public_key(), kNow, cache);
    }
};

const std::uint8_t kTypes[] = {0, 1, 2, 3, 4, 6, 7, 8};

void refresh_checksum(Bytes& frame) {
    ByteView v(frame);
    put_be32(frame.data() + wire::offset::kChecksum,
             wire::packet_checksum(v.subspan(0, wire::kHeaderSize), v.subspan(wire::kHeaderSize)));
}

void wire_conformance(Check& c) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(2024);
    for (int i = 0; i < 10'000 && c.ok; ++i) {
        wire::PacketHeader h;
        h.packet_type = static_cast<wire::PacketType>(kTypes[rng.below(8)]);
        h.transaction_id = Uuid::v4(rng);
        h.payload_length = static_cast<std::uint32_t>(rng.next());
        h.capability_hash = static_cast<std::uint32_t>(rng.next());
        h.sequence_number = static_cast<std::uint32_t>(rng.next());
        h.flags = static_cast<std::uint32_t>(rng.next());
        h.timestamp_us = rng.next();
        h.ttl_ms = static_cast<std::uint32_t>(rng.next());
        h.checksum = static_cast<std::uint32_t>(rng.next());
        rng.fill(h.signature.data(), h.signature.size());
        const auto b = wire::encode_header(h);
        c.expect(b.size() == 116 && oracle::layout_matches(b.data(), h), "header field offsets");
        c.expect(wire::decode_header(b) == h, "header roundtrip");
    }

    WireFixture fx;
    std::size_t mutations = 0;
    for (int p = 0; p < 200 && c.ok; ++p) {
        auto f = fx.fields(static_cast<std::uint32_t>(rng.next()));
        f.packet_type = static_cast<wire::PacketType>(kTypes[rng.below(8)]);
        f.capability_hash = static_cast<std::uint32_t>(rng.next());
        Bytes payload(rng.below(64));
        rng.fill(payload.data(), payload.size());
        const Bytes raw = fx.frame(f, payload);
        c.expect(fx.verdict(raw) == Errc::Ok, "built packet rejected");
        for (std::size_t bit = 0; bit < raw.size() * 8; ++bit) {
            Bytes m = raw;
            m[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
            ++mutations;
            if (fx.verdict(m) == Errc::Ok) {
                c.expect(false, "mutation accepted: packet " + std::to_string(p) + " bit " + std::to_string(bit));
                break;
            }
        }
    }

    // Pipeline ordering: each frame fails two stages and must report the earlier one.
    const Bytes good = fx.frame(fx.fields());
    Bytes big = good;
    put_be32(big.data() + wire::offset::kPayloadLength, 70'000);
    big.back() ^= 1;
    c.expect(fx.verdict(big) == Errc::PayloadTooLarge, "size before checksum");
    Bytes trailing = good;
    trailing.push_back(0);
    c.expect(fx.verdict(trailing) == Errc::LengthMismatch, "length before checksum");
    Bytes sig = good;
    sig[wire::offset::kSignature] ^= 1;
    c.expect(fx.verdict(sig) == Errc::ChecksumMismatch, "checksum before signature");
    refresh_checksum(sig);
    c.expect(fx.verdict(sig) == Errc::BadSignature, "signature check");
    auto stale = fx.fields();
    stale.timestamp_us = kNow - 120'000'000;
    stale.ttl_ms = 1;
    c.expect(fx.verdict(wire::build_packet(stale, Bytes{0xA0}, fx.other.key).serialize()) == Errc::BadSignature,
             "signature before replay");
    stale.timestamp_us = kNow - 40'000'000;
    c.expect(fx.verdict(fx.frame(stale)) == Errc::ReplayDetected, "replay before expiry");
    stale.timestamp_us = kNow - 10'000;
    c.expect(fx.verdict(fx.frame(stale)) == Errc::Expired, "expiry");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(secs < 30.0, "wire suite took " + std::to_string(secs) + " s");
    c.why << "10000 headers, " << mutations << " mutations rejected";
}

// --- crypto --------------------------------------------------------------------

void crypto_suite(Check& c) {
    using namespace tip::crypto;
    struct Ed {
        const char *secret, *pub, *msg, *sig;
    };
    const Ed ed[] = {
        {"9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60",
         "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a", "",
         "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"},
        {"4ccd089b28ff96da9db6c346ec114e0f5b8a319f35aba624da8cf6ed4fb8a6fb",
         "3d4017c3e843895a92b70aa74d1b7ebc9c982ccf2ec4968cc0cd55f12af4660c", "72",
         "92a009a9f0d4cab8720e820b5f642540a2b27b5416503f8fb3762223ebdb69da085ac1e43e15996e458f3613d0f11d8c387b2eaeb4302aeeb00d291612bb0c00"},
        {"c5aa8df43f9f837bedb7442f31dcb7b166d38535076f094b85ce3a2e0b4458f7",
         "fc51cd8e6218a1a38da47ed00230f0580816ed13ba3303ac5deb911548908025", "af82",
         "6291d657deec24024827e69c3abe01a30ce548a284743a445e3680d7db5ac3ac18ff9b538d16f290ae67f760984dc6594a7c15e9716ed28dc027beceea1ec40a"},
    };
    for (const auto& v : ed) {
        auto key = SigningKey::from_seed(array_from_hex<32>(v.secret));
        const Bytes msg = from_hex(v.msg);
        const auto s = sign(key, msg);
        c.expect(to_hex(key.public_key) == v.pub && to_hex(s) == v.sig, "Ed25519 vector");
        c.expect(verify(key.public_key, msg, s), "Ed25519 verify");
        auto bad = s;
        bad[0] ^= 1;
        c.expect(!verify(key.public_key, msg, bad), "Ed25519 forged signature accepted");
    }

    c.expect(to_hex(x25519(array_from_hex<32>("a546e36bf0527c9d3b16154b82465edd62144c0ac1fc5a18506a2244ba449ac4"),
                           array_from_hex<32>("e6db6867583030db3594c1a424b15f7c726624ec26b3353b10a903a6d0ab1c4c"))) ==
                 "c3da55379de9c6908e94ea4df28d084f32eccf03491c71f754b4075577a28552",
             "X25519 vector");
    X25519Key k{9}, u{9};
    for (int i = 0; i < 1000; ++i) {
        X25519Key r = x25519(k, u);
        u = k;
        k = r;
        if (i == 0)
            c.expect(to_hex(k) == "422c8e7a6227d7bca1350b3e2bb7279f7897b87bb6854b783c60e80311ae3079", "X25519 iterated 1");
    }
    c.expect(to_hex(k) == "684cf59ba83309552800ef566f2f4d3c1c3887c49360e3875f2eb94d99532c51", "X25519 iterated 1000");
    auto alice = X25519Keypair::from_secret(
        array_from_hex<32>("77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a"));
    auto bob = X25519Keypair::from_secret(
        array_from_hex<32>("5dab087e624a8a4b79e17f8b83800ee66f3bb1292618b6fd1c2f8b27ff88e0eb"));
    c.expect(to_hex(derive_shared(alice.secret, bob.public_key)) ==
                 "4a5d9d5ba4ce2de1728e3bf480350f25e07e21c947d19e3376f09b3c1e161742",
             "X25519 Diffie-Hellman vector");

    Rng rng(0xECD4);
    for (int i = 0; i < 1000; ++i) {
        auto a = X25519Keypair::generate(rng);
        auto b = X25519Keypair::generate(rng);
        c.expect(derive_shared(a.secret, b.public_key) == derive_shared(b.secret, a.public_key), "ECDH asymmetric");
    }

    auto a = X25519Keypair::generate(rng);
    auto b = X25519Keypair::generate(rng);
    const Uuid tx = Uuid::v4(rng);
    auto init = make_session(Role::Initiator, a, b.public_key, tx);
    auto resp = make_session(Role::Responder, b, a.public_key, tx);
    const Bytes aad = from_hex("5449010600");
    for (std::size_t len : {0u, 1u, 1024u, 4000u}) {
        Bytes plain(len);
        rng.fill(plain.data(), len);
        c.expect(open(resp, seal(init, plain, aad), aad) == plain, "AEAD roundtrip");
    }
    const Bytes sealed = seal(init, as_bytes("fill 500 ml of water"), aad);
    for (std::size_t i = 0; i < sealed.size(); ++i) {
        Bytes t = sealed;
        t[i] ^= 0x20;
        c.expect(code_of([&] { (void)open(resp, t, aad); }) == Errc::AuthFailure, "AEAD tamper accepted");
    }
    c.expect(code_of([&] { (void)open(resp, sealed, from_hex("5449010601")); }) == Errc::AuthFailure, "AEAD aad");

    const std::uint64_t now = 1'800'000'000'000'000ull, d = ReplayCache::kDefaultSkewUs;
    ReplayCache dup;
    c.expect(dup.check(now, 1, now) && !dup.check(now, 1, now), "replay duplicate");
    ReplayCache skew;
    c.expect(skew.check(now - (d - 1), 1, now) && skew.check(now - d, 2, now) && !skew.check(now - (d + 1), 3, now),
             "replay past skew boundary");
    c.expect(skew.check(now + (d - 1), 4, now) && skew.check(now + d, 5, now) && !skew.check(now + (d + 1), 6, now),
             "replay future skew boundary");
    c.why << "3 Ed25519 + 3 X25519 vectors, 1000 ECDH pairs, " << sealed.size() << " tampered bytes";
}

// --- discovery -----------------------------------------------------------------

void discovery_suite(Check& c) {
    const auto t = oracle::dht_trial(1024, 100, 0xD47);
    c.expect(t.published == 100 && t.true_closest == 100, "publication not held by the true k-closest");
    c.expect(t.found == 100, std::to_string(t.found) + "/100 keys found");
    c.expect(t.correct == 100, std::to_string(t.correct) + "/100 provider sets correct");
    c.expect(t.max_rounds <= 10, "max rounds " + std::to_string(t.max_rounds));

    oracle::Mesh m(30, 20, 3, 31, 10);
    Capability cap{"machine:fluid:fill", DataSchema::U16, "1.0.0", 0.995, 10};
    m.nodes[7]->serve(cap, [](const cbor::Value&) { return adapter::TypedValue{DataSchema::U16, cbor::Value(1u)}; });
    m.net.run_for(1'000'000);
    auto& req = *m.nodes[0];
    const auto before = req.io().counters().find_node_sent;
    bool done = false;
    std::size_t hits = 0;
    bool dht = true;
    req.discovery().discover(cap.id, {}, [&](std::vector<NodeRecord> r, discovery::DiscoverStats s) {
        hits = r.size();
        dht = s.dht_started;
        done = true;
    });
    c.expect(m.wait(done), "local discovery did not finish");
    const auto sent = req.io().counters().find_node_sent - before;
    c.expect(sent == 0 && !dht, "local provider issued " + std::to_string(sent) + " FIND_NODE");
    c.expect(hits == 1, "local provider not found");
    c.why << "1024 nodes, 100/100 keys, max " << t.max_rounds << " rounds, local FIND_NODE " << sent;
}

// --- scoring -------------------------------------------------------------------

void scoring_suite(Check& c) {
    using namespace tip::negotiation;
    c.expect(std::fabs(proximity_utility(100) - 0.5) < 1e-9, "proximity(100)");
    c.expect(std::fabs(confidence(20) - 0.5) < 1e-9, "confidence(20)");
    ReputationRecord r;
    r.score = 0.5;
    r.last_update = 1000;
    for (std::uint64_t dt : {0ull, 1'000'000ull, 86'400'000'000ull, 1'000'000'000'000'000ull})
        c.expect(std::fabs(decay_reputation(r, 1000 + dt) - 0.5) < 1e-9, "decay fixed point");
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double rtt = rng.uniform01() * 2000;
        c.expect(std::fabs(proximity_utility(rtt) - 1.0 / (1.0 + rtt / 100.0)) < 1e-9, "proximity closed form");
        const auto n = rng.below(200);
        c.expect(std::fabs(confidence(n) - 1.0 / (1.0 + std::exp(-0.1 * (double(n) - 20.0)))) < 1e-9,
                 "confidence closed form");
    }

    double worst = 0;
    for (int i = 0; i < 500; ++i) {
        std::array<double, 4> wts{};
        double sum = 0;
        for (auto& x : wts) sum += (x = 0.05 + rng.uniform01());
        for (auto& x : wts) x /= sum;
        const auto m = oracle::consistent_matrix(wts);
        const auto got = ahp_weights(m).weights.as_array();
        const auto ref = oracle::eigen_weights(m);
        for (int j = 0; j < 4; ++j) worst = std::max({worst, std::fabs(got[j] - ref[j]), std::fabs(got[j] - wts[j])});
    }
    c.expect(worst < 1e-6, "AHP error " + std::to_string(worst));

    const auto cands = bench::synthetic_candidates(10'000, 6);
    const auto intent = bench::synthetic_intent();
    const std::uint64_t now = 1'700'000'000'000'000ull + 3'600'000'000ull;
    double best_ms = 1e9;
    for (int rep = 0; rep < 3; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto s = score(intent, cands, now);
        best_ms = std::min(best_ms,
                           std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        c.expect(s.size() == 10'000, "scored set incomplete");
    }
    c.expect(best_ms < 100.0, "10k scoring took " + std::to_string(best_ms) + " ms");
    c.why << "AHP max error " << worst << ", 10k candidates in " << best_ms << " ms";
}

// --- adapters ------------------------------------------------------------------

Bytes transform_module(const w::CodeWriter& body, std::uint32_t pages = 1) {
    w::ModuleBuilder b;
    auto f = b.add_function({{w::ValType::F32}, {w::ValType::F32}}, {}, body.bytes());
    b.set_memory(pages);
    b.export_function("transform", f);
    b.export_memory("memory");
    return b.build();
}

void adapter_suite(Check& c) {
    using namespace tip::adapter;
    const auto celsius = compile({"celsius_to_fahrenheit", DataSchema::F32, DataSchema::F32, "x * 1.8 + 32.0"});
    c.expect(celsius.instructions ==
                 std::vector<std::string>{"local.get 0", "f32.const 1.8", "f32.mul", "f32.const 32.0", "f32.add"},
             "celsius listing");
    const auto pulse = compile({"pulse_to_ml", DataSchema::U32, DataSchema::F32, "x * 0.2 + 0.0"});
    c.expect(pulse.instructions ==
                 std::vector<std::string>{"local.get 0", "f32.const 0.2", "f32.mul", "f32.const 0.0", "f32.add"},
             "pulse listing");
    c.expect(execute_raw(celsius, 100) == 212.0, "celsius(100)");

    const auto diff = oracle::differential(1000, 100, 0xD1FF);
    c.expect(diff.cases == 100'000 && diff.mismatches == 0, "differential: " + diff.first_mismatch);

    AdapterRegistry reg;
    auto good = reg.get_or_compile({"celsius", DataSchema::F32, DataSchema::F32, "x * 1.8 + 32"});
    const std::string fingerprint = reg.fingerprint();
    std::vector<std::pair<std::string, Bytes>> hostile;
    {
        w::CodeWriter b;
        b.i32_const(70000).mem(w::op::kF32Load, 2, 0).end();
        hostile.emplace_back("out-of-bounds load", transform_module(b));
    }
    {
        w::CodeWriter b;
        b.i32_const(65534).f32_const(1).mem(w::op::kF32Store, 2, 0).local_get(0).end();
        hostile.emplace_back("out-of-bounds store", transform_module(b));
    }
    {
        w::CodeWriter b;
        b.block(w::op::kLoop).br(w::op::kBr, 0).end().local_get(0).end();
        hostile.emplace_back("infinite loop", transform_module(b));
    }
    {
        w::CodeWriter b;
        b.local_get(0).call(0).end();
        hostile.emplace_back("unbounded recursion", transform_module(b));
    }
    for (const auto& [name, wasm] : hostile) {
        CompiledAdapter evil = *good;
        evil.module = std::make_shared<const w::Module>(w::decode_module(wasm));
        evil.wasm_bytes = wasm;
        const Errc got = code_of([&] { (void)execute_raw(evil, 1.0); });
        // A runaway loop stops on fuel or on the wall clock, whichever comes first.
        c.expect(got == Errc::Trap || (name == "infinite loop" && got == Errc::Timeout), name + " did not trap");
        c.expect(reg.fingerprint() == fingerprint && execute_raw(*good, 100) == 212.0, name + " altered the host");
    }

    const auto t = bench::translate(2000);
    c.expect(t.mean_us < 1000.0, "translate mean " + std::to_string(t.mean_us) + " us");
    c.why << "listings equal, " << diff.cases << " bit-exact cases, " << hostile.size()
          << " hostile modules trapped, translate mean " << t.mean_us << " us";
}

// --- scenarios -----------------------------------------------------------------

scenario::Report factory(fieldbus::Degrade d, std::uint64_t seed) {
    fieldbus::FactoryOptions o;
    o.seed = seed;
    o.degrade = d;
    return scenario::run(fieldbus::factory_script(o), seed);
}

void factory_suite(Check& c) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = factory(fieldbus::Degrade::Latency, 42);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(r.passed(), r.failures.empty() ? "" : r.failures.front());
    const auto& s = r.sessions.at("fill");
    c.expect(s.results.size() == 20 && s.requests == 20, "not every request answered");
    std::set<std::uint64_t> seqs;
    for (const auto& d : s.results) {
        c.expect(d.ok() && d.value.value.as_double() == 500.0 && d.value.schema == DataSchema::F32,
                 "a value other than 500.0 ml");
        seqs.insert(d.seq);
    }
    c.expect(seqs.size() == s.results.size() && r.duplicate_responses == 0, "duplicated responses");
    c.expect(!s.providers.empty() && s.providers.front() == "fill_A" && s.providers.back() == "fill_B" && s.heals >= 1,
             "no heal to fill_B");
    c.expect(r.failed_states == 0 && s.final_state == "Active", "session failed");
    c.expect(wall < 10.0, "wall time " + std::to_string(wall) + " s");
    c.why << "20 x 500.0 ml, heals " << s.heals << ", provider " << (s.providers.empty() ? "-" : s.providers.back())
          << ", Failed " << r.failed_states << ", duplicates " << r.duplicate_responses << ", " << wall << " s";
}

void timing_suite(Check& c) {
    const auto h = bench::handshake(200);
    const auto so = bench::seal_open(5000, 1024);
    c.expect(h.mean_us < 5000.0, "handshake mean " + std::to_string(h.mean_us) + " us");
    c.expect(so.mean_us < 100.0, "seal/open mean " + std::to_string(so.mean_us) + " us");
    c.why << "handshake mean " << h.mean_us << " us, 1 KiB seal/open mean " << so.mean_us << " us";
}

void determinism_suite(Check& c) {
    auto suite = [] {
        std::string all;
        for (auto d : {fieldbus::Degrade::Latency, fieldbus::Degrade::None, fieldbus::Degrade::MuteBoth}) {
            const auto r = factory(d, 42);
            all += r.events_text() + r.sim_log_text();
        }
        return all;
    };
    const std::string a = suite(), b = suite();
    c.expect(!a.empty() && a == b, "event logs differ between identical runs");
    c.why << "3 scenarios, " << a.size() << " bytes identical";
}

}  // namespace

int main() {
    log::set_level(log::Level::Error);
    log::init_from_env();
    const std::pair<const char*, void (*)(Check&)> criteria[] = {
        {"wire conformance", wire_conformance}, {"crypto", crypto_suite},
        {"discovery", discovery_suite},         {"scoring", scoring_suite},
        {"adapter pipeline", adapter_suite},    {"factory scenario", factory_suite},
        {"handshake timing", timing_suite},     {"determinism", determinism_suite},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Check c;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %-18s %.2fs  %s\n", c.ok ? "PASS" : "FAIL", name, s,
                    c.ok ? c.why.str().c_str() : c.failure.c_str());
        std::fflush(stdout);
        failed += !c.ok;
    }
    return failed == 0 ? 0 : 1;
}
