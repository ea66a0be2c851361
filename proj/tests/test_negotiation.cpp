#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "tip/bench.hpp"
#include "tip/error.hpp"

using namespace tip;
using namespace tip::negotiation;

namespace {

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::Ok;
}

Intent fill_intent() {
    Intent in;
    in.capability_required = "machine:fluid:fill";
    in.desired_schema = DataSchema::F32;
    in.constraints.min_precision = 0.99;
    return in;
}

CandidateInput candidate(std::uint64_t id, DataSchema schema, double rtt, double avail, bool adapter) {
    CandidateInput c;
    c.node.node_id = Key256::from_uint(id);
    c.capability = {"machine:fluid:fill", schema, "1.0.0", 0.995, 10};
    c.rtt_ms = rtt;
    c.availability = avail;
    c.reputation.node_id = c.node.node_id;
    c.adapter_available = adapter;
    return c;
}

}  // namespace

TEST_CASE("utility anchor values") {
    CHECK(std::fabs(proximity_utility(100) - 0.5) < 1e-9);
    CHECK(std::fabs(proximity_utility(0) - 1.0) < 1e-12);
    CHECK(std::fabs(confidence(20) - 0.5) < 1e-9);
    ReputationRecord r;
    r.score = 0.5;
    r.last_update = 1000;
    for (std::uint64_t dt : {0ull, 1ull, 1'000'000ull, 86'400'000'000ull, 1'000'000'000'000'000ull})
        CHECK(std::fabs(decay_reputation(r, 1000 + dt) - 0.5) < 1e-9);
}

TEST_CASE("utilities match their closed forms") {
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        double rtt = rng.uniform01() * 2000;
        CHECK(proximity_utility(rtt) == doctest::Approx(1.0 / (1.0 + rtt / 100.0)).epsilon(1e-12));
        std::uint64_t n = rng.below(200);
        CHECK(confidence(n) == doctest::Approx(1.0 / (1.0 + std::exp(-0.1 * (double(n) - 20.0)))).epsilon(1e-12));

        ReputationRecord r;
        r.score = rng.uniform01();
        r.last_update = rng.below(1'000'000'000);
        std::uint64_t now = r.last_update + rng.below(10'000'000'000ull);
        double lam = 1e-4 * rng.uniform01();
        double want = 0.5 + (r.score - 0.5) * std::exp(-lam * double(now - r.last_update) / 1e6);
        CHECK(std::fabs(decay_reputation(r, now, lam) - want) < 1e-12);
    }
    CHECK(code_of([] { (void)proximity_utility(-1); }) == Errc::NegativeRtt);
    ReputationRecord r;
    r.last_update = 10;
    CHECK(code_of([&] { (void)decay_reputation(r, 9); }) == Errc::ClockRegression);
}

TEST_CASE("utility properties") {
    Rng rng(4);
    double prev = 2.0;
    for (double rtt = 0; rtt < 5000; rtt += 7.3) {
        double u = proximity_utility(rtt);
        CHECK(u > 0.0);
        CHECK(u <= 1.0);
        CHECK(u < prev);
        prev = u;
    }
    double c_prev = 0.0;
    for (std::uint64_t n = 0; n < 300; ++n) {
        double c = confidence(n);
        CHECK(c > c_prev);
        CHECK(c < 1.0);
        c_prev = c;
    }
    // Decay moves toward neutral and never overshoots.
    for (int i = 0; i < 500; ++i) {
        ReputationRecord r;
        r.score = rng.uniform01();
        double d = decay_reputation(r, rng.below(1ull << 50));
        CHECK(std::fabs(d - 0.5) <= std::fabs(r.score - 0.5) + 1e-15);
        CHECK((d - 0.5) * (r.score - 0.5) >= 0.0);
    }
    // Trust stays in [0, 1] and young records stay near neutral.
    ReputationRecord young;
    young.score = 1.0;
    young.interaction_count = 1;
    CHECK(trust_utility(young, 0) < 0.6);
    ReputationRecord veteran = young;
    veteran.interaction_count = 200;
    CHECK(trust_utility(veteran, 0) > 0.99);
}

TEST_CASE("reputation updates") {
    ReputationRecord r;
    r.node_id = Key256::from_uint(1);
    auto s = update_reputation(r, true, 0);
    CHECK(s.score == doctest::Approx(0.55));
    CHECK(s.interaction_count == 1);
    auto f = update_reputation(r, false, 0);
    CHECK(f.score == doctest::Approx(0.45));
    for (int i = 0; i < 500; ++i) s = update_reputation(s, true, 0);
    CHECK(s.score <= 1.0);
    CHECK(s.score > 0.99);
    for (int i = 0; i < 500; ++i) f = update_reputation(f, false, 0);
    CHECK(f.score >= 0.0);
    CHECK(f.score < 0.01);
}

TEST_CASE("reputation store persists and tolerates corruption") {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "tip-test-reputation.txt").string();
    ReputationStore a;
    a.record(Key256::from_uint(1), true, 5'000'000);
    a.record(Key256::from_uint(1), true, 6'000'000);
    a.record(Key256::from_uint(2), false, 7'000'000);
    a.save(path);

    ReputationStore b;
    CHECK(b.load(path));
    REQUIRE(b.records().size() == 2);
    for (const auto& [id, rec] : a.records()) {
        auto got = b.get(id);
        CHECK(got.score == doctest::Approx(rec.score).epsilon(1e-12));
        CHECK(got.interaction_count == rec.interaction_count);
        CHECK(got.last_update == rec.last_update);
    }
    CHECK(b.get(Key256::from_uint(99)).score == 0.5);

    {
        std::ofstream out(path, std::ios::trunc);
        out << "not a reputation file\n";
    }
    ReputationStore c;
    CHECK_FALSE(c.load(path));
    CHECK(c.records().empty());
    fs::remove(path);
    CHECK_FALSE(c.load(path));
}

TEST_CASE("functional utility") {
    Intent in = fill_intent();
    Capability same{"machine:fluid:fill", DataSchema::F32, "1.0.0", 0.995, 10};
    CHECK(functional_utility(in, same, false).utility == 1.0);
    Capability other_schema = same;
    other_schema.schema = DataSchema::U16;
    CHECK(functional_utility(in, other_schema, false).utility == 0.0);
    auto fit = functional_utility(in, other_schema, true);
    CHECK(fit.utility == doctest::Approx(0.9));
    CHECK(fit.adapter_required);
    Capability sloppy = same;
    sloppy.precision = 0.9;
    CHECK(functional_utility(in, sloppy, true).utility == 0.0);
    in.constraints.min_rate_hz = 20;
    CHECK(functional_utility(in, same, true).utility == 0.0);
    Capability wrong = same;
    wrong.id = "machine:fluid:drain";
    CHECK(code_of([&] { (void)functional_utility(in, wrong, true); }) == Errc::CapabilityMismatch);
}

TEST_CASE("score: weighted sum and ordering") {
    Intent in = fill_intent();
    std::vector<CandidateInput> cands = {
        candidate(1, DataSchema::U16, 2, 0.99, true),
        candidate(2, DataSchema::U32, 2, 0.95, true),
        candidate(3, DataSchema::F32, 500, 0.5, false),
        candidate(4, DataSchema::U16, 1, 0.99, false),
    };
    auto s = score(in, cands, 0);
    REQUIRE(s.size() == 4);
    for (std::size_t i = 0; i + 1 < s.size(); ++i) CHECK(s[i].total >= s[i + 1].total);
    for (const auto& c : s) {
        double want = 0.25 * c.u_func + 0.25 * c.u_cost + 0.25 * c.u_trust + 0.25 * c.u_avail;
        CHECK(c.total == doctest::Approx(want).epsilon(1e-12));
        CHECK(c.u_trust == doctest::Approx(0.5));
    }
    CHECK(s[0].node.node_id == Key256::from_uint(1));  // faster than 2, more available
    CHECK(s[0].adapter_required);
    // No adapter for u16: the functional term vanishes but the rest still counts.
    auto it = std::find_if(s.begin(), s.end(), [](const auto& c) { return c.node.node_id == Key256::from_uint(4); });
    CHECK(it->u_func == 0.0);
    CHECK(it->total == doctest::Approx(0.25 * (0.0 + 1.0 / 1.01 + 0.5 + 0.99)));

    SUBCASE("ties break on trust, then node id") {
        auto a = candidate(9, DataSchema::F32, 10, 0.9, false);
        auto b = candidate(8, DataSchema::F32, 10, 0.9, false);
        auto r = score(in, {a, b}, 0);
        CHECK(r[0].node.node_id == Key256::from_uint(8));
    }
    SUBCASE("weights steer the choice") {
        in.weights = {0.0, 1.0, 0.0, 0.0};
        auto r = score(in, cands, 0);
        CHECK(r[0].node.node_id == Key256::from_uint(4));  // lowest rtt wins on cost alone
    }
    SUBCASE("errors") {
        CHECK(code_of([&] { (void)score(in, {}, 0); }) == Errc::NoCandidates);
        in.weights = {0.5, 0.5, 0.5, 0.5};
        CHECK(code_of([&] { (void)score(in, cands, 0); }) == Errc::InvalidWeights);
        in.weights = {1.2, -0.2, 0.0, 0.0};
        CHECK(code_of([&] { (void)score(in, cands, 0); }) == Errc::InvalidWeights);
    }
}

TEST_CASE("AHP recovers consistent weights") {
    Rng rng(5);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
        std::array<double, 4> w{};
        double sum = 0;
        for (auto& x : w) sum += (x = 0.05 + rng.uniform01());
        for (auto& x : w) x /= sum;
        auto m = oracle::consistent_matrix(w);
        auto res = ahp_weights(m);
        auto ref = oracle::eigen_weights(m);
        auto got = res.weights.as_array();
        for (int j = 0; j < 4; ++j) {
            worst = std::max(worst, std::fabs(got[j] - ref[j]));
            worst = std::max(worst, std::fabs(got[j] - w[j]));
        }
        CHECK(res.consistency_ratio < 1e-6);
        CHECK_FALSE(res.inconsistent);
        CHECK(res.lambda_max == doctest::Approx(4.0).epsilon(1e-9));
        CHECK(res.iterations <= 100);
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("AHP on inconsistent judgements") {
    // Intransitive: a > b > c > a.
    Matrix4 m = {{{1, 9, 1.0 / 9, 1}, {1.0 / 9, 1, 9, 1}, {9, 1.0 / 9, 1, 1}, {1, 1, 1, 1}}};
    auto res = ahp_weights(m);
    CHECK(res.inconsistent);
    CHECK(res.consistency_ratio > 0.1);
    auto ref = oracle::eigen_weights(m);
    auto got = res.weights.as_array();
    for (int j = 0; j < 4; ++j) CHECK(got[j] == doctest::Approx(ref[j]).epsilon(1e-6));
    res.weights.check();
}

TEST_CASE("AHP input validation") {
    Matrix4 ones{};
    for (auto& r : ones) r.fill(1.0);
    auto eq = ahp_weights(ones);
    for (double x : eq.weights.as_array()) CHECK(x == doctest::Approx(0.25));
    Matrix4 bad = ones;
    bad[0][1] = 2.0;
    CHECK(code_of([&] { (void)ahp_weights(bad); }) == Errc::NotReciprocal);
    bad = ones;
    bad[2][3] = 0.0;
    CHECK(code_of([&] { (void)ahp_weights(bad); }) == Errc::NonPositiveEntry);
    bad = ones;
    bad[1][1] = -1.0;
    CHECK(code_of([&] { (void)ahp_weights(bad); }) == Errc::NonPositiveEntry);
}

TEST_CASE("scoring 10k candidates is fast and complete") {
    auto cands = bench::synthetic_candidates(10'000, 6);
    auto intent = bench::synthetic_intent();
    auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t now = 1'700'000'000'000'000ull + 3'600'000'000ull;
    auto s = score(intent, cands, now);
    auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    CHECK(s.size() == 10'000);
    CHECK(ms < 100.0);
    MESSAGE("scored 10k candidates in " << ms << " ms");
}
