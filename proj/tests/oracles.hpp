#pragma once

// Independent oracles shared by the unit tests and the acceptance binary.
// Nothing here calls into the code it is used to check, except to drive it.

#include <zlib.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tip/adapter.hpp"
#include "tip/negotiation.hpp"
#include "tip/node.hpp"
#include "tip/transport.hpp"
#include "tip/wire.hpp"

namespace oracle {

using tip::Bytes;

// --- byte layout -------------------------------------------------------------

inline std::uint64_t be(const std::uint8_t* p, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | p[i];
    return v;
}

/// Field-by-field comparison of an encoded header against the fixed layout
/// (magic 0, version 2, type 3, txid 4, length 20, cap hash 24, seq 28,
/// flags 32, timestamp 36, ttl 44, checksum 48, signature 52..116).
inline bool layout_matches(const std::uint8_t* b, const tip::wire::PacketHeader& h) {
    return be(b + 0, 2) == h.magic && b[2] == h.version && b[3] == static_cast<std::uint8_t>(h.packet_type) &&
           std::memcmp(b + 4, h.transaction_id.bytes.data(), 16) == 0 && be(b + 20, 4) == h.payload_length &&
           be(b + 24, 4) == h.capability_hash && be(b + 28, 4) == h.sequence_number && be(b + 32, 4) == h.flags &&
           be(b + 36, 8) == h.timestamp_us && be(b + 44, 4) == h.ttl_ms && be(b + 48, 4) == h.checksum &&
           std::memcmp(b + 52, h.signature.data(), 64) == 0;
}

inline std::uint32_t zlib_crc32(tip::ByteView data) {
    return static_cast<std::uint32_t>(::crc32(0L, data.data(), static_cast<uInt>(data.size())));
}

// --- formulas ----------------------------------------------------------------

/// Test-side expression tree, rendered to text for the production parser
/// and evaluated here with the arithmetic the generated module must use.
struct Expr {
    enum Op { Const, Var, Add, Sub, Mul, Div, Neg } op = Const;
    std::string text;  // constant as written
    std::shared_ptr<Expr> a, b;
};
using ExprPtr = std::shared_ptr<Expr>;

inline ExprPtr random_expr(tip::Rng& rng, int depth) {
    auto e = std::make_shared<Expr>();
    const auto pick = depth <= 0 ? rng.below(2) : rng.below(7);
    if (pick == 0) {
        e->op = Expr::Var;
    } else if (pick == 1) {
        e->op = Expr::Const;
        std::ostringstream os;
        switch (rng.below(3)) {
            case 0: os << rng.below(1000); break;
            case 1: os << rng.below(100) << '.' << rng.below(10000); break;
            default: os << "0." << 1 + rng.below(999); break;
        }
        e->text = os.str();
    } else if (pick == 6) {
        e->op = Expr::Neg;
        e->a = random_expr(rng, depth - 1);
    } else {
        e->op = static_cast<Expr::Op>(Expr::Add + (pick - 2));
        e->a = random_expr(rng, depth - 1);
        e->b = random_expr(rng, depth - 1);
    }
    return e;
}

inline std::string render(const Expr& e) {
    switch (e.op) {
        case Expr::Const: return e.text;
        case Expr::Var: return "x";
        case Expr::Neg: return "-(" + render(*e.a) + ")";
        default: break;
    }
    const char* op = e.op == Expr::Add ? " + " : e.op == Expr::Sub ? " - " : e.op == Expr::Mul ? " * " : " / ";
    return "(" + render(*e.a) + op + render(*e.b) + ")";
}

/// Every operation rounds to T, as the f32 / f64 instructions do.
template <class T>
T eval(const Expr& e, T x) {
    switch (e.op) {
        case Expr::Const: return static_cast<T>(std::strtod(e.text.c_str(), nullptr));
        case Expr::Var: return x;
        case Expr::Neg: return -eval<T>(*e.a, x);
        case Expr::Add: return eval<T>(*e.a, x) + eval<T>(*e.b, x);
        case Expr::Sub: return eval<T>(*e.a, x) - eval<T>(*e.b, x);
        case Expr::Mul: return eval<T>(*e.a, x) * eval<T>(*e.b, x);
        case Expr::Div: return eval<T>(*e.a, x) / eval<T>(*e.b, x);
    }
    return T(0);
}

/// Bit equality; two NaNs match whatever their payload (guest NaN bits are
/// not specified).
template <class T>
bool same_bits(T a, T b) {
    if (std::isnan(a) && std::isnan(b)) return true;
    if constexpr (sizeof(T) == 4) {
        std::uint32_t x, y;
        std::memcpy(&x, &a, 4);
        std::memcpy(&y, &b, 4);
        return x == y;
    } else {
        std::uint64_t x, y;
        std::memcpy(&x, &a, 8);
        std::memcpy(&y, &b, 8);
        return x == y;
    }
}

inline double random_input(tip::Rng& rng) {
    switch (rng.below(5)) {
        case 0: return static_cast<double>(rng.below(65536));
        case 1: return -1000.0 + 2000.0 * rng.uniform01();
        case 2: return 1e-3 * rng.uniform01();
        case 3: return 0.0;
        default: return 1e6 * (rng.uniform01() - 0.5);
    }
}

struct DifferentialResult {
    std::size_t formulas = 0, cases = 0, mismatches = 0;
    std::string first_mismatch;
};

/// `formulas` random formulas x `inputs` inputs, half at f32 width, half at
/// f64, compiled and executed through the production adapter path.
inline DifferentialResult differential(std::size_t formulas, std::size_t inputs, std::uint64_t seed) {
    tip::Rng rng(seed);
    DifferentialResult r;
    for (std::size_t f = 0; f < formulas; ++f) {
        auto e = random_expr(rng, 1 + static_cast<int>(rng.below(6)));
        const bool f64 = f % 2 == 1;
        const auto schema = f64 ? tip::DataSchema::F64 : tip::DataSchema::F32;
        auto compiled = tip::adapter::compile({"diff", schema, schema, render(*e)});
        ++r.formulas;
        for (std::size_t i = 0; i < inputs; ++i) {
            const double x = random_input(rng);
            const double got = tip::adapter::execute_raw(compiled, x);
            bool ok = f64 ? same_bits(got, eval<double>(*e, x))
                          : same_bits(static_cast<float>(got), eval<float>(*e, static_cast<float>(x)));
            ++r.cases;
            if (!ok && r.mismatches++ == 0) {
                std::ostringstream os;
                os << render(*e) << " at x=" << x << (f64 ? " (f64)" : " (f32)") << " got " << got;
                r.first_mismatch = os.str();
            }
        }
    }
    return r;
}

// --- AHP -------------------------------------------------------------------

/// Consistent pairwise matrix a_ij = w_i / w_j.
inline tip::negotiation::Matrix4 consistent_matrix(const std::array<double, 4>& w) {
    tip::negotiation::Matrix4 m{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m[i][j] = w[i] / w[j];
    return m;
}

/// Principal eigenvector from a dense general eigensolver, sum-normalised.
inline std::array<double, 4> eigen_weights(const tip::negotiation::Matrix4& m) {
    Eigen::Matrix4d a;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) a(i, j) = m[i][j];
    Eigen::EigenSolver<Eigen::Matrix4d> es(a);
    int best = 0;
    for (int i = 1; i < 4; ++i)
        if (es.eigenvalues()[i].real() > es.eigenvalues()[best].real()) best = i;
    Eigen::Vector4d v = es.eigenvectors().col(best).real();
    v /= v.sum();
    return {v(0), v(1), v(2), v(3)};
}

// --- DHT ---------------------------------------------------------------------

/// A seeded simulated network of full nodes whose routing tables are filled
/// from a random sample of the global membership (full buckets reject).
struct Mesh {
    tip::net::SimNetwork net;
    std::vector<std::unique_ptr<tip::Node>> nodes;
    std::map<tip::NodeId, std::size_t> index;

    Mesh(std::size_t n, std::size_t k, std::size_t alpha, std::uint64_t seed, std::size_t contacts)
        : net(seed) {
        net.set_logging(false);
        net.set_default_link({2'000, 0.0});
        tip::NodeConfig cfg;
        cfg.k = k;
        cfg.alpha = alpha;
        cfg.announce_interval_us = 0;
        tip::Rng rng(seed * 7 + 1);
        for (std::size_t i = 0; i < n; ++i) {
            auto& t = net.add_node("n" + std::to_string(i));
            auto node = std::make_unique<tip::Node>(t, tip::crypto::NodeIdentity::generate(rng), cfg, rng.next());
            node->start();
            index[node->id()] = i;
            nodes.push_back(std::move(node));
        }
        for (auto& node : nodes)
            for (std::size_t c = 0; c < contacts; ++c) node->add_peer(nodes[rng.below(n)]->record());
    }

    /// Runs the network until `flag` is set or 60 virtual seconds pass.
    bool wait(const bool& flag) { return net.run_until([&] { return flag; }, net.now() + 60'000'000); }
};

/// Ground truth for published keys: capability id -> publishing node ids.
using ProviderTruth = std::map<std::string, std::set<tip::NodeId>>;

/// Every returned provider record is signed, self-consistent and belongs to
/// a node that really published the key; at least one such record came back.
inline bool providers_correct(const std::vector<tip::ProviderRecord>& got, const std::string& capability,
                              const ProviderTruth& truth) {
    auto it = truth.find(capability);
    if (it == truth.end() || got.empty()) return false;
    const auto key = tip::capability_key(capability);
    for (const auto& p : got) {
        if (!(p.key == key) || !p.verify() || !p.provider.self_consistent()) return false;
        if (!it->second.count(p.provider.node_id)) return false;
    }
    return true;
}

struct DhtTrial {
    std::size_t keys = 0;
    std::size_t published = 0;    // STOREs acknowledged by at least one node
    std::size_t true_closest = 0;  // a globally k-closest node holds the record
    std::size_t found = 0;
    std::size_t correct = 0;
    int max_rounds = 0;
};

/// Publishes `keys` capabilities from random nodes of a fresh mesh, then
/// looks each one up from a random non-publisher. The global membership list
/// is the oracle for where records should land and who really published.
inline DhtTrial dht_trial(std::size_t n, std::size_t keys, std::uint64_t seed, std::size_t k = 20,
                          std::size_t alpha = 3) {
    Mesh m(n, k, alpha, seed, 40);
    tip::Rng rng(seed ^ 0x5eed);
    DhtTrial t;
    t.keys = keys;
    ProviderTruth truth;
    std::vector<std::string> caps;
    std::size_t pending = keys;
    bool all_published = keys == 0;
    for (std::size_t i = 0; i < keys; ++i) {
        auto& pub = *m.nodes[rng.below(n)];
        std::string cap = "trial:key:" + std::to_string(i);
        pub.record().capabilities.push_back(tip::Capability{cap, tip::DataSchema::F32, "1.0.0", 1.0, 1.0});
        truth[cap].insert(pub.id());
        caps.push_back(cap);
        pub.dht().publish(cap, [&](std::size_t acks) {
            if (acks > 0) ++t.published;
            if (--pending == 0) all_published = true;
        });
    }
    m.wait(all_published);

    std::vector<tip::NodeId> ids;
    for (const auto& node : m.nodes) ids.push_back(node->id());
    for (const auto& cap : caps) {
        const auto key = tip::capability_key(cap);
        std::vector<tip::NodeId> order = ids;
        std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) { return (a ^ key) < (b ^ key); });
        order.resize(std::min(k, order.size()));
        bool held = false;
        for (const auto& id : order) held = held || !m.nodes[m.index.at(id)]->dht().stored(key).empty();
        if (held) ++t.true_closest;

        std::size_t req;
        do req = rng.below(n);
        while (truth[cap].count(m.nodes[req]->id()));
        bool done = false;
        tip::dht::LookupResult res;
        m.nodes[req]->dht().iterative_lookup(key, true, [&](const tip::dht::LookupResult& r) {
            res = r;
            done = true;
        });
        if (!m.wait(done)) continue;
        t.max_rounds = std::max(t.max_rounds, res.rounds);
        if (!res.providers.empty()) ++t.found;
        if (providers_correct(res.providers, cap, truth)) ++t.correct;
    }
    return t;
}

}  // namespace oracle
