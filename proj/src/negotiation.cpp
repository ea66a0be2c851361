#include "tip/negotiation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tip/error.hpp"

namespace tip::negotiation {

void Weights::check() const {
    double sum = 0;
    for (double w : as_array()) {
        if (!(w >= 0.0)) throw Error(Errc::InvalidWeights, "weights must be non-negative");
        sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw Error(Errc::InvalidWeights, "weights must sum to 1");
}

double proximity_utility(double rtt_ms) {
    if (!(rtt_ms >= 0.0)) throw Error(Errc::NegativeRtt, "rtt must be >= 0");
    return 1.0 / (1.0 + rtt_ms / 100.0);
}

double confidence(std::uint64_t interactions) {
    return 1.0 / (1.0 + std::exp(-0.1 * (static_cast<double>(interactions) - 20.0)));
}

double decay_reputation(const ReputationRecord& rep, std::uint64_t now_us, double lambda) {
    if (now_us < rep.last_update) throw Error(Errc::ClockRegression, "now precedes the last reputation update");
    double elapsed_s = static_cast<double>(now_us - rep.last_update) / 1e6;
    return kNeutral + (rep.score - kNeutral) * std::exp(-lambda * elapsed_s);
}

double trust_utility(const ReputationRecord& rep, std::uint64_t now_us, double lambda) {
    double r = decay_reputation(rep, now_us, lambda);
    return kNeutral + (r - kNeutral) * confidence(rep.interaction_count);
}

ReputationRecord update_reputation(ReputationRecord rep, bool success, std::uint64_t now_us, double lambda) {
    double r = decay_reputation(rep, now_us, lambda);
    double target = success ? 1.0 : 0.0;
    rep.score = std::clamp(r + kLearningRate * (target - r), 0.0, 1.0);
    rep.interaction_count += 1;
    rep.last_update = now_us;
    return rep;
}

FunctionalFit functional_utility(const Intent& intent, const Capability& cap, bool adapter_available) {
    if (cap.id != intent.capability_required)
        throw Error(Errc::CapabilityMismatch, "capability " + cap.id + " does not match " + intent.capability_required);
    FunctionalFit fit{1.0, false};
    const auto& c = intent.constraints;
    if (c.min_precision && cap.precision < *c.min_precision) return {0.0, false};
    if (c.min_rate_hz && cap.rate_hz < *c.min_rate_hz) return {0.0, false};
    if (cap.schema != intent.desired_schema) {
        if (!adapter_available) return {0.0, false};
        fit.utility *= 0.9;
        fit.adapter_required = true;
    }
    return fit;
}

std::vector<ScoredCandidate> score(const Intent& intent, const std::vector<CandidateInput>& candidates,
                                   std::uint64_t now_us, double lambda) {
    if (candidates.empty()) throw Error(Errc::NoCandidates, "nothing to score");
    intent.weights.check();
    const auto& w = intent.weights;
    std::vector<ScoredCandidate> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        ScoredCandidate s;
        s.node = c.node;
        s.capability = c.capability;
        auto fit = functional_utility(intent, c.capability, c.adapter_available);
        s.u_func = fit.utility;
        s.adapter_required = fit.adapter_required;
        s.u_cost = proximity_utility(c.rtt_ms);
        s.u_trust = trust_utility(c.reputation, now_us, lambda);
        s.u_avail = std::clamp(c.availability, 0.0, 1.0);
        s.total = w.func * s.u_func + w.cost * s.u_cost + w.trust * s.u_trust + w.avail * s.u_avail;
        out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
        if (a.total != b.total) return a.total > b.total;
        if (a.u_trust != b.u_trust) return a.u_trust > b.u_trust;
        return a.node.node_id < b.node.node_id;
    });
    return out;
}

AhpResult ahp_weights(const Matrix4& a) {
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (!(a[i][j] > 0.0)) throw Error(Errc::NonPositiveEntry, "pairwise entries must be positive");
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (std::fabs(a[i][j] * a[j][i] - 1.0) > 1e-6)
                throw Error(Errc::NotReciprocal, "a[j][i] must equal 1/a[i][j]");

    std::array<double, 4> v{0.25, 0.25, 0.25, 0.25};
    AhpResult res;
    for (int it = 1; it <= 100; ++it) {
        std::array<double, 4> next{};
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) next[i] += a[i][j] * v[j];
        double sum = next[0] + next[1] + next[2] + next[3];
        double delta = 0;
        for (int i = 0; i < 4; ++i) {
            next[i] /= sum;
            delta = std::max(delta, std::fabs(next[i] - v[i]));
        }
        v = next;
        res.iterations = it;
        if (delta < 1e-9) break;
    }
    // Rayleigh-style estimate: mean of (A v)_i / v_i.
    double lambda = 0;
    for (int i = 0; i < 4; ++i) {
        double av = 0;
        for (int j = 0; j < 4; ++j) av += a[i][j] * v[j];
        lambda += av / v[i];
    }
    res.lambda_max = lambda / 4.0;
    double ci = (res.lambda_max - 4.0) / 3.0;
    res.consistency_ratio = std::max(0.0, ci / kRandomIndex4);
    res.inconsistent = res.consistency_ratio > 0.1;
    res.weights = Weights::from_array(v);
    return res;
}

ReputationRecord ReputationStore::get(const NodeId& id) const {
    auto it = records_.find(id);
    if (it != records_.end()) return it->second;
    ReputationRecord r;
    r.node_id = id;
    return r;
}

void ReputationStore::record(const NodeId& id, bool success, std::uint64_t now_us) {
    auto r = get(id);
    if (r.interaction_count == 0 && r.last_update == 0) r.last_update = now_us;
    if (now_us < r.last_update) now_us = r.last_update;
    records_[id] = update_reputation(r, success, now_us, lambda_);
}

bool ReputationStore::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) return false;
    std::map<NodeId, ReputationRecord> loaded;
    std::string line;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string hex;
            ReputationRecord r;
            if (!(ls >> hex >> r.score >> r.interaction_count >> r.last_update)) throw Error(Errc::ConfigError, "");
            if (!(r.score >= 0.0 && r.score <= 1.0)) throw Error(Errc::ConfigError, "");
            auto bytes = from_hex(hex);
            if (bytes.size() != 32) throw Error(Errc::ConfigError, "");
            r.node_id = Key256::from(bytes);
            loaded[r.node_id] = r;
        }
    } catch (const Error&) {
        records_.clear();  // corrupt file: everyone starts neutral
        return false;
    }
    records_ = std::move(loaded);
    return true;
}

void ReputationStore::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write reputation store " + path);
    out.precision(17);
    for (const auto& [id, r] : records_)
        out << id.hex() << ' ' << r.score << ' ' << r.interaction_count << ' ' << r.last_update << '\n';
    if (!out) throw Error(Errc::IoError, "write failed for " + path);
}

}  // namespace tip::negotiation
