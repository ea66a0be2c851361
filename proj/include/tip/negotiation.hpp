#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tip/cbor.hpp"
#include "tip/ids.hpp"
#include "tip/types.hpp"

namespace tip::negotiation {

/// Scoring weights in the order func, cost, trust, avail.
struct Weights {
    double func = 0.25;
    double cost = 0.25;
    double trust = 0.25;
    double avail = 0.25;

    /// Each weight >= 0 and the sum is 1 within 1e-9; throws InvalidWeights.
    void check() const;
    std::array<double, 4> as_array() const { return {func, cost, trust, avail}; }
    static Weights from_array(const std::array<double, 4>& w) { return {w[0], w[1], w[2], w[3]}; }
};

struct Constraints {
    std::optional<double> max_latency_ms;
    std::optional<double> min_precision;
    std::optional<double> min_rate_hz;
};

struct Intent {
    std::string capability_required;
    DataSchema desired_schema = DataSchema::F32;
    cbor::Map params;
    Constraints constraints;
    Weights weights;
    bool streaming = false;
    bool wide_area = false;
};

struct ReputationRecord {
    NodeId node_id;
    double score = 0.5;
    std::uint64_t interaction_count = 0;
    std::uint64_t last_update = 0;  // epoch µs
};

inline constexpr double kNeutral = 0.5;
inline constexpr double kDefaultLambda = 9.6e-7;  // s^-1
inline constexpr double kLearningRate = 0.1;

/// 1 / (1 + rtt/100). Throws NegativeRtt.
double proximity_utility(double rtt_ms);
/// Logistic 1 / (1 + e^(-0.1 (I - 20))).
double confidence(std::uint64_t interactions);
/// R(t) = 0.5 + (R0 - 0.5) e^(-λ (t - t0)). Throws ClockRegression.
double decay_reputation(const ReputationRecord& rep, std::uint64_t now_us, double lambda = kDefaultLambda);
/// 0.5 + (R(t) - 0.5) C(I): a young record barely moves away from neutral.
double trust_utility(const ReputationRecord& rep, std::uint64_t now_us, double lambda = kDefaultLambda);
/// Decay, then R += η (target - R), clamped; counts the interaction.
ReputationRecord update_reputation(ReputationRecord rep, bool success, std::uint64_t now_us,
                                   double lambda = kDefaultLambda);

struct FunctionalFit {
    double utility = 0.0;
    bool adapter_required = false;
};

/// Hard constraints zero the utility; a schema mismatch costs 10% when an
/// adapter exists and disqualifies otherwise. Throws CapabilityMismatch.
FunctionalFit functional_utility(const Intent& intent, const Capability& cap, bool adapter_available);

struct CandidateInput {
    NodeRecord node;
    Capability capability;
    double rtt_ms = 0.0;
    double availability = 1.0;
    ReputationRecord reputation;
    bool adapter_available = false;
};

struct ScoredCandidate {
    NodeRecord node;
    Capability capability;
    double u_func = 0, u_cost = 0, u_trust = 0, u_avail = 0;
    double total = 0;
    bool adapter_required = false;
};

/// Weighted sum, sorted by total descending, then higher u_trust, then
/// smaller node id. Throws NoCandidates on empty input.
std::vector<ScoredCandidate> score(const Intent& intent, const std::vector<CandidateInput>& candidates,
                                   std::uint64_t now_us, double lambda = kDefaultLambda);

using Matrix4 = std::array<std::array<double, 4>, 4>;

struct AhpResult {
    Weights weights;
    double lambda_max = 0;
    double consistency_ratio = 0;
    bool inconsistent = false;  // CR > 0.1
    int iterations = 0;
};

inline constexpr double kRandomIndex4 = 0.90;

/// Principal eigenvector by power iteration (<= 100 iterations, tolerance
/// 1e-9). Throws NonPositiveEntry or NotReciprocal.
AhpResult ahp_weights(const Matrix4& pairwise);

/// Line-delimited store: "<node id hex> <score> <count> <last_update>".
class ReputationStore {
public:
    explicit ReputationStore(double lambda = kDefaultLambda) : lambda_(lambda) {}

    ReputationRecord get(const NodeId& id) const;
    void record(const NodeId& id, bool success, std::uint64_t now_us);
    void set(const ReputationRecord& r) { records_[r.node_id] = r; }
    const std::map<NodeId, ReputationRecord>& records() const { return records_; }
    double lambda() const { return lambda_; }

    /// A missing or corrupt file leaves the store empty (everyone neutral).
    bool load(const std::string& path);
    void save(const std::string& path) const;  // IoError

private:
    double lambda_;
    std::map<NodeId, ReputationRecord> records_;
};

}  // namespace tip::negotiation
