#pragma once

// Micro-benchmarks shared by the CLI and the acceptance checks.

#include <cstdint>
#include <string>
#include <vector>

#include "tip/negotiation.hpp"

namespace tip::bench {

struct Timing {
    std::string kind;
    std::size_t size = 0;     // workload size (candidates, invocations, ...)
    std::size_t samples = 0;  // timed repetitions
    double mean_us = 0, median_us = 0, min_us = 0, max_us = 0;

    std::string json() const;
    std::string text() const;
};

/// Seeded synthetic candidates for the scoring benchmark.
std::vector<negotiation::CandidateInput> synthetic_candidates(std::size_t n, std::uint64_t seed);
negotiation::Intent synthetic_intent();

/// One sample = one score() over `candidates` inputs.
Timing scoring(std::size_t candidates, std::size_t repeats = 10);
/// One sample = one warm execute_scalar through a cached adapter.
Timing translate(std::size_t invocations);
/// One sample = full signed-ephemeral handshake, both sides.
Timing handshake(std::size_t runs);
/// One sample = seal + open of `payload_bytes`.
Timing seal_open(std::size_t runs, std::size_t payload_bytes = 1024);

}  // namespace tip::bench
