#pragma once

// Timeline-driven simulator harness. A script names nodes and a list of
// timed events; the harness runs them on a seeded SimNetwork and produces a
// JSON-lines event report plus assertion results.
//
//   [scenario]  name, duration_ms, latency_ms, loss
//   [[adapter]] id, source_schema, target_schema, formula
//   [[node]]    name, availability, malicious = "omit_countersign" | "tamper_contract"
//   [[event]]   at_ms, action, ...
//
// Actions: start_node, register_capability, submit_intent, request_data,
// mute_node, unmute_node, set_latency, close_session, assert_state,
// assert_value, assert_provider.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tip/orchestrator.hpp"
#include "tip/transport.hpp"

namespace tip::scenario {

struct SessionOutcome {
    std::string name;
    std::string node;
    std::string final_state;
    std::string error;
    int heals = 0;
    std::uint64_t requests = 0;
    std::vector<orchestrator::DataResult> results;  // in delivery order
    std::vector<std::string> providers;             // contract providers, in order
};

struct Report {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<std::string> events;  // JSON lines, virtual time only
    std::vector<std::string> failures;
    std::map<std::string, SessionOutcome> sessions;
    std::vector<std::string> sim_log;
    int failed_states = 0;        // transitions into Failed, all sessions
    int duplicate_responses = 0;  // results delivered more than once
    std::uint64_t end_time_us = 0;

    bool passed() const { return failures.empty(); }
    std::string events_text() const;   // events, newline-terminated
    std::string sim_log_text() const;
};

/// Parses and runs `script`. TomlSyntax / ConfigError for a bad script;
/// failed assertions are reported, not thrown.
Report run(const std::string& script, std::uint64_t seed);
Report run_file(const std::string& path, std::uint64_t seed);

}  // namespace tip::scenario
