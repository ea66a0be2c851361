#pragma once

// Simulated Modbus holding registers of a filling machine and their mapping
// to the TIP telemetry record. No Modbus framing: registers live in memory.

#include <cstdint>
#include <map>
#include <string>

#include "tip/adapter.hpp"
#include "tip/orchestrator.hpp"

namespace tip::fieldbus {

inline constexpr std::uint32_t kPulsesMsw = 40001;
inline constexpr std::uint32_t kPulsesLsw = 40002;
inline constexpr std::uint32_t kValveState = 40003;
inline constexpr std::uint32_t kPressureMbar = 40004;
inline constexpr std::uint32_t kTempDeciC = 40005;

inline constexpr double kMlPerPulse = 0.2;

/// Holding registers by address. Only 40001..40005 are defined.
using RegisterMap = std::map<std::uint32_t, std::uint16_t>;

struct FillTelemetry {
    std::uint32_t pulses = 0;
    bool valve_open = false;
    float pressure_bar = 0;
    float temp_c = 0;

    /// pressure in [0, 10] bar and temperature in [0, 120] degC.
    bool in_range() const { return pressure_bar >= 0 && pressure_bar <= 10 && temp_c >= 0 && temp_c <= 120; }
    cbor::Value to_cbor() const;
    bool operator==(const FillTelemetry&) const = default;
};

/// MissingRegister for an address outside 40001..40005 or one not present.
std::uint16_t read_register(const RegisterMap& regs, std::uint32_t address);

/// MissingRegister, InvalidValveState (40003 not 0/1).
FillTelemetry map_registers(const RegisterMap& regs);

/// The register image a machine would expose for `t` (inverse of
/// map_registers for in-range values).
RegisterMap registers_for(std::uint32_t pulses, bool valve_open, std::uint16_t pressure_mbar,
                          std::uint16_t temp_deci_c);

/// A filling machine: each request fills params.volume_ml (default 500),
/// reads the resulting registers and returns the pulse count in `schema`
/// (u16 or u32). Every register image it produced is appended to `log`.
orchestrator::Handler fill_handler(DataSchema schema, std::vector<RegisterMap>* log = nullptr);

/// Handler by name: "fill" (above), "constant" (`value` coerced to the
/// capability schema) or "error" (always ProviderError). ConfigError otherwise.
orchestrator::Handler make_handler(const std::string& kind, const Capability& cap, double value,
                                   std::vector<RegisterMap>* log = nullptr);

/// Pulse -> millilitre adapters for 32- and 16-bit pulse counters.
adapter::AdapterSpec pulse_to_ml_spec();
adapter::AdapterSpec pulse16_to_ml_spec();

enum class Degrade { None, Latency, MuteBoth };

struct FactoryOptions {
    std::uint64_t seed = 42;
    Degrade degrade = Degrade::Latency;
    int requests = 20;
    int degrade_after = 5;  // requests answered before fill_A degrades
};

/// Scenario script for the bottling line: five stages, two fillers, one
/// agent that submits the fill intent and requests data periodically.
std::string factory_script(const FactoryOptions& opts);

}  // namespace tip::fieldbus
