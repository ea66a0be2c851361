#include "tip/fieldbus.hpp"

#include <cmath>
#include <sstream>

#include "tip/error.hpp"

namespace tip::fieldbus {

cbor::Value FillTelemetry::to_cbor() const {
    return cbor::Value(cbor::canonical_map({{"pulses", static_cast<unsigned>(pulses)},
                                            {"valve_open", valve_open},
                                            {"pressure_bar", pressure_bar},
                                            {"temp_c", temp_c}}));
}

std::uint16_t read_register(const RegisterMap& regs, std::uint32_t address) {
    if (address < kPulsesMsw || address > kTempDeciC)
        throw Error(Errc::MissingRegister, "register " + std::to_string(address) + " is not mapped");
    auto it = regs.find(address);
    if (it == regs.end()) throw Error(Errc::MissingRegister, "register " + std::to_string(address) + " is missing");
    return it->second;
}

FillTelemetry map_registers(const RegisterMap& regs) {
    FillTelemetry t;
    const std::uint32_t msw = read_register(regs, kPulsesMsw);
    const std::uint32_t lsw = read_register(regs, kPulsesLsw);
    const std::uint16_t valve = read_register(regs, kValveState);
    const std::uint16_t mbar = read_register(regs, kPressureMbar);
    const std::uint16_t deci = read_register(regs, kTempDeciC);
    if (valve > 1) throw Error(Errc::InvalidValveState, "valve state " + std::to_string(valve) + " is neither 0 nor 1");
    t.pulses = (msw << 16) | lsw;
    t.valve_open = valve == 1;
    t.pressure_bar = static_cast<float>(mbar / 1000.0);
    t.temp_c = static_cast<float>(deci / 10.0);
    return t;
}

RegisterMap registers_for(std::uint32_t pulses, bool valve_open, std::uint16_t pressure_mbar,
                          std::uint16_t temp_deci_c) {
    return {{kPulsesMsw, static_cast<std::uint16_t>(pulses >> 16)},
            {kPulsesLsw, static_cast<std::uint16_t>(pulses & 0xFFFF)},
            {kValveState, static_cast<std::uint16_t>(valve_open ? 1 : 0)},
            {kPressureMbar, pressure_mbar},
            {kTempDeciC, temp_deci_c}};
}

orchestrator::Handler fill_handler(DataSchema schema, std::vector<RegisterMap>* log) {
    if (schema != DataSchema::U16 && schema != DataSchema::U32)
        throw Error(Errc::SchemaMismatch, "a filler reports pulses as u16 or u32");
    return [schema, log](const cbor::Value& params) {
        double volume = 500.0;
        if (const auto* v = params.find("volume_ml")) volume = v->as_double();
        if (!(volume >= 0)) throw Error(Errc::ProviderError, "volume_ml must be non-negative");
        const double pulses = std::nearbyint(volume / kMlPerPulse);
        const double limit = schema == DataSchema::U16 ? 65535.0 : 4294967295.0;
        if (pulses > limit) throw Error(Errc::TargetOverflow, "pulse counter overflow");
        // 2.5 bar inlet pressure, 23.5 degC.
        RegisterMap regs = registers_for(static_cast<std::uint32_t>(pulses), true, 2500, 235);
        if (log) log->push_back(regs);
        FillTelemetry t = map_registers(regs);
        return adapter::TypedValue{schema, cbor::Value(static_cast<unsigned>(t.pulses))};
    };
}

orchestrator::Handler make_handler(const std::string& kind, const Capability& cap, double value,
                                   std::vector<RegisterMap>* log) {
    if (kind == "fill") return fill_handler(cap.schema, log);
    if (kind == "constant") {
        cbor::Value v = adapter::coerce(value, cap.schema);
        DataSchema schema = cap.schema;
        return [v, schema](const cbor::Value&) { return adapter::TypedValue{schema, v}; };
    }
    if (kind == "error")
        return [](const cbor::Value&) -> adapter::TypedValue { throw Error(Errc::ProviderError, "device fault"); };
    throw Error(Errc::ConfigError, "unknown handler '" + kind + "'");
}

adapter::AdapterSpec pulse_to_ml_spec() { return {"pulse_to_ml", DataSchema::U32, DataSchema::F32, "x * 0.2"}; }

adapter::AdapterSpec pulse16_to_ml_spec() { return {"pulse16_to_ml", DataSchema::U16, DataSchema::F32, "x * 0.2"}; }

std::string factory_script(const FactoryOptions& o) {
    const int first_request_ms = 2000, interval_ms = 200;
    const int end_ms = first_request_ms + o.requests * interval_ms + 3000;
    std::ostringstream s;
    s << "[scenario]\nname = \"factory\"\nduration_ms = " << end_ms << "\nlatency_ms = 1\n\n";
    for (const auto& a : {pulse_to_ml_spec(), pulse16_to_ml_spec()})
        s << "[[adapter]]\nid = \"" << a.id << "\"\nsource_schema = \"" << schema_name(a.source_schema)
          << "\"\ntarget_schema = \"" << schema_name(a.target_schema) << "\"\nformula = \"" << a.formula << "\"\n\n";

    struct Station {
        const char* name;
        const char* capability;
        const char* schema;
        double availability;
        const char* handler;
    };
    const Station stations[] = {
        {"agent", nullptr, nullptr, 1.0, nullptr},
        {"mold", "machine:molding:blow", "f32", 0.98, "constant"},
        {"rinse", "machine:rinse:wash", "f32", 0.97, "constant"},
        {"fill_A", "machine:fluid:fill", "u16", 0.99, "fill"},
        {"fill_B", "machine:fluid:fill", "u32", 0.95, "fill"},
        {"cap", "machine:capping:mechanical", "f32", 0.96, "constant"},
        {"label", "machine:labelling:sticker", "f32", 0.97, "constant"},
    };
    for (const auto& st : stations)
        s << "[[node]]\nname = \"" << st.name << "\"\navailability = " << st.availability << "\n\n";
    for (const auto& st : stations)
        s << "[[event]]\nat_ms = 0\naction = \"start_node\"\nnode = \"" << st.name << "\"\n\n";
    for (const auto& st : stations) {
        if (!st.capability) continue;
        s << "[[event]]\nat_ms = 200\naction = \"register_capability\"\nnode = \"" << st.name
          << "\"\ncapability = \"" << st.capability << "\"\nschema = \"" << st.schema
          << "\"\nprecision = 0.995\nrate_hz = 10\nhandler = \"" << st.handler << "\"\nvalue = 1\n\n";
    }
    s << "[[event]]\nat_ms = 1000\naction = \"submit_intent\"\nnode = \"agent\"\nsession = \"fill\"\n"
         "capability = \"machine:fluid:fill\"\nschema = \"f32\"\nmax_latency_ms = 100\nmin_precision = 0.99\n"
         "params = { liquid = \"water\", volume_ml = 500 }\n\n";
    s << "[[event]]\nat_ms = 1900\naction = \"assert_state\"\nsession = \"fill\"\nstate = \"Active\"\n\n";
    s << "[[event]]\nat_ms = 1900\naction = \"assert_provider\"\nsession = \"fill\"\nnode = \"fill_A\"\n\n";
    s << "[[event]]\nat_ms = " << first_request_ms << "\naction = \"request_data\"\nsession = \"fill\"\ncount = "
      << o.requests << "\ninterval_ms = " << interval_ms
      << "\nparams = { liquid = \"water\", volume_ml = 500 }\n\n";

    const int degrade_ms = first_request_ms + o.degrade_after * interval_ms - interval_ms / 2;
    switch (o.degrade) {
        case Degrade::None:
            break;
        case Degrade::Latency:
            s << "[[event]]\nat_ms = " << degrade_ms
              << "\naction = \"set_latency\"\nnode = \"fill_A\"\nlatency_ms = 150\n\n";
            break;
        case Degrade::MuteBoth:
            s << "[[event]]\nat_ms = " << degrade_ms << "\naction = \"mute_node\"\nnode = \"fill_A\"\n\n";
            s << "[[event]]\nat_ms = " << degrade_ms << "\naction = \"mute_node\"\nnode = \"fill_B\"\n\n";
            break;
    }
    const int check_ms = end_ms - 100;
    if (o.degrade == Degrade::MuteBoth) {
        s << "[[event]]\nat_ms = " << check_ms << "\naction = \"assert_state\"\nsession = \"fill\"\nstate = \"Failed\"\n\n";
    } else {
        s << "[[event]]\nat_ms = " << check_ms << "\naction = \"assert_state\"\nsession = \"fill\"\nstate = \"Active\"\n\n";
        s << "[[event]]\nat_ms = " << check_ms << "\naction = \"assert_provider\"\nsession = \"fill\"\nnode = \""
          << (o.degrade == Degrade::Latency ? "fill_B" : "fill_A") << "\"\n\n";
        s << "[[event]]\nat_ms = " << check_ms << "\naction = \"assert_value\"\nsession = \"fill\"\nvalue = 500.0\n";
    }
    return s.str();
}

}  // namespace tip::fieldbus
