#include <cmath>
#include <functional>

#include "doctest.h"
#include "oracles.hpp"
#include "tip/error.hpp"
#include "tip/fieldbus.hpp"

using namespace tip;
using namespace tip::fieldbus;

namespace {

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::Ok;
}

cbor::Value volume(double ml) { return cbor::Value(cbor::canonical_map({{"volume_ml", ml}})); }

std::uint64_t as_uint(const adapter::TypedValue& v) { return static_cast<std::uint64_t>(v.value.as_double()); }

}  // namespace

TEST_CASE("register map decodes the filling machine layout") {
    RegisterMap regs{{40001, 0x0001}, {40002, 0x86A0}, {40003, 1}, {40004, 2500}, {40005, 235}};
    const FillTelemetry t = map_registers(regs);
    CHECK(t.pulses == 100000u);
    CHECK(t.valve_open);
    CHECK(t.pressure_bar == doctest::Approx(2.5));
    CHECK(t.temp_c == doctest::Approx(23.5));
    CHECK(t.in_range());

    regs[kValveState] = 0;
    CHECK_FALSE(map_registers(regs).valve_open);
}

TEST_CASE("registers_for inverts map_registers") {
    Rng rng(0xF1E1D);
    for (int i = 0; i < 2000; ++i) {
        const auto pulses = static_cast<std::uint32_t>(rng.next());
        const bool valve = rng.next() & 1;
        const auto mbar = static_cast<std::uint16_t>(rng.next() % 10001);
        const auto deci = static_cast<std::uint16_t>(rng.next() % 1201);
        const RegisterMap regs = registers_for(pulses, valve, mbar, deci);
        CHECK(regs.size() == 5);
        CHECK(((std::uint32_t{regs.at(kPulsesMsw)} << 16) | regs.at(kPulsesLsw)) == pulses);
        const FillTelemetry t = map_registers(regs);
        CHECK(t.pulses == pulses);
        CHECK(t.valve_open == valve);
        CHECK(t.pressure_bar == static_cast<float>(mbar / 1000.0));
        CHECK(t.temp_c == static_cast<float>(deci / 10.0));
        CHECK(t.in_range());
        CHECK(registers_for(t.pulses, t.valve_open, mbar, deci) == regs);
    }
}

TEST_CASE("register errors") {
    RegisterMap regs = registers_for(10, true, 1000, 200);
    SUBCASE("valve state outside 0/1") {
        for (std::uint16_t v : {2, 3, 0xFFFF}) {
            regs[kValveState] = v;
            CHECK(code_of([&] { map_registers(regs); }) == Errc::InvalidValveState);
        }
    }
    SUBCASE("each missing register") {
        for (std::uint32_t a = kPulsesMsw; a <= kTempDeciC; ++a) {
            RegisterMap r = regs;
            r.erase(a);
            CHECK(code_of([&] { map_registers(r); }) == Errc::MissingRegister);
        }
    }
    SUBCASE("unmapped addresses") {
        regs[40006] = 1;
        regs[40000] = 1;
        CHECK(code_of([&] { read_register(regs, 40006); }) == Errc::MissingRegister);
        CHECK(code_of([&] { read_register(regs, 40000); }) == Errc::MissingRegister);
        CHECK(read_register(regs, kPressureMbar) == 1000);
    }
    SUBCASE("out-of-range readings are flagged, not rejected") {
        regs[kPressureMbar] = 12000;
        const FillTelemetry t = map_registers(regs);
        CHECK(t.pressure_bar == doctest::Approx(12.0));
        CHECK_FALSE(t.in_range());
    }
}

TEST_CASE("telemetry record encoding") {
    const FillTelemetry t = map_registers(registers_for(2500, true, 2500, 235));
    const cbor::Value v = t.to_cbor();
    CHECK(v.find("pulses")->as_double() == 2500);
    CHECK(v.find("valve_open")->as_bool());
    CHECK(v.find("pressure_bar")->as_double() == doctest::Approx(2.5));
    CHECK(v.find("temp_c")->as_double() == doctest::Approx(23.5));
}

TEST_CASE("fill handler counts 0.2 ml pulses") {
    std::vector<RegisterMap> log;
    auto h16 = fill_handler(DataSchema::U16, &log);
    auto h32 = fill_handler(DataSchema::U32, &log);

    const auto r = h16(volume(500));
    CHECK(r.schema == DataSchema::U16);
    CHECK(as_uint(r) == 2500);
    CHECK(as_uint(h32(cbor::Value(cbor::canonical_map({{"liquid", "water"}})))) == 2500);  // default volume
    CHECK(as_uint(h32(volume(0))) == 0);
    CHECK(as_uint(h32(volume(0.1))) == 0);  // 0.5 pulses, half to even
    CHECK(as_uint(h32(volume(0.5))) == 2);  // 2.5 pulses
    REQUIRE(log.size() == 5);
    CHECK(map_registers(log[0]).pulses == 2500);
    CHECK(map_registers(log[0]).valve_open);

    // 16-bit counter limit: 65535 pulses = 13107 ml.
    CHECK(as_uint(h16(volume(13107))) == 65535);
    CHECK(code_of([&] { h16(volume(13107.2)); }) == Errc::TargetOverflow);
    CHECK(as_uint(h32(volume(13107.2))) == 65536);
    CHECK(code_of([&] { h32(volume(1e10)); }) == Errc::TargetOverflow);

    CHECK(code_of([&] { h32(volume(-1)); }) == Errc::ProviderError);
    CHECK(code_of([&] { h32(volume(std::nan(""))); }) == Errc::ProviderError);
    CHECK(code_of([&] { fill_handler(DataSchema::F32); }) == Errc::SchemaMismatch);
}

TEST_CASE("pulse adapters turn 2500 pulses into 500 ml") {
    for (const auto& spec : {pulse_to_ml_spec(), pulse16_to_ml_spec()}) {
        CHECK(spec.target_schema == DataSchema::F32);
        const auto a = adapter::compile(spec);
        CHECK(adapter::execute_scalar(a, 2500.0).as_double() == 500.0);
    }
    CHECK(pulse_to_ml_spec().source_schema == DataSchema::U32);
    CHECK(pulse16_to_ml_spec().source_schema == DataSchema::U16);
}

TEST_CASE("handler factory") {
    Capability cap;
    cap.id = "machine:fluid:fill";
    cap.schema = DataSchema::U32;
    CHECK(as_uint(make_handler("fill", cap, 0)(volume(100))) == 500);

    cap.schema = DataSchema::U16;
    const auto c = make_handler("constant", cap, 41.6, nullptr)(cbor::Value());
    CHECK(c.schema == DataSchema::U16);
    CHECK(as_uint(c) == 42);
    CHECK(code_of([&] { make_handler("constant", cap, 70000, nullptr); }) == Errc::TargetOverflow);

    CHECK(code_of([&] { make_handler("error", cap, 0)(cbor::Value()); }) == Errc::ProviderError);
    CHECK(code_of([&] { make_handler("bogus", cap, 0); }) == Errc::ConfigError);
}

TEST_CASE("factory script shape") {
    FactoryOptions o;
    const std::string heal = factory_script(o);
    CHECK(heal.find("name = \"fill_A\"") != std::string::npos);
    CHECK(heal.find("name = \"fill_B\"") != std::string::npos);
    CHECK(heal.find("latency_ms = 150") != std::string::npos);
    CHECK(heal.find("value = 500.0") != std::string::npos);
    for (const char* cap : {"machine:molding:blow", "machine:rinse:wash", "machine:capping:mechanical",
                            "machine:labelling:sticker"})
        CHECK(heal.find(cap) != std::string::npos);

    o.degrade = Degrade::None;
    const std::string steady = factory_script(o);
    CHECK(steady.find("set_latency") == std::string::npos);
    CHECK(steady.find("mute_node") == std::string::npos);

    o.degrade = Degrade::MuteBoth;
    const std::string outage = factory_script(o);
    CHECK(outage.find("state = \"Failed\"") != std::string::npos);
    CHECK(factory_script(o) == outage);
}
