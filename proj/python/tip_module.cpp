#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tip/adapter.hpp"
#include "tip/fieldbus.hpp"
#include "tip/negotiation.hpp"
#include "tip/scenario.hpp"
#include "tip/vectors.hpp"
#include "tip/wire.hpp"

namespace py = pybind11;
using namespace tip;

namespace {

Bytes to_bytes(const py::bytes& b) {
    std::string_view v = b;
    return Bytes(v.begin(), v.end());
}

template <std::size_t N>
std::array<std::uint8_t, N> to_array(const py::bytes& b, const char* what) {
    std::string_view v = b;
    if (v.size() != N) throw Error(Errc::ConfigError, std::string(what) + " must be " + std::to_string(N) + " bytes");
    std::array<std::uint8_t, N> a{};
    std::copy(v.begin(), v.end(), a.begin());
    return a;
}

template <class C>
py::bytes as_py(const C& c) {
    return py::bytes(reinterpret_cast<const char*>(c.data()), c.size());
}

py::dict header_dict(const wire::PacketHeader& h) {
    py::dict d;
    d["magic"] = h.magic;
    d["version"] = h.version;
    d["packet_type"] = static_cast<int>(h.packet_type);
    d["transaction_id"] = h.transaction_id.hex();
    d["payload_length"] = h.payload_length;
    d["capability_hash"] = h.capability_hash;
    d["sequence_number"] = h.sequence_number;
    d["flags"] = h.flags;
    d["timestamp_us"] = h.timestamp_us;
    d["ttl_ms"] = h.ttl_ms;
    d["checksum"] = h.checksum;
    d["signature"] = as_py(h.signature);
    return d;
}

template <class T>
T get_or(const py::dict& d, const char* key, T fallback) {
    return d.contains(key) ? d[key].cast<T>() : fallback;
}

Uuid uuid_from_hex(const std::string& hex) {
    Uuid u;
    u.bytes = array_from_hex<16>(hex);
    return u;
}

wire::PacketHeader header_from_dict(const py::dict& d) {
    wire::PacketHeader h;
    h.magic = get_or<std::uint16_t>(d, "magic", wire::kMagic);
    h.version = get_or<std::uint8_t>(d, "version", wire::kVersion);
    h.packet_type = static_cast<wire::PacketType>(get_or<int>(d, "packet_type", 0x01));
    if (d.contains("transaction_id")) h.transaction_id = uuid_from_hex(d["transaction_id"].cast<std::string>());
    h.payload_length = get_or<std::uint32_t>(d, "payload_length", 0);
    h.capability_hash = get_or<std::uint32_t>(d, "capability_hash", 0);
    h.sequence_number = get_or<std::uint32_t>(d, "sequence_number", 0);
    h.flags = get_or<std::uint32_t>(d, "flags", 0);
    h.timestamp_us = get_or<std::uint64_t>(d, "timestamp_us", 0);
    h.ttl_ms = get_or<std::uint32_t>(d, "ttl_ms", 0);
    h.checksum = get_or<std::uint32_t>(d, "checksum", 0);
    if (d.contains("signature")) h.signature = to_array<64>(d["signature"].cast<py::bytes>(), "signature");
    return h;
}

py::object value_to_py(const cbor::Value& v) {
    if (v.is_float()) return py::float_(v.as_double());
    if (v.is_int()) return py::int_(v.as_int());
    return py::str(cbor::diagnostic(v));
}

}  // namespace

PYBIND11_MODULE(_tip, m) {
    m.doc() = "TIP core bindings";

    static py::exception<Error> tip_error(m, "TipError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            // args = (name, numeric code, message)
            py::tuple args = py::make_tuple(std::string(errc_name(e.code())), static_cast<int>(e.code()), e.what());
            PyErr_SetObject(tip_error.ptr(), args.ptr());
        }
    });

    m.attr("HEADER_SIZE") = wire::kHeaderSize;
    m.attr("MAGIC") = wire::kMagic;
    m.attr("VERSION") = wire::kVersion;

    m.def("error_name", [](int code) { return std::string(errc_name(static_cast<Errc>(code))); });

    // --- wire ---
    m.def("decode_header", [](const py::bytes& b) { return header_dict(wire::decode_header(to_bytes(b))); });
    m.def("encode_header", [](const py::dict& d) { return as_py(wire::encode_header(header_from_dict(d))); });
    m.def("crc32", [](const py::bytes& b) { return wire::crc32(to_bytes(b)); });
    m.def("capability_hash", [](const std::string& id) { return wire::capability_hash(id); });

    py::class_<crypto::NodeIdentity>(m, "Identity")
        .def(py::init([](const py::bytes& seed) { return crypto::NodeIdentity::from_seed(to_array<32>(seed, "seed")); }),
             py::arg("seed"))
        .def_property_readonly("public_key", [](const crypto::NodeIdentity& i) { return as_py(i.public_key()); })
        .def_property_readonly("node_id", [](const crypto::NodeIdentity& i) { return i.node_id.hex(); })
        .def("sign", [](const crypto::NodeIdentity& i, const py::bytes& msg) {
            return as_py(crypto::sign(i.key, to_bytes(msg)));
        });
    m.def("verify", [](const py::bytes& pub, const py::bytes& msg, const py::bytes& sig) {
        return crypto::verify(to_array<32>(pub, "public key"), to_bytes(msg), to_array<64>(sig, "signature"));
    });

    m.def(
        "build_packet",
        [](const crypto::NodeIdentity& id, int packet_type, const py::bytes& payload, const py::dict& fields) {
            wire::HeaderFields f;
            f.packet_type = wire::packet_type_from_code(static_cast<std::uint8_t>(packet_type));
            if (fields.contains("transaction_id"))
                f.transaction_id = uuid_from_hex(fields["transaction_id"].cast<std::string>());
            f.capability_hash = get_or<std::uint32_t>(fields, "capability_hash", 0);
            f.sequence_number = get_or<std::uint32_t>(fields, "sequence_number", 0);
            f.flags = get_or<std::uint32_t>(fields, "flags", 0);
            f.timestamp_us = get_or<std::uint64_t>(fields, "timestamp_us", 0);
            f.ttl_ms = get_or<std::uint32_t>(fields, "ttl_ms", 5000);
            return as_py(wire::build_packet(f, to_bytes(payload), id.key).serialize());
        },
        py::arg("identity"), py::arg("packet_type"), py::arg("payload"), py::arg("fields") = py::dict());
    m.def(
        "validate",
        [](const py::bytes& raw, const py::bytes& sender, std::uint64_t now_us) {
            crypto::ReplayCache cache;
            return std::string(errc_name(wire::validate_verdict(to_bytes(raw), to_array<32>(sender, "sender"), now_us, cache)));
        },
        "Verdict name for one packet against a fresh replay cache.");

    // --- scoring ---
    m.def("proximity_utility", &negotiation::proximity_utility);
    m.def("confidence", &negotiation::confidence);
    m.def(
        "decay_reputation",
        [](double score, std::uint64_t last_update_us, std::uint64_t now_us, double lambda) {
            negotiation::ReputationRecord r;
            r.score = score;
            r.last_update = last_update_us;
            return negotiation::decay_reputation(r, now_us, lambda);
        },
        py::arg("score"), py::arg("last_update_us"), py::arg("now_us"), py::arg("lam") = negotiation::kDefaultLambda);
    m.def("ahp_weights", [](const std::vector<std::vector<double>>& rows) {
        if (rows.size() != 4) throw Error(Errc::ConfigError, "pairwise matrix must be 4x4");
        negotiation::Matrix4 mat{};
        for (std::size_t i = 0; i < 4; ++i) {
            if (rows[i].size() != 4) throw Error(Errc::ConfigError, "pairwise matrix must be 4x4");
            for (std::size_t j = 0; j < 4; ++j) mat[i][j] = rows[i][j];
        }
        auto r = negotiation::ahp_weights(mat);
        py::dict d;
        d["weights"] = r.weights.as_array();
        d["lambda_max"] = r.lambda_max;
        d["consistency_ratio"] = r.consistency_ratio;
        d["inconsistent"] = r.inconsistent;
        return d;
    });

    // --- adapters ---
    m.def("compile_adapter", [](const std::string& id, const std::string& source, const std::string& target,
                                const std::string& formula) {
        auto c = adapter::compile({id, schema_from_name(source), schema_from_name(target), formula});
        py::dict d;
        d["wasm"] = as_py(c.wasm_bytes);
        d["wat"] = c.text_form;
        d["instructions"] = c.instructions;
        return d;
    });
    m.def("run_adapter", [](const std::string& source, const std::string& target, const std::string& formula,
                            double x) {
        auto c = adapter::compile({"py", schema_from_name(source), schema_from_name(target), formula});
        return value_to_py(adapter::execute_scalar(c, x));
    });

    // --- fieldbus ---
    m.def("map_registers", [](const std::map<std::uint32_t, std::uint16_t>& regs) {
        auto t = fieldbus::map_registers(regs);
        py::dict d;
        d["pulses"] = t.pulses;
        d["valve_open"] = t.valve_open;
        d["pressure_bar"] = t.pressure_bar;
        d["temp_c"] = t.temp_c;
        return d;
    });
    m.def(
        "factory_script",
        [](const std::string& degrade, int requests) {
            fieldbus::FactoryOptions o;
            if (degrade == "none") o.degrade = fieldbus::Degrade::None;
            else if (degrade == "latency") o.degrade = fieldbus::Degrade::Latency;
            else if (degrade == "mute") o.degrade = fieldbus::Degrade::MuteBoth;
            else throw Error(Errc::ConfigError, "degrade must be none, latency or mute");
            o.requests = requests;
            return fieldbus::factory_script(o);
        },
        py::arg("degrade") = "latency", py::arg("requests") = 20);

    // --- simulator / vectors ---
    m.def(
        "run_scenario",
        [](const std::string& script, std::uint64_t seed) {
            scenario::Report r;
            {
                py::gil_scoped_release release;
                r = scenario::run(script, seed);
            }
            py::dict d;
            d["passed"] = r.passed();
            d["failures"] = r.failures;
            d["events"] = r.events;
            d["sim_log"] = r.sim_log_text();
            d["failed_states"] = r.failed_states;
            d["duplicate_responses"] = r.duplicate_responses;
            py::dict sessions;
            for (const auto& [name, s] : r.sessions) {
                py::list values;
                for (const auto& res : s.results) values.append(res.ok() ? value_to_py(res.value.value) : py::none());
                sessions[py::str(name)] = py::dict(py::arg("state") = s.final_state, py::arg("heals") = s.heals,
                                                   py::arg("providers") = s.providers, py::arg("values") = values);
            }
            d["sessions"] = sessions;
            return d;
        },
        py::arg("script"), py::arg("seed") = 42);
    m.def("golden_vectors", [] {
        auto set = vectors::build();
        py::dict frames;
        for (const auto& v : set.vectors) frames[py::str(v.name)] = as_py(v.frame);
        py::dict d;
        d["manifest"] = set.manifest_json();
        d["frames"] = frames;
        d["signer"] = as_py(set.signer);
        d["validate_now_us"] = set.validate_now_us;
        return d;
    });
}
