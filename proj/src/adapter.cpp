#include "tip/adapter.hpp"

#include <cmath>
#include <limits>
#include <mutex>

#include "tip/crypto.hpp"
#include "tip/error.hpp"
#include "tip/formula.hpp"
#include "tip/toml_lite.hpp"

namespace tip::adapter {

namespace {

std::atomic<std::uint64_t> g_invocations{0};

DataSchema scalar_schema(const std::string& name) {
    DataSchema s = schema_from_name(name);
    if (s == DataSchema::CborMap) throw Error(Errc::UnknownSchema, "adapters convert scalars, not '" + name + "'");
    return s;
}

AdapterSpec spec_from_table(const toml::Table& root) {
    const toml::Table* t = toml::find_table(root, "adapter");
    if (!t) throw Error(Errc::MissingField, "missing [adapter] table");
    auto field = [&](const char* key) -> const toml::Value& {
        const toml::Value* v = toml::find(*t, key);
        if (!v) throw Error(Errc::MissingField, std::string("adapter.") + key + " is missing");
        if (!v->is_string()) throw Error(Errc::TomlSyntax, "line " + std::to_string(v->line) + ": adapter." + key + " must be a string");
        return *v;
    };
    AdapterSpec spec;
    spec.id = field("id").as_string();
    if (spec.id.empty()) throw Error(Errc::MissingField, "adapter.id is empty");
    spec.source_schema = scalar_schema(field("source_schema").as_string());
    spec.target_schema = scalar_schema(field("target_schema").as_string());
    const toml::Value& f = field("formula");
    spec.formula = f.as_string();
    try {
        (void)formula::parse_formula(spec.formula);
    } catch (const Error& e) {
        throw Error(e.code(), "line " + std::to_string(f.line) + ", formula " + e.what());
    }
    return spec;
}

}  // namespace

AdapterSpec parse_adapter_toml(std::string_view text) { return spec_from_table(toml::parse(text)); }

AdapterSpec load_adapter_file(const std::string& path) { return spec_from_table(toml::parse_file(path)); }

wasm::Width width_for(DataSchema source, DataSchema target) {
    return source == DataSchema::F64 || target == DataSchema::F64 ? wasm::Width::F64 : wasm::Width::F32;
}

std::uint64_t cache_key(const AdapterSpec& spec) {
    std::string material;
    material += schema_name(spec.source_schema);
    material.push_back('\0');
    material += schema_name(spec.target_schema);
    material.push_back('\0');
    material += spec.formula;
    auto d = crypto::sha256(as_bytes(material));
    std::uint64_t k = 0;
    for (int i = 0; i < 8; ++i) k = (k << 8) | d[static_cast<std::size_t>(i)];
    return k;
}

CompiledAdapter compile(const AdapterSpec& spec) {
    auto ast = formula::parse_formula(spec.formula);
    CompiledAdapter c;
    c.spec = spec;
    c.width = width_for(spec.source_schema, spec.target_schema);
    auto emitted = wasm::emit_module(ast, c.width);
    c.wasm_bytes = std::move(emitted.wasm);
    c.text_form = std::move(emitted.wat);
    c.instructions = std::move(emitted.instructions);
    c.cache_key = cache_key(spec);
    c.module = std::make_shared<const wasm::Module>(wasm::decode_module(c.wasm_bytes));
    return c;
}

AdapterRegistry::Ptr AdapterRegistry::get_or_compile(const AdapterSpec& spec) {
    const std::uint64_t key = cache_key(spec);
    {
        std::shared_lock lock(mu_);
        auto it = by_key_.find(key);
        if (it != by_key_.end()) return it->second;
    }
    auto pair = std::make_pair(spec.source_schema, spec.target_schema);
    {
        std::shared_lock lock(mu_);
        if (by_pair_.count(pair))
            throw Error(Errc::DuplicateAdapter, "an adapter for " + std::string(schema_name(spec.source_schema)) +
                                                    " -> " + std::string(schema_name(spec.target_schema)) +
                                                    " is already registered");
    }
    auto compiled = std::make_shared<const CompiledAdapter>(compile(spec));
    std::unique_lock lock(mu_);
    if (auto it = by_key_.find(key); it != by_key_.end()) return it->second;  // raced with another writer
    if (by_pair_.count(pair))
        throw Error(Errc::DuplicateAdapter, "an adapter for " + std::string(schema_name(spec.source_schema)) +
                                                " -> " + std::string(schema_name(spec.target_schema)) +
                                                " is already registered");
    compilations_.fetch_add(1);
    by_key_.emplace(key, compiled);
    by_pair_.emplace(pair, key);
    return compiled;
}

AdapterRegistry::Ptr AdapterRegistry::find(DataSchema source, DataSchema target) const {
    std::shared_lock lock(mu_);
    auto it = by_pair_.find({source, target});
    return it == by_pair_.end() ? nullptr : by_key_.at(it->second);
}

AdapterRegistry::Ptr AdapterRegistry::find_by_id(std::string_view id) const {
    std::shared_lock lock(mu_);
    for (const auto& [key, a] : by_key_)
        if (a->spec.id == id) return a;
    return nullptr;
}

std::vector<AdapterRegistry::Ptr> AdapterRegistry::all() const {
    std::shared_lock lock(mu_);
    std::vector<Ptr> out;
    for (const auto& [key, a] : by_key_) out.push_back(a);
    return out;
}

std::size_t AdapterRegistry::size() const {
    std::shared_lock lock(mu_);
    return by_key_.size();
}

std::string AdapterRegistry::fingerprint() const {
    std::shared_lock lock(mu_);
    Bytes material;
    for (const auto& [key, a] : by_key_) {
        for (int i = 0; i < 8; ++i) material.push_back(static_cast<std::uint8_t>(key >> (56 - 8 * i)));
        append(material, a->wasm_bytes);
        material.insert(material.end(), a->spec.formula.begin(), a->spec.formula.end());
    }
    auto d = crypto::sha256(material);
    return to_hex(d);
}

std::uint64_t sandbox_invocations() { return g_invocations.load(); }

double execute_raw(const CompiledAdapter& adapter, double input, const SandboxConfig& cfg) {
    g_invocations.fetch_add(1);
    wasm::Instance inst(adapter.module, cfg);
    if (adapter.width == wasm::Width::F32) {
        auto out = inst.invoke("transform", {wasm::Value::f32(static_cast<float>(input))});
        return out.at(0).as_f32();
    }
    auto out = inst.invoke("transform", {wasm::Value::f64(input)});
    return out.at(0).as_f64();
}

cbor::Value coerce(double value, DataSchema target) {
    switch (target) {
        case DataSchema::F32: return cbor::Value(static_cast<float>(value));
        case DataSchema::F64: return cbor::Value(value);
        case DataSchema::CborMap: throw Error(Errc::SchemaMismatch, "cannot coerce a scalar to cbor_map");
        default: break;
    }
    if (std::isnan(value)) throw Error(Errc::TargetOverflow, "NaN has no integer representation");
    double r = std::nearbyint(value);  // default rounding mode: half to even
    double lo = 0, hi = 0;
    switch (target) {
        case DataSchema::U16: hi = 65535.0; break;
        case DataSchema::U32: hi = 4294967295.0; break;
        default:
            lo = -2147483648.0;
            hi = 2147483647.0;
            break;
    }
    if (!(r >= lo && r <= hi))
        throw Error(Errc::TargetOverflow, std::to_string(value) + " does not fit " + std::string(schema_name(target)));
    if (r < 0) return cbor::Value(static_cast<long long>(r));
    return cbor::Value(static_cast<unsigned long long>(r));
}

cbor::Value execute_scalar(const CompiledAdapter& adapter, double input, const SandboxConfig& cfg) {
    return coerce(execute_raw(adapter, input, cfg), adapter.spec.target_schema);
}

Bytes execute_buffer(const std::shared_ptr<const wasm::Module>& module, ByteView payload, const SandboxConfig& cfg) {
    auto fi = module->exported_function("transform_buf");
    if (!fi || !module->exports_memory("memory"))
        throw Error(Errc::InvalidModule, "buffer modules export transform_buf and memory");
    const auto& t = module->func_type(*fi);
    if (t.params != std::vector<wasm::ValType>{wasm::ValType::I32, wasm::ValType::I32} ||
        t.results != std::vector<wasm::ValType>{wasm::ValType::I64})
        throw Error(Errc::InvalidModule, "transform_buf must be (i32, i32) -> i64");

    g_invocations.fetch_add(1);
    wasm::Instance inst(module, cfg);
    auto& mem = inst.memory();
    if (kBufferBase + payload.size() > mem.size()) throw Error(Errc::Trap, "payload does not fit guest memory");
    std::copy(payload.begin(), payload.end(), mem.begin() + kBufferBase);
    auto out = inst.invoke("transform_buf", {wasm::Value::i32(static_cast<std::int32_t>(kBufferBase)),
                                             wasm::Value::i32(static_cast<std::int32_t>(payload.size()))});
    const std::uint64_t packed = out.at(0).bits;
    const std::uint64_t offset = packed >> 32, length = packed & 0xFFFFFFFFu;
    const auto& after = inst.memory();  // may have grown
    if (offset + length > after.size())
        throw Error(Errc::MalformedResult, "result [" + std::to_string(offset) + ", +" + std::to_string(length) +
                                               ") exceeds guest memory");
    return Bytes(after.begin() + static_cast<std::ptrdiff_t>(offset),
                 after.begin() + static_cast<std::ptrdiff_t>(offset + length));
}

TypedValue translate(const AdapterRegistry& registry, const TypedValue& value, DataSchema target,
                     const SandboxConfig& cfg) {
    if (value.schema == target) return value;
    auto a = registry.find(value.schema, target);
    if (!a)
        throw Error(Errc::NoAdapter, "no adapter for " + std::string(schema_name(value.schema)) + " -> " +
                                         std::string(schema_name(target)));
    return TypedValue{target, execute_scalar(*a, value.value.as_double(), cfg)};
}

}  // namespace tip::adapter
