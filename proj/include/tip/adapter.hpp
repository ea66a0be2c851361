#pragma once

// Schema adapters: TOML descriptor -> formula -> WebAssembly module, cached in
// a registry keyed by schema pair and executed in a fresh sandbox per call.

#include <atomic>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "tip/cbor.hpp"
#include "tip/types.hpp"
#include "tip/wasm_emit.hpp"
#include "tip/wasm_runtime.hpp"

namespace tip::adapter {

using wasm::SandboxConfig;

struct AdapterSpec {
    std::string id;
    DataSchema source_schema = DataSchema::F32;
    DataSchema target_schema = DataSchema::F32;
    std::string formula;
};

/// Reads the [adapter] table. TomlSyntax, MissingField, UnknownSchema, and
/// formula errors re-thrown with the descriptor line prefixed.
AdapterSpec parse_adapter_toml(std::string_view text);
AdapterSpec load_adapter_file(const std::string& path);

/// f64 when either side is f64, f32 otherwise.
wasm::Width width_for(DataSchema source, DataSchema target);

/// First 8 bytes (big-endian) of SHA-256 over source, target and formula.
std::uint64_t cache_key(const AdapterSpec& spec);

struct CompiledAdapter {
    AdapterSpec spec;
    wasm::Width width = wasm::Width::F32;
    Bytes wasm_bytes;
    std::string text_form;
    std::vector<std::string> instructions;
    std::uint64_t cache_key = 0;
    std::shared_ptr<const wasm::Module> module;  // decoded once, instantiated per call
};

CompiledAdapter compile(const AdapterSpec& spec);

class AdapterRegistry {
public:
    using Ptr = std::shared_ptr<const CompiledAdapter>;

    /// Cache hit returns the stored adapter untouched. A second adapter for
    /// an already registered (source, target) pair throws DuplicateAdapter.
    Ptr get_or_compile(const AdapterSpec& spec);
    Ptr find(DataSchema source, DataSchema target) const;
    Ptr find_by_id(std::string_view id) const;
    std::vector<Ptr> all() const;

    std::size_t compilations() const { return compilations_.load(); }
    std::size_t size() const;
    /// Digest of every entry; used to show guest code cannot alter the registry.
    std::string fingerprint() const;

private:
    mutable std::shared_mutex mu_;
    std::map<std::uint64_t, Ptr> by_key_;
    std::map<std::pair<DataSchema, DataSchema>, std::uint64_t> by_pair_;
    std::atomic<std::size_t> compilations_{0};
};

/// Runs transform at the adapter's width; the input is converted to that
/// width first. Trap / Timeout from the sandbox propagate.
double execute_raw(const CompiledAdapter& adapter, double input, const SandboxConfig& cfg = {});

/// execute_raw followed by coercion to the target schema.
cbor::Value execute_scalar(const CompiledAdapter& adapter, double input, const SandboxConfig& cfg = {});

/// Float targets pass through (f32 narrowed, NaN and inf kept); integer
/// targets round half to even and must fit, else TargetOverflow (NaN too).
cbor::Value coerce(double value, DataSchema target);

/// Number of sandbox instantiations so far, process wide.
std::uint64_t sandbox_invocations();

/// Buffer ABI: exports "memory" and transform_buf(i32 offset, i32 len) -> i64
/// packing (result offset << 32 | result length). Input is written at 1024.
inline constexpr std::uint32_t kBufferBase = 1024;
Bytes execute_buffer(const std::shared_ptr<const wasm::Module>& module, ByteView payload,
                     const SandboxConfig& cfg = {});

struct TypedValue {
    DataSchema schema = DataSchema::F32;
    cbor::Value value;
};

/// Identity when schemas match (no sandbox); otherwise the registered adapter
/// for the pair. NoAdapter when none is registered.
TypedValue translate(const AdapterRegistry& registry, const TypedValue& value, DataSchema target,
                     const SandboxConfig& cfg = {});

}  // namespace tip::adapter
