#pragma once

// Sandboxed interpreter for a WebAssembly MVP subset: numeric i32/i64/f32/f64
// arithmetic, locals, structured control flow, direct calls and one linear
// memory. Modules with imports, tables, globals or a start function are
// rejected at decode time.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tip/bytes.hpp"
#include "tip/wasm_emit.hpp"

namespace tip::wasm {

inline constexpr std::uint32_t kPageSize = 65536;

struct SandboxConfig {
    std::uint32_t linear_memory_pages = 1;
    std::uint64_t fuel_limit = 1'000'000;
    std::chrono::microseconds timeout{50'000};
};

struct Value {
    ValType type = ValType::I32;
    std::uint64_t bits = 0;

    static Value i32(std::int32_t v);
    static Value i64(std::int64_t v);
    static Value f32(float v);
    static Value f64(double v);
    std::int32_t as_i32() const { return static_cast<std::int32_t>(bits); }
    std::int64_t as_i64() const { return static_cast<std::int64_t>(bits); }
    float as_f32() const;
    double as_f64() const;
};

// Pre-decoded instruction. Branch targets are resolved to instruction
// indices during validation so execution never rescans the byte stream.
struct Instr {
    std::uint8_t op = 0;
    std::uint8_t arity = 0;  // block result count
    std::uint32_t a = 0;     // index / depth / offset / end position
    std::uint32_t b = 0;     // else position for `if`
    std::uint64_t imm = 0;   // constants
};

struct Function {
    std::uint32_t type = 0;
    std::vector<ValType> locals;  // declared locals, params excluded
    std::vector<Instr> code;
};

struct Module {
    struct Limits {
        std::uint32_t min = 0;
        std::optional<std::uint32_t> max;
    };
    struct Export {
        std::uint8_t kind = 0;  // 0 function, 2 memory
        std::uint32_t index = 0;
    };

    std::vector<FuncType> types;
    std::vector<Function> funcs;
    std::optional<Limits> memory;
    std::map<std::string, Export, std::less<>> exports;
    std::vector<std::pair<std::uint32_t, Bytes>> data;

    const FuncType& func_type(std::uint32_t f) const { return types[funcs[f].type]; }
    std::optional<std::uint32_t> exported_function(std::string_view name) const;
    bool exports_memory(std::string_view name) const;
};

/// Decodes and validates; throws Error(InvalidModule) describing the first
/// problem found.
Module decode_module(ByteView bytes);

/// One sandbox. Never shared between threads; create one per execution.
class Instance {
public:
    /// Throws Trap when the module needs more memory than the sandbox allows
    /// or a data segment does not fit.
    Instance(std::shared_ptr<const Module> module, SandboxConfig cfg);

    /// Trap on guest faults and fuel exhaustion, Timeout on wall-clock
    /// overrun, InvalidModule on a missing export or argument mismatch.
    std::vector<Value> invoke(std::string_view name, const std::vector<Value>& args);

    Bytes& memory() { return memory_; }
    const Bytes& memory() const { return memory_; }
    std::uint64_t fuel_used() const { return fuel_used_; }

private:
    void call(std::uint32_t func, std::vector<std::uint64_t>& stack, int depth);
    std::uint8_t* address(std::uint32_t base, std::uint32_t offset, std::uint32_t size);
    void tick();

    std::shared_ptr<const Module> module_;
    SandboxConfig cfg_;
    Bytes memory_;
    std::uint32_t max_pages_ = 0;
    std::uint64_t fuel_used_ = 0;
    std::chrono::steady_clock::time_point deadline_;
};

}  // namespace tip::wasm
