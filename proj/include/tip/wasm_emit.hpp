#pragma once

// WebAssembly binary writer (MVP encoding) and the formula code generator.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tip/bytes.hpp"
#include "tip/formula.hpp"

namespace tip::wasm {

enum class ValType : std::uint8_t { I32 = 0x7F, I64 = 0x7E, F32 = 0x7D, F64 = 0x7C };

std::string_view valtype_name(ValType t);

namespace op {
inline constexpr std::uint8_t kUnreachable = 0x00, kNop = 0x01, kBlock = 0x02, kLoop = 0x03, kIf = 0x04,
                              kElse = 0x05, kEnd = 0x0B, kBr = 0x0C, kBrIf = 0x0D, kReturn = 0x0F, kCall = 0x10,
                              kDrop = 0x1A, kSelect = 0x1B, kLocalGet = 0x20, kLocalSet = 0x21, kLocalTee = 0x22,
                              kI32Load = 0x28, kI64Load = 0x29, kF32Load = 0x2A, kF64Load = 0x2B,
                              kI32Load8S = 0x2C, kI32Load8U = 0x2D, kI32Load16S = 0x2E, kI32Load16U = 0x2F,
                              kI32Store = 0x36, kI64Store = 0x37, kF32Store = 0x38, kF64Store = 0x39,
                              kI32Store8 = 0x3A, kI32Store16 = 0x3B, kMemorySize = 0x3F, kMemoryGrow = 0x40,
                              kI32Const = 0x41, kI64Const = 0x42, kF32Const = 0x43, kF64Const = 0x44,
                              kI32Eqz = 0x45, kI32Eq = 0x46, kI32Ne = 0x47, kI32LtS = 0x48, kI32LtU = 0x49,
                              kI32GtS = 0x4A, kI32GtU = 0x4B, kI32LeS = 0x4C, kI32LeU = 0x4D, kI32GeS = 0x4E,
                              kI32GeU = 0x4F, kI64Eqz = 0x50, kI64Eq = 0x51, kI64Ne = 0x52, kF32Eq = 0x5B,
                              kF32Ne = 0x5C, kF32Lt = 0x5D, kF32Gt = 0x5E, kF32Le = 0x5F, kF32Ge = 0x60,
                              kF64Eq = 0x61, kF64Ne = 0x62, kF64Lt = 0x63, kF64Gt = 0x64, kF64Le = 0x65,
                              kF64Ge = 0x66, kI32Add = 0x6A, kI32Sub = 0x6B, kI32Mul = 0x6C, kI32DivS = 0x6D,
                              kI32DivU = 0x6E, kI32RemS = 0x6F, kI32RemU = 0x70, kI32And = 0x71, kI32Or = 0x72,
                              kI32Xor = 0x73, kI32Shl = 0x74, kI32ShrS = 0x75, kI32ShrU = 0x76, kI64Add = 0x7C,
                              kI64Sub = 0x7D, kI64Mul = 0x7E, kI64And = 0x83, kI64Or = 0x84, kI64Xor = 0x85,
                              kI64Shl = 0x86, kI64ShrU = 0x88, kF32Abs = 0x8B, kF32Neg = 0x8C, kF32Sqrt = 0x91,
                              kF32Add = 0x92, kF32Sub = 0x93, kF32Mul = 0x94, kF32Div = 0x95, kF64Abs = 0x99,
                              kF64Neg = 0x9A, kF64Sqrt = 0x9F, kF64Add = 0xA0, kF64Sub = 0xA1, kF64Mul = 0xA2,
                              kF64Div = 0xA3, kI32WrapI64 = 0xA7, kI64ExtendI32S = 0xAC, kI64ExtendI32U = 0xAD,
                              kF32ConvertI32S = 0xB2, kF32ConvertI32U = 0xB3, kF32DemoteF64 = 0xB6,
                              kF64ConvertI32S = 0xB7, kF64ConvertI32U = 0xB8, kF64PromoteF32 = 0xBB,
                              kI32ReinterpretF32 = 0xBC, kF32ReinterpretI32 = 0xBE;
inline constexpr std::uint8_t kBlockEmpty = 0x40;
}  // namespace op

void put_uleb(Bytes& out, std::uint64_t v);
void put_sleb(Bytes& out, std::int64_t v);

struct FuncType {
    std::vector<ValType> params;
    std::vector<ValType> results;
    bool operator==(const FuncType&) const = default;
};

/// Instruction stream helper; every method appends one instruction.
class CodeWriter {
public:
    CodeWriter& op(std::uint8_t code);
    CodeWriter& local_get(std::uint32_t i);
    CodeWriter& local_set(std::uint32_t i);
    CodeWriter& local_tee(std::uint32_t i);
    CodeWriter& i32_const(std::int32_t v);
    CodeWriter& i64_const(std::int64_t v);
    CodeWriter& f32_const(float v);
    CodeWriter& f64_const(double v);
    CodeWriter& mem(std::uint8_t code, std::uint32_t align, std::uint32_t offset);
    CodeWriter& block(std::uint8_t code, std::optional<ValType> result = std::nullopt);
    CodeWriter& br(std::uint8_t code, std::uint32_t depth);
    CodeWriter& call(std::uint32_t func);
    CodeWriter& memory_size();
    CodeWriter& memory_grow();
    CodeWriter& end() { return op(op::kEnd); }

    const Bytes& bytes() const { return bytes_; }

private:
    Bytes bytes_;
};

class ModuleBuilder {
public:
    std::uint32_t add_type(const FuncType& t);
    /// `body` is the instruction stream including the final `end`.
    std::uint32_t add_function(const FuncType& t, const std::vector<std::pair<std::uint32_t, ValType>>& locals,
                               const Bytes& body);
    void set_memory(std::uint32_t min_pages, std::optional<std::uint32_t> max_pages = std::nullopt);
    void export_function(const std::string& name, std::uint32_t index);
    void export_memory(const std::string& name);
    void add_data(std::uint32_t offset, const Bytes& bytes);

    Bytes build() const;

private:
    struct Func {
        std::uint32_t type;
        std::vector<std::pair<std::uint32_t, ValType>> locals;
        Bytes body;
    };
    struct Export {
        std::string name;
        std::uint8_t kind;
        std::uint32_t index;
    };
    std::vector<FuncType> types_;
    std::vector<Func> funcs_;
    std::optional<std::pair<std::uint32_t, std::optional<std::uint32_t>>> memory_;
    std::vector<Export> exports_;
    std::vector<std::pair<std::uint32_t, Bytes>> data_;
};

enum class Width { F32, F64 };

struct EmittedModule {
    Width width = Width::F32;
    Bytes wasm;
    std::string wat;
    std::vector<std::string> instructions;  // body in text form, one per entry
};

/// Postorder walk: x -> local.get 0, constants -> fN.const, ops -> fN.op,
/// negation -> fN.neg. Exports "transform": (fN) -> fN. Throws DepthExceeded.
EmittedModule emit_module(const formula::Ast& ast, Width width);

/// Shortest round-trip decimal at the given width, always with a fraction
/// or exponent ("32.0", "1.8", "1e+30", "inf", "nan").
std::string format_const(double v, Width width);

}  // namespace tip::wasm
