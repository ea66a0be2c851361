#include "tip/wasm_runtime.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "tip/error.hpp"

static_assert(std::endian::native == std::endian::little, "linear memory access assumes a little-endian host");

namespace tip::wasm {

namespace {

constexpr int kMaxCallDepth = 256;
constexpr std::uint64_t kMaxLocals = 50'000;
constexpr std::uint32_t kMaxPages = 65536;

[[noreturn]] void bad(const std::string& why) { throw Error(Errc::InvalidModule, "invalid module: " + why); }
[[noreturn]] void trap(const std::string& why) { throw Error(Errc::Trap, "trap: " + why); }

std::string hex_op(std::uint8_t op) {
    static const char* digits = "0123456789abcdef";
    return std::string("0x") + digits[op >> 4] + digits[op & 15];
}

class Reader {
public:
    explicit Reader(ByteView d) : d_(d) {}

    bool done() const { return pos_ >= d_.size(); }

    std::uint8_t byte() {
        if (pos_ >= d_.size()) bad("unexpected end of data");
        return d_[pos_++];
    }

    ByteView take(std::size_t n) {
        if (n > d_.size() - pos_) bad("length runs past end of data");
        ByteView v = d_.subspan(pos_, n);
        pos_ += n;
        return v;
    }

    std::uint64_t uleb(int bits) {
        const int max_bytes = (bits + 6) / 7;
        std::uint64_t result = 0;
        for (int i = 0, shift = 0; i < max_bytes; ++i, shift += 7) {
            std::uint8_t b = byte();
            if (i == max_bytes - 1) {
                if (b & 0x80) bad("integer representation too long");
                if ((b & 0x7F) >> (bits - shift)) bad("integer too large");
            }
            result |= static_cast<std::uint64_t>(b & 0x7F) << shift;
            if (!(b & 0x80)) return result;
        }
        bad("integer representation too long");
    }

    std::int64_t sleb(int bits) {
        const int max_bytes = (bits + 6) / 7;
        std::uint64_t result = 0;
        int shift = 0;
        for (int i = 0; i < max_bytes; ++i) {
            std::uint8_t b = byte();
            if (shift < 64) result |= static_cast<std::uint64_t>(b & 0x7F) << shift;
            shift += 7;
            if (i == max_bytes - 1) {
                if (b & 0x80) bad("integer representation too long");
                int used = bits - (shift - 7);
                int rest = (b & 0x7F) >> (used - 1);
                if (rest != 0 && rest != (0x7F >> (used - 1))) bad("integer too large");
            }
            if (!(b & 0x80)) {
                if (shift < 64 && (b & 0x40)) result |= ~std::uint64_t{0} << shift;
                return static_cast<std::int64_t>(result);
            }
        }
        bad("integer representation too long");
    }

    std::uint32_t u32() { return static_cast<std::uint32_t>(uleb(32)); }

    std::string name() {
        auto v = take(u32());
        return std::string(v.begin(), v.end());
    }

private:
    ByteView d_;
    std::size_t pos_ = 0;
};

ValType valtype(std::uint8_t b) {
    switch (b) {
        case 0x7F: return ValType::I32;
        case 0x7E: return ValType::I64;
        case 0x7D: return ValType::F32;
        case 0x7C: return ValType::F64;
        default: bad("unknown value type " + hex_op(b));
    }
}

struct Sig {
    std::vector<ValType> in;
    ValType out;
};

std::optional<Sig> numeric_sig(std::uint8_t o) {
    using V = ValType;
    if (o == op::kI32Eqz) return Sig{{V::I32}, V::I32};
    if (o >= op::kI32Eq && o <= op::kI32GeU) return Sig{{V::I32, V::I32}, V::I32};
    if (o == op::kI64Eqz) return Sig{{V::I64}, V::I32};
    if (o == op::kI64Eq || o == op::kI64Ne) return Sig{{V::I64, V::I64}, V::I32};
    if (o >= op::kF32Eq && o <= op::kF32Ge) return Sig{{V::F32, V::F32}, V::I32};
    if (o >= op::kF64Eq && o <= op::kF64Ge) return Sig{{V::F64, V::F64}, V::I32};
    if (o >= op::kI32Add && o <= op::kI32ShrU) return Sig{{V::I32, V::I32}, V::I32};
    switch (o) {
        case op::kI64Add: case op::kI64Sub: case op::kI64Mul: case op::kI64And:
        case op::kI64Or: case op::kI64Xor: case op::kI64Shl: case op::kI64ShrU:
            return Sig{{V::I64, V::I64}, V::I64};
        case op::kF32Abs: case op::kF32Neg: case op::kF32Sqrt: return Sig{{V::F32}, V::F32};
        case op::kF64Abs: case op::kF64Neg: case op::kF64Sqrt: return Sig{{V::F64}, V::F64};
        case op::kI32WrapI64: return Sig{{V::I64}, V::I32};
        case op::kI64ExtendI32S: case op::kI64ExtendI32U: return Sig{{V::I32}, V::I64};
        case op::kF32ConvertI32S: case op::kF32ConvertI32U: return Sig{{V::I32}, V::F32};
        case op::kF32DemoteF64: return Sig{{V::F64}, V::F32};
        case op::kF64ConvertI32S: case op::kF64ConvertI32U: return Sig{{V::I32}, V::F64};
        case op::kF64PromoteF32: return Sig{{V::F32}, V::F64};
        case op::kI32ReinterpretF32: return Sig{{V::F32}, V::I32};
        case op::kF32ReinterpretI32: return Sig{{V::I32}, V::F32};
        default: break;
    }
    if (o >= op::kF32Add && o <= op::kF32Div) return Sig{{V::F32, V::F32}, V::F32};
    if (o >= op::kF64Add && o <= op::kF64Div) return Sig{{V::F64, V::F64}, V::F64};
    return std::nullopt;
}

// (value type, natural alignment log2, access width) for loads and stores.
struct MemOp {
    ValType type;
    std::uint32_t align;
    bool store;
};

std::optional<MemOp> mem_op(std::uint8_t o) {
    using V = ValType;
    switch (o) {
        case op::kI32Load: return MemOp{V::I32, 2, false};
        case op::kI64Load: return MemOp{V::I64, 3, false};
        case op::kF32Load: return MemOp{V::F32, 2, false};
        case op::kF64Load: return MemOp{V::F64, 3, false};
        case op::kI32Load8S: case op::kI32Load8U: return MemOp{V::I32, 0, false};
        case op::kI32Load16S: case op::kI32Load16U: return MemOp{V::I32, 1, false};
        case op::kI32Store: return MemOp{V::I32, 2, true};
        case op::kI64Store: return MemOp{V::I64, 3, true};
        case op::kF32Store: return MemOp{V::F32, 2, true};
        case op::kF64Store: return MemOp{V::F64, 3, true};
        case op::kI32Store8: return MemOp{V::I32, 0, true};
        case op::kI32Store16: return MemOp{V::I32, 1, true};
        default: return std::nullopt;
    }
}

// Type-checks one function body while translating it into Instr form.
// Follows the reference validation algorithm: an operand stack of possibly
// unknown types plus a control stack of open blocks.
class BodyCompiler {
public:
    BodyCompiler(const Module& m, Function& f, Reader& r) : m_(m), f_(f), r_(r) {
        const FuncType& ft = m.types[f.type];
        locals_ = ft.params;
        locals_.insert(locals_.end(), f.locals.begin(), f.locals.end());
        results_ = ft.results;
    }

    void run() {
        ctrls_.push_back(Ctrl{op::kBlock, results_, 0, false, 0, 0});
        while (!ctrls_.empty()) step();
        if (!r_.done()) bad("trailing bytes after function end");
    }

private:
    struct Ctrl {
        std::uint8_t op;
        std::vector<ValType> results;
        std::size_t height;
        bool unreachable;
        std::uint32_t at;       // index of the opening instruction
        std::uint32_t else_at;  // index of `else`, when present
    };
    using Slot = std::optional<ValType>;  // nullopt = unknown (unreachable code)

    void push(Slot t) { vals_.push_back(t); }

    Slot pop() {
        const Ctrl& c = ctrls_.back();
        if (vals_.size() == c.height) {
            if (c.unreachable) return std::nullopt;
            bad("operand stack underflow");
        }
        Slot t = vals_.back();
        vals_.pop_back();
        return t;
    }

    void pop_expect(ValType want) {
        Slot t = pop();
        if (t && *t != want)
            bad("type mismatch: expected " + std::string(valtype_name(want)) + ", found " +
                std::string(valtype_name(*t)));
    }

    void pop_all(const std::vector<ValType>& ts) {
        for (auto it = ts.rbegin(); it != ts.rend(); ++it) pop_expect(*it);
    }

    void push_all(const std::vector<ValType>& ts) {
        for (auto t : ts) push(t);
    }

    Ctrl pop_ctrl() {
        Ctrl c = ctrls_.back();
        pop_all(c.results);
        if (vals_.size() != c.height) bad("values left on stack at end of block");
        ctrls_.pop_back();
        return c;
    }

    static std::vector<ValType> label_types(const Ctrl& c) {
        return c.op == op::kLoop ? std::vector<ValType>{} : c.results;
    }

    void unreachable() {
        vals_.resize(ctrls_.back().height);
        ctrls_.back().unreachable = true;
    }

    void need_memory() const {
        if (!m_.memory) bad("memory instruction without a memory");
    }

    std::vector<ValType> block_type() {
        std::uint8_t bt = r_.byte();
        if (bt == op::kBlockEmpty) return {};
        return {valtype(bt)};
    }

    void step() {
        auto& code = f_.code;
        const auto idx = static_cast<std::uint32_t>(code.size());
        Instr ins;
        ins.op = r_.byte();
        switch (ins.op) {
            case op::kUnreachable:
                unreachable();
                break;
            case op::kNop:
                break;
            case op::kBlock:
            case op::kLoop:
            case op::kIf: {
                auto results = block_type();
                if (ins.op == op::kIf) pop_expect(ValType::I32);
                ins.arity = static_cast<std::uint8_t>(results.size());
                ctrls_.push_back(Ctrl{ins.op, results, vals_.size(), false, idx, 0});
                break;
            }
            case op::kElse: {
                if (ctrls_.back().op != op::kIf) bad("else without matching if");
                Ctrl c = pop_ctrl();
                code[c.at].b = idx;
                ctrls_.push_back(Ctrl{op::kElse, c.results, vals_.size(), false, c.at, idx});
                break;
            }
            case op::kEnd: {
                Ctrl c = pop_ctrl();
                if (c.op == op::kIf && !c.results.empty()) bad("if without else cannot produce a value");
                if (!ctrls_.empty()) {
                    code[c.at].a = idx;
                    if (c.op == op::kIf) code[c.at].b = idx;
                    if (c.op == op::kElse) code[c.else_at].a = idx;
                    push_all(c.results);
                }
                break;
            }
            case op::kBr:
            case op::kBrIf: {
                ins.a = r_.u32();
                if (ins.a >= ctrls_.size()) bad("branch depth out of range");
                if (ins.op == op::kBrIf) pop_expect(ValType::I32);
                auto ts = label_types(ctrls_[ctrls_.size() - 1 - ins.a]);
                pop_all(ts);
                if (ins.op == op::kBr)
                    unreachable();
                else
                    push_all(ts);
                break;
            }
            case op::kReturn:
                pop_all(results_);
                unreachable();
                break;
            case op::kCall: {
                ins.a = r_.u32();
                if (ins.a >= m_.funcs.size()) bad("call to unknown function");
                const FuncType& t = m_.func_type(ins.a);
                pop_all(t.params);
                push_all(t.results);
                break;
            }
            case op::kDrop:
                pop();
                break;
            case op::kSelect: {
                pop_expect(ValType::I32);
                Slot t1 = pop();
                Slot t2 = pop();
                if (t1 && t2 && *t1 != *t2) bad("select operands differ in type");
                push(t1 ? t1 : t2);
                break;
            }
            case op::kLocalGet:
            case op::kLocalSet:
            case op::kLocalTee: {
                ins.a = r_.u32();
                if (ins.a >= locals_.size()) bad("local index out of range");
                ValType t = locals_[ins.a];
                if (ins.op == op::kLocalGet) {
                    push(t);
                } else {
                    pop_expect(t);
                    if (ins.op == op::kLocalTee) push(t);
                }
                break;
            }
            case op::kMemorySize:
            case op::kMemoryGrow:
                need_memory();
                if (r_.byte() != 0) bad("memory index must be zero");
                if (ins.op == op::kMemoryGrow) pop_expect(ValType::I32);
                push(ValType::I32);
                break;
            case op::kI32Const:
                ins.imm = static_cast<std::uint32_t>(static_cast<std::int32_t>(r_.sleb(32)));
                push(ValType::I32);
                break;
            case op::kI64Const:
                ins.imm = static_cast<std::uint64_t>(r_.sleb(64));
                push(ValType::I64);
                break;
            case op::kF32Const:
            case op::kF64Const: {
                int n = ins.op == op::kF32Const ? 4 : 8;
                auto raw = r_.take(static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i) ins.imm |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
                push(ins.op == op::kF32Const ? ValType::F32 : ValType::F64);
                break;
            }
            default: {
                if (auto mo = mem_op(ins.op)) {
                    need_memory();
                    std::uint32_t align = r_.u32();
                    ins.a = r_.u32();
                    if (align > mo->align) bad("alignment exceeds natural alignment");
                    if (mo->store) pop_expect(mo->type);
                    pop_expect(ValType::I32);
                    if (!mo->store) push(mo->type);
                    break;
                }
                auto sig = numeric_sig(ins.op);
                if (!sig) bad("unsupported opcode " + hex_op(ins.op));
                pop_all(sig->in);
                push(sig->out);
                break;
            }
        }
        code.push_back(ins);
    }

    const Module& m_;
    Function& f_;
    Reader& r_;
    std::vector<ValType> locals_;
    std::vector<ValType> results_;
    std::vector<Slot> vals_;
    std::vector<Ctrl> ctrls_;
};

std::uint64_t f32_bits(float v) { return std::bit_cast<std::uint32_t>(v); }
std::uint64_t f64_bits(double v) { return std::bit_cast<std::uint64_t>(v); }
float as_f32(std::uint64_t b) { return std::bit_cast<float>(static_cast<std::uint32_t>(b)); }
double as_f64(std::uint64_t b) { return std::bit_cast<double>(b); }
std::uint32_t u32_of(std::uint64_t b) { return static_cast<std::uint32_t>(b); }
std::int32_t s32_of(std::uint64_t b) { return static_cast<std::int32_t>(static_cast<std::uint32_t>(b)); }

}  // namespace

Value Value::i32(std::int32_t v) { return {ValType::I32, static_cast<std::uint32_t>(v)}; }
Value Value::i64(std::int64_t v) { return {ValType::I64, static_cast<std::uint64_t>(v)}; }
Value Value::f32(float v) { return {ValType::F32, f32_bits(v)}; }
Value Value::f64(double v) { return {ValType::F64, f64_bits(v)}; }
float Value::as_f32() const { return wasm::as_f32(bits); }
double Value::as_f64() const { return wasm::as_f64(bits); }

std::optional<std::uint32_t> Module::exported_function(std::string_view name) const {
    auto it = exports.find(name);
    if (it == exports.end() || it->second.kind != 0) return std::nullopt;
    return it->second.index;
}

bool Module::exports_memory(std::string_view name) const {
    auto it = exports.find(name);
    return it != exports.end() && it->second.kind == 2;
}

Module decode_module(ByteView bytes) {
    static constexpr std::uint8_t kHeader[8] = {0x00, 0x61, 0x73, 0x6D, 0x01, 0x00, 0x00, 0x00};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kHeader, 4) != 0) bad("bad magic");
    if (std::memcmp(bytes.data() + 4, kHeader + 4, 4) != 0) bad("unsupported version");

    Reader r(bytes.subspan(8));
    Module m;
    std::size_t declared_funcs = 0;
    bool have_code = false;
    int last_id = 0;
    while (!r.done()) {
        std::uint8_t id = r.byte();
        ByteView body = r.take(r.u32());
        Reader s(body);
        if (id == 0) {
            s.name();  // custom section: name must at least be well-formed
            continue;
        }
        if (id <= last_id) bad("section out of order or repeated");
        last_id = id;
        switch (id) {
            case 1: {
                std::uint32_t n = s.u32();
                for (std::uint32_t i = 0; i < n; ++i) {
                    if (s.byte() != 0x60) bad("expected function type");
                    FuncType t;
                    for (std::uint32_t k = s.u32(); k > 0; --k) t.params.push_back(valtype(s.byte()));
                    for (std::uint32_t k = s.u32(); k > 0; --k) t.results.push_back(valtype(s.byte()));
                    if (t.results.size() > 1) bad("multiple results are not supported");
                    m.types.push_back(std::move(t));
                }
                break;
            }
            case 3: {
                std::uint32_t n = s.u32();
                for (std::uint32_t i = 0; i < n; ++i) {
                    Function f;
                    f.type = s.u32();
                    if (f.type >= m.types.size()) bad("function type index out of range");
                    m.funcs.push_back(std::move(f));
                }
                declared_funcs = n;
                break;
            }
            case 5: {
                std::uint32_t n = s.u32();
                if (n > 1) bad("at most one memory");
                if (n == 1) {
                    std::uint8_t flag = s.byte();
                    if (flag > 1) bad("bad memory limits flag");
                    Module::Limits lim;
                    lim.min = s.u32();
                    if (flag == 1) lim.max = s.u32();
                    if (lim.min > kMaxPages || (lim.max && (*lim.max > kMaxPages || *lim.max < lim.min)))
                        bad("bad memory limits");
                    m.memory = lim;
                }
                break;
            }
            case 7: {
                std::uint32_t n = s.u32();
                for (std::uint32_t i = 0; i < n; ++i) {
                    std::string name = s.name();
                    Module::Export e;
                    e.kind = s.byte();
                    e.index = s.u32();
                    if (e.kind == 0) {
                        if (e.index >= m.funcs.size()) bad("export of unknown function");
                    } else if (e.kind == 2) {
                        if (!m.memory || e.index != 0) bad("export of unknown memory");
                    } else {
                        bad("unsupported export kind");
                    }
                    if (!m.exports.emplace(std::move(name), e).second) bad("duplicate export name");
                }
                break;
            }
            case 10: {
                std::uint32_t n = s.u32();
                if (n != declared_funcs) bad("function and code section counts differ");
                for (std::uint32_t i = 0; i < n; ++i) {
                    Reader fb(s.take(s.u32()));
                    Function& f = m.funcs[i];
                    std::uint64_t total = 0;
                    for (std::uint32_t k = fb.u32(); k > 0; --k) {
                        std::uint32_t count = fb.u32();
                        ValType t = valtype(fb.byte());
                        total += count;
                        if (total > kMaxLocals) bad("too many locals");
                        f.locals.insert(f.locals.end(), count, t);
                    }
                    BodyCompiler(m, f, fb).run();
                }
                have_code = true;
                break;
            }
            case 11: {
                if (!m.memory) bad("data segment without a memory");
                std::uint32_t n = s.u32();
                for (std::uint32_t i = 0; i < n; ++i) {
                    if (s.u32() != 0) bad("only active data segments for memory 0 are supported");
                    if (s.byte() != op::kI32Const) bad("data offset must be i32.const");
                    auto offset = static_cast<std::uint32_t>(static_cast<std::int32_t>(s.sleb(32)));
                    if (s.byte() != op::kEnd) bad("data offset expression not terminated");
                    auto payload = s.take(s.u32());
                    m.data.emplace_back(offset, Bytes(payload.begin(), payload.end()));
                }
                break;
            }
            case 2: bad("imports are not allowed");
            case 6: bad("globals are not allowed");
            case 8: bad("start functions are not allowed");
            default: bad("unsupported section " + std::to_string(id));
        }
        if (!s.done()) bad("section size mismatch");
    }
    if (declared_funcs != 0 && !have_code) bad("function section without code section");
    return m;
}

Instance::Instance(std::shared_ptr<const Module> module, SandboxConfig cfg) : module_(std::move(module)), cfg_(cfg) {
    if (!module_->memory) return;
    const auto& lim = *module_->memory;
    if (lim.min > cfg_.linear_memory_pages)
        trap("module requires " + std::to_string(lim.min) + " pages, sandbox allows " +
             std::to_string(cfg_.linear_memory_pages));
    max_pages_ = std::min(cfg_.linear_memory_pages, lim.max.value_or(kMaxPages));
    memory_.assign(static_cast<std::size_t>(lim.min) * kPageSize, 0);
    for (const auto& [offset, bytes] : module_->data) {
        if (static_cast<std::uint64_t>(offset) + bytes.size() > memory_.size()) trap("data segment out of bounds");
        std::copy(bytes.begin(), bytes.end(), memory_.begin() + offset);
    }
}

std::vector<Value> Instance::invoke(std::string_view name, const std::vector<Value>& args) {
    auto fi = module_->exported_function(name);
    if (!fi) throw Error(Errc::InvalidModule, "no exported function '" + std::string(name) + "'");
    const FuncType& t = module_->func_type(*fi);
    if (args.size() != t.params.size()) throw Error(Errc::InvalidModule, "argument count mismatch");
    std::vector<std::uint64_t> stack;
    stack.reserve(256);
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i].type != t.params[i]) throw Error(Errc::InvalidModule, "argument type mismatch");
        std::uint64_t bits = args[i].bits;
        if (args[i].type == ValType::I32 || args[i].type == ValType::F32) bits &= 0xFFFFFFFFu;
        stack.push_back(bits);
    }
    fuel_used_ = 0;
    deadline_ = std::chrono::steady_clock::now() + cfg_.timeout;
    call(*fi, stack, 0);
    std::vector<Value> out;
    for (std::size_t i = 0; i < t.results.size(); ++i)
        out.push_back(Value{t.results[i], stack[stack.size() - t.results.size() + i]});
    return out;
}

void Instance::tick() {
    if (++fuel_used_ > cfg_.fuel_limit) trap("instruction budget exhausted");
    if ((fuel_used_ & 4095) == 0 && std::chrono::steady_clock::now() > deadline_)
        throw Error(Errc::Timeout, "sandbox timeout");
}

std::uint8_t* Instance::address(std::uint32_t base, std::uint32_t offset, std::uint32_t size) {
    std::uint64_t ea = static_cast<std::uint64_t>(base) + offset;
    if (ea + size > memory_.size()) trap("out of bounds memory access");
    return memory_.data() + ea;
}

void Instance::call(std::uint32_t fi, std::vector<std::uint64_t>& stack, int depth) {
    if (depth >= kMaxCallDepth) trap("call stack exhausted");
    const Function& f = module_->funcs[fi];
    const FuncType& t = module_->types[f.type];
    const std::size_t np = t.params.size();
    std::vector<std::uint64_t> locals(np + f.locals.size(), 0);
    for (std::size_t i = np; i-- > 0;) {
        locals[i] = stack.back();
        stack.pop_back();
    }

    struct Label {
        std::size_t height;
        std::uint32_t cont;
        std::uint8_t arity;
        bool loop;
    };
    const auto& code = f.code;
    const auto n = static_cast<std::uint32_t>(code.size());
    std::vector<Label> labels;
    labels.push_back({stack.size(), n, static_cast<std::uint8_t>(t.results.size()), false});

    auto pop = [&stack]() {
        std::uint64_t v = stack.back();
        stack.pop_back();
        return v;
    };
    std::uint32_t pc = 0;
    auto branch = [&](std::uint32_t depth_n) {
        const Label l = labels[labels.size() - 1 - depth_n];
        if (l.arity) {
            std::uint64_t v = stack.back();
            stack.resize(l.height);
            stack.push_back(v);
        } else {
            stack.resize(l.height);
        }
        labels.resize(labels.size() - depth_n - (l.loop ? 0 : 1));
        pc = l.cont;
    };

    while (pc < n) {
        tick();
        const Instr& ins = code[pc];
        switch (ins.op) {
            case op::kUnreachable: trap("unreachable executed");
            case op::kNop: ++pc; break;
            case op::kBlock:
                labels.push_back({stack.size(), ins.a + 1, ins.arity, false});
                ++pc;
                break;
            case op::kLoop:
                labels.push_back({stack.size(), pc + 1, 0, true});
                ++pc;
                break;
            case op::kIf: {
                std::uint64_t c = pop();
                labels.push_back({stack.size(), ins.a + 1, ins.arity, false});
                if (u32_of(c) != 0)
                    ++pc;
                else if (ins.b != ins.a)
                    pc = ins.b + 1;
                else
                    pc = ins.a;
                break;
            }
            case op::kElse:
                labels.pop_back();
                pc = ins.a + 1;
                break;
            case op::kEnd:
                labels.pop_back();
                ++pc;
                break;
            case op::kBr: branch(ins.a); break;
            case op::kBrIf:
                if (u32_of(pop()) != 0)
                    branch(ins.a);
                else
                    ++pc;
                break;
            case op::kReturn: branch(static_cast<std::uint32_t>(labels.size() - 1)); break;
            case op::kCall:
                call(ins.a, stack, depth + 1);
                ++pc;
                break;
            case op::kDrop:
                stack.pop_back();
                ++pc;
                break;
            case op::kSelect: {
                std::uint64_t c = pop();
                std::uint64_t b = pop();
                std::uint64_t a = pop();
                stack.push_back(u32_of(c) ? a : b);
                ++pc;
                break;
            }
            case op::kLocalGet: stack.push_back(locals[ins.a]); ++pc; break;
            case op::kLocalSet: locals[ins.a] = pop(); ++pc; break;
            case op::kLocalTee: locals[ins.a] = stack.back(); ++pc; break;

            case op::kI32Load: case op::kF32Load: {
                std::uint32_t v;
                std::memcpy(&v, address(u32_of(pop()), ins.a, 4), 4);
                stack.push_back(v);
                ++pc;
                break;
            }
            case op::kI64Load: case op::kF64Load: {
                std::uint64_t v;
                std::memcpy(&v, address(u32_of(pop()), ins.a, 8), 8);
                stack.push_back(v);
                ++pc;
                break;
            }
            case op::kI32Load8S: stack.push_back(static_cast<std::uint32_t>(static_cast<std::int32_t>(static_cast<std::int8_t>(*address(u32_of(pop()), ins.a, 1))))); ++pc; break;
            case op::kI32Load8U: stack.push_back(*address(u32_of(pop()), ins.a, 1)); ++pc; break;
            case op::kI32Load16S:
            case op::kI32Load16U: {
                std::uint16_t v;
                std::memcpy(&v, address(u32_of(pop()), ins.a, 2), 2);
                std::uint32_t w = ins.op == op::kI32Load16S
                                      ? static_cast<std::uint32_t>(static_cast<std::int32_t>(static_cast<std::int16_t>(v)))
                                      : v;
                stack.push_back(w);
                ++pc;
                break;
            }
            case op::kI32Store: case op::kF32Store: {
                auto v = u32_of(pop());
                std::memcpy(address(u32_of(pop()), ins.a, 4), &v, 4);
                ++pc;
                break;
            }
            case op::kI64Store: case op::kF64Store: {
                std::uint64_t v = pop();
                std::memcpy(address(u32_of(pop()), ins.a, 8), &v, 8);
                ++pc;
                break;
            }
            case op::kI32Store8: {
                auto v = static_cast<std::uint8_t>(pop());
                *address(u32_of(pop()), ins.a, 1) = v;
                ++pc;
                break;
            }
            case op::kI32Store16: {
                auto v = static_cast<std::uint16_t>(pop());
                std::memcpy(address(u32_of(pop()), ins.a, 2), &v, 2);
                ++pc;
                break;
            }
            case op::kMemorySize: stack.push_back(memory_.size() / kPageSize); ++pc; break;
            case op::kMemoryGrow: {
                std::uint32_t delta = u32_of(pop());
                auto old = static_cast<std::uint32_t>(memory_.size() / kPageSize);
                if (static_cast<std::uint64_t>(old) + delta > max_pages_) {
                    stack.push_back(0xFFFFFFFFu);
                } else {
                    memory_.resize(static_cast<std::size_t>(old + delta) * kPageSize, 0);
                    stack.push_back(old);
                }
                ++pc;
                break;
            }
            case op::kI32Const: case op::kI64Const: case op::kF32Const: case op::kF64Const:
                stack.push_back(ins.imm);
                ++pc;
                break;

            default: {
                // Numeric instructions: operands are popped right to left.
                std::uint64_t r = 0;
                const std::uint8_t o = ins.op;
                if (o == op::kI32Eqz) {
                    r = u32_of(pop()) == 0;
                } else if (o == op::kI64Eqz) {
                    r = pop() == 0;
                } else if (o >= op::kI32Eq && o <= op::kI32GeU) {
                    std::uint32_t b = u32_of(pop()), a = u32_of(pop());
                    auto sa = static_cast<std::int32_t>(a), sb = static_cast<std::int32_t>(b);
                    switch (o) {
                        case op::kI32Eq: r = a == b; break;
                        case op::kI32Ne: r = a != b; break;
                        case op::kI32LtS: r = sa < sb; break;
                        case op::kI32LtU: r = a < b; break;
                        case op::kI32GtS: r = sa > sb; break;
                        case op::kI32GtU: r = a > b; break;
                        case op::kI32LeS: r = sa <= sb; break;
                        case op::kI32LeU: r = a <= b; break;
                        case op::kI32GeS: r = sa >= sb; break;
                        default: r = a >= b; break;
                    }
                } else if (o == op::kI64Eq || o == op::kI64Ne) {
                    std::uint64_t b = pop(), a = pop();
                    r = (a == b) == (o == op::kI64Eq);
                } else if (o >= op::kF32Eq && o <= op::kF32Ge) {
                    float b = as_f32(pop()), a = as_f32(pop());
                    switch (o) {
                        case op::kF32Eq: r = a == b; break;
                        case op::kF32Ne: r = a != b; break;
                        case op::kF32Lt: r = a < b; break;
                        case op::kF32Gt: r = a > b; break;
                        case op::kF32Le: r = a <= b; break;
                        default: r = a >= b; break;
                    }
                } else if (o >= op::kF64Eq && o <= op::kF64Ge) {
                    double b = as_f64(pop()), a = as_f64(pop());
                    switch (o) {
                        case op::kF64Eq: r = a == b; break;
                        case op::kF64Ne: r = a != b; break;
                        case op::kF64Lt: r = a < b; break;
                        case op::kF64Gt: r = a > b; break;
                        case op::kF64Le: r = a <= b; break;
                        default: r = a >= b; break;
                    }
                } else if (o >= op::kI32Add && o <= op::kI32ShrU) {
                    std::uint32_t b = u32_of(pop()), a = u32_of(pop());
                    auto sa = static_cast<std::int32_t>(a), sb = static_cast<std::int32_t>(b);
                    std::uint32_t v = 0;
                    switch (o) {
                        case op::kI32Add: v = a + b; break;
                        case op::kI32Sub: v = a - b; break;
                        case op::kI32Mul: v = a * b; break;
                        case op::kI32DivS:
                            if (b == 0) trap("integer divide by zero");
                            if (sa == std::numeric_limits<std::int32_t>::min() && sb == -1) trap("integer overflow");
                            v = static_cast<std::uint32_t>(sa / sb);
                            break;
                        case op::kI32DivU:
                            if (b == 0) trap("integer divide by zero");
                            v = a / b;
                            break;
                        case op::kI32RemS:
                            if (b == 0) trap("integer divide by zero");
                            v = sb == -1 ? 0 : static_cast<std::uint32_t>(sa % sb);
                            break;
                        case op::kI32RemU:
                            if (b == 0) trap("integer divide by zero");
                            v = a % b;
                            break;
                        case op::kI32And: v = a & b; break;
                        case op::kI32Or: v = a | b; break;
                        case op::kI32Xor: v = a ^ b; break;
                        case op::kI32Shl: v = a << (b & 31); break;
                        case op::kI32ShrS: v = static_cast<std::uint32_t>(sa >> (b & 31)); break;
                        default: v = a >> (b & 31); break;
                    }
                    r = v;
                } else if (o >= op::kF32Add && o <= op::kF32Div) {
                    float b = as_f32(pop()), a = as_f32(pop());
                    float v = o == op::kF32Add ? a + b : o == op::kF32Sub ? a - b : o == op::kF32Mul ? a * b : a / b;
                    r = f32_bits(v);
                } else if (o >= op::kF64Add && o <= op::kF64Div) {
                    double b = as_f64(pop()), a = as_f64(pop());
                    double v = o == op::kF64Add ? a + b : o == op::kF64Sub ? a - b : o == op::kF64Mul ? a * b : a / b;
                    r = f64_bits(v);
                } else {
                    switch (o) {
                        case op::kI64Add: { auto b = pop(), a = pop(); r = a + b; break; }
                        case op::kI64Sub: { auto b = pop(), a = pop(); r = a - b; break; }
                        case op::kI64Mul: { auto b = pop(), a = pop(); r = a * b; break; }
                        case op::kI64And: { auto b = pop(), a = pop(); r = a & b; break; }
                        case op::kI64Or: { auto b = pop(), a = pop(); r = a | b; break; }
                        case op::kI64Xor: { auto b = pop(), a = pop(); r = a ^ b; break; }
                        case op::kI64Shl: { auto b = pop(), a = pop(); r = a << (b & 63); break; }
                        case op::kI64ShrU: { auto b = pop(), a = pop(); r = a >> (b & 63); break; }
                        // Sign manipulation is a bit operation, NaN payloads included.
                        case op::kF32Abs: r = pop() & 0x7FFFFFFFu; break;
                        case op::kF32Neg: r = (pop() ^ 0x80000000u) & 0xFFFFFFFFu; break;
                        case op::kF32Sqrt: r = f32_bits(std::sqrt(as_f32(pop()))); break;
                        case op::kF64Abs: r = pop() & 0x7FFFFFFFFFFFFFFFull; break;
                        case op::kF64Neg: r = pop() ^ 0x8000000000000000ull; break;
                        case op::kF64Sqrt: r = f64_bits(std::sqrt(as_f64(pop()))); break;
                        case op::kI32WrapI64: r = u32_of(pop()); break;
                        case op::kI64ExtendI32S: r = static_cast<std::uint64_t>(static_cast<std::int64_t>(s32_of(pop()))); break;
                        case op::kI64ExtendI32U: r = u32_of(pop()); break;
                        case op::kF32ConvertI32S: r = f32_bits(static_cast<float>(s32_of(pop()))); break;
                        case op::kF32ConvertI32U: r = f32_bits(static_cast<float>(u32_of(pop()))); break;
                        case op::kF32DemoteF64: r = f32_bits(static_cast<float>(as_f64(pop()))); break;
                        case op::kF64ConvertI32S: r = f64_bits(static_cast<double>(s32_of(pop()))); break;
                        case op::kF64ConvertI32U: r = f64_bits(static_cast<double>(u32_of(pop()))); break;
                        case op::kF64PromoteF32: r = f64_bits(static_cast<double>(as_f32(pop()))); break;
                        case op::kI32ReinterpretF32: case op::kF32ReinterpretI32: r = u32_of(pop()); break;
                        default: trap("unsupported opcode " + hex_op(o));  // unreachable after validation
                    }
                }
                stack.push_back(r);
                ++pc;
                break;
            }
        }
    }
}

}  // namespace tip::wasm
