#include "tip/wasm_emit.hpp"

#include <charconv>
#include <cmath>
#include <cstring>

#include "tip/error.hpp"

namespace tip::wasm {

std::string_view valtype_name(ValType t) {
    switch (t) {
        case ValType::I32: return "i32";
        case ValType::I64: return "i64";
        case ValType::F32: return "f32";
        case ValType::F64: return "f64";
    }
    return "?";
}

void put_uleb(Bytes& out, std::uint64_t v) {
    do {
        std::uint8_t b = v & 0x7F;
        v >>= 7;
        if (v) b |= 0x80;
        out.push_back(b);
    } while (v);
}

void put_sleb(Bytes& out, std::int64_t v) {
    for (;;) {
        std::uint8_t b = v & 0x7F;
        v >>= 7;  // arithmetic shift
        bool done = (v == 0 && !(b & 0x40)) || (v == -1 && (b & 0x40));
        if (!done) b |= 0x80;
        out.push_back(b);
        if (done) return;
    }
}

namespace {

void put_name(Bytes& out, const std::string& s) {
    put_uleb(out, s.size());
    out.insert(out.end(), s.begin(), s.end());
}

void put_section(Bytes& out, std::uint8_t id, const Bytes& body) {
    out.push_back(id);
    put_uleb(out, body.size());
    append(out, body);
}

}  // namespace

CodeWriter& CodeWriter::op(std::uint8_t code) {
    bytes_.push_back(code);
    return *this;
}
CodeWriter& CodeWriter::local_get(std::uint32_t i) {
    bytes_.push_back(op::kLocalGet);
    put_uleb(bytes_, i);
    return *this;
}
CodeWriter& CodeWriter::local_set(std::uint32_t i) {
    bytes_.push_back(op::kLocalSet);
    put_uleb(bytes_, i);
    return *this;
}
CodeWriter& CodeWriter::local_tee(std::uint32_t i) {
    bytes_.push_back(op::kLocalTee);
    put_uleb(bytes_, i);
    return *this;
}
CodeWriter& CodeWriter::i32_const(std::int32_t v) {
    bytes_.push_back(op::kI32Const);
    put_sleb(bytes_, v);
    return *this;
}
CodeWriter& CodeWriter::i64_const(std::int64_t v) {
    bytes_.push_back(op::kI64Const);
    put_sleb(bytes_, v);
    return *this;
}
CodeWriter& CodeWriter::f32_const(float v) {
    bytes_.push_back(op::kF32Const);
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    return *this;
}
CodeWriter& CodeWriter::f64_const(double v) {
    bytes_.push_back(op::kF64Const);
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    return *this;
}
CodeWriter& CodeWriter::mem(std::uint8_t code, std::uint32_t align, std::uint32_t offset) {
    bytes_.push_back(code);
    put_uleb(bytes_, align);
    put_uleb(bytes_, offset);
    return *this;
}
CodeWriter& CodeWriter::block(std::uint8_t code, std::optional<ValType> result) {
    bytes_.push_back(code);
    bytes_.push_back(result ? static_cast<std::uint8_t>(*result) : op::kBlockEmpty);
    return *this;
}
CodeWriter& CodeWriter::br(std::uint8_t code, std::uint32_t depth) {
    bytes_.push_back(code);
    put_uleb(bytes_, depth);
    return *this;
}
CodeWriter& CodeWriter::call(std::uint32_t func) {
    bytes_.push_back(op::kCall);
    put_uleb(bytes_, func);
    return *this;
}
CodeWriter& CodeWriter::memory_size() {
    bytes_.push_back(op::kMemorySize);
    bytes_.push_back(0);
    return *this;
}
CodeWriter& CodeWriter::memory_grow() {
    bytes_.push_back(op::kMemoryGrow);
    bytes_.push_back(0);
    return *this;
}

std::uint32_t ModuleBuilder::add_type(const FuncType& t) {
    for (std::size_t i = 0; i < types_.size(); ++i)
        if (types_[i] == t) return static_cast<std::uint32_t>(i);
    types_.push_back(t);
    return static_cast<std::uint32_t>(types_.size() - 1);
}

std::uint32_t ModuleBuilder::add_function(const FuncType& t,
                                          const std::vector<std::pair<std::uint32_t, ValType>>& locals,
                                          const Bytes& body) {
    funcs_.push_back(Func{add_type(t), locals, body});
    return static_cast<std::uint32_t>(funcs_.size() - 1);
}

void ModuleBuilder::set_memory(std::uint32_t min_pages, std::optional<std::uint32_t> max_pages) {
    memory_ = std::make_pair(min_pages, max_pages);
}

void ModuleBuilder::export_function(const std::string& name, std::uint32_t index) {
    exports_.push_back(Export{name, 0x00, index});
}

void ModuleBuilder::export_memory(const std::string& name) { exports_.push_back(Export{name, 0x02, 0}); }

void ModuleBuilder::add_data(std::uint32_t offset, const Bytes& bytes) { data_.emplace_back(offset, bytes); }

Bytes ModuleBuilder::build() const {
    Bytes out = {0x00, 0x61, 0x73, 0x6D, 0x01, 0x00, 0x00, 0x00};

    Bytes types;
    put_uleb(types, types_.size());
    for (const auto& t : types_) {
        types.push_back(0x60);
        put_uleb(types, t.params.size());
        for (auto p : t.params) types.push_back(static_cast<std::uint8_t>(p));
        put_uleb(types, t.results.size());
        for (auto r : t.results) types.push_back(static_cast<std::uint8_t>(r));
    }
    put_section(out, 1, types);

    Bytes funcs;
    put_uleb(funcs, funcs_.size());
    for (const auto& f : funcs_) put_uleb(funcs, f.type);
    put_section(out, 3, funcs);

    if (memory_) {
        Bytes mem;
        put_uleb(mem, 1);
        if (memory_->second) {
            mem.push_back(0x01);
            put_uleb(mem, memory_->first);
            put_uleb(mem, *memory_->second);
        } else {
            mem.push_back(0x00);
            put_uleb(mem, memory_->first);
        }
        put_section(out, 5, mem);
    }

    Bytes exports;
    put_uleb(exports, exports_.size());
    for (const auto& e : exports_) {
        put_name(exports, e.name);
        exports.push_back(e.kind);
        put_uleb(exports, e.index);
    }
    put_section(out, 7, exports);

    Bytes code;
    put_uleb(code, funcs_.size());
    for (const auto& f : funcs_) {
        Bytes body;
        put_uleb(body, f.locals.size());
        for (const auto& [count, type] : f.locals) {
            put_uleb(body, count);
            body.push_back(static_cast<std::uint8_t>(type));
        }
        append(body, f.body);
        put_uleb(code, body.size());
        append(code, body);
    }
    put_section(out, 10, code);

    if (!data_.empty()) {
        Bytes data;
        put_uleb(data, data_.size());
        for (const auto& [offset, bytes] : data_) {
            put_uleb(data, 0);  // active, memory 0
            data.push_back(op::kI32Const);
            put_sleb(data, static_cast<std::int32_t>(offset));
            data.push_back(op::kEnd);
            put_uleb(data, bytes.size());
            append(data, bytes);
        }
        put_section(out, 11, data);
    }
    return out;
}

std::string format_const(double v, Width width) {
    if (std::isnan(v)) return std::signbit(v) ? "-nan" : "nan";
    if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
    char buf[64];
    std::to_chars_result r = width == Width::F32 ? std::to_chars(buf, buf + sizeof buf, static_cast<float>(v))
                                                 : std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, r.ptr);
    if (s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
}

EmittedModule emit_module(const formula::Ast& ast, Width width) {
    if (ast.nodes.empty()) throw Error(Errc::UnexpectedToken, "empty formula");
    if (ast.depth() > formula::kMaxDepth)
        throw Error(Errc::DepthExceeded, "formula nests deeper than " + std::to_string(formula::kMaxDepth));

    const bool f32 = width == Width::F32;
    const std::string prefix = f32 ? "f32." : "f64.";
    EmittedModule m;
    m.width = width;
    CodeWriter code;

    // Children precede parents in the arena, but a node's subtrees are not
    // necessarily contiguous, so walk from the root explicitly.
    struct Frame {
        int node;
        bool expanded;
    };
    std::vector<Frame> stack{{ast.root(), false}};
    while (!stack.empty()) {
        Frame f = stack.back();
        stack.pop_back();
        const auto& n = ast.at(f.node);
        if (!f.expanded && (n.lhs >= 0)) {
            stack.push_back({f.node, true});
            if (n.rhs >= 0) stack.push_back({n.rhs, false});
            stack.push_back({n.lhs, false});
            continue;
        }
        switch (n.kind) {
            case formula::Kind::Variable:
                code.local_get(0);
                m.instructions.push_back("local.get 0");
                break;
            case formula::Kind::Constant:
                if (f32)
                    code.f32_const(static_cast<float>(n.value));
                else
                    code.f64_const(n.value);
                m.instructions.push_back(prefix + "const " + format_const(n.value, width));
                break;
            case formula::Kind::Neg:
                code.op(f32 ? op::kF32Neg : op::kF64Neg);
                m.instructions.push_back(prefix + "neg");
                break;
            case formula::Kind::Add:
                code.op(f32 ? op::kF32Add : op::kF64Add);
                m.instructions.push_back(prefix + "add");
                break;
            case formula::Kind::Sub:
                code.op(f32 ? op::kF32Sub : op::kF64Sub);
                m.instructions.push_back(prefix + "sub");
                break;
            case formula::Kind::Mul:
                code.op(f32 ? op::kF32Mul : op::kF64Mul);
                m.instructions.push_back(prefix + "mul");
                break;
            case formula::Kind::Div:
                code.op(f32 ? op::kF32Div : op::kF64Div);
                m.instructions.push_back(prefix + "div");
                break;
        }
    }
    code.end();

    ValType t = f32 ? ValType::F32 : ValType::F64;
    ModuleBuilder b;
    auto fn = b.add_function(FuncType{{t}, {t}}, {}, code.bytes());
    b.export_function("transform", fn);
    m.wasm = b.build();

    std::string ty(valtype_name(t));
    m.wat = "(module\n  (func (export \"transform\") (param " + ty + ") (result " + ty + ")";
    for (const auto& ins : m.instructions) m.wat += "\n    " + ins;
    m.wat += "))\n";
    return m;
}

}  // namespace tip::wasm
