#include "tip/cbor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "tip/error.hpp"

namespace tip::cbor {

namespace {

constexpr int kMaxDepth = 64;

[[noreturn]] void mismatch(const char* want) {
    throw Error(Errc::SchemaMismatch, std::string("expected CBOR ") + want);
}

void put_head(Bytes& out, std::uint8_t major, std::uint64_t arg) {
    std::uint8_t m = static_cast<std::uint8_t>(major << 5);
    if (arg < 24) {
        out.push_back(m | static_cast<std::uint8_t>(arg));
    } else if (arg <= 0xff) {
        out.push_back(m | 24);
        out.push_back(static_cast<std::uint8_t>(arg));
    } else if (arg <= 0xffff) {
        out.push_back(m | 25);
        out.push_back(static_cast<std::uint8_t>(arg >> 8));
        out.push_back(static_cast<std::uint8_t>(arg));
    } else if (arg <= 0xffffffffULL) {
        out.push_back(m | 26);
        for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(arg >> (8 * i)));
    } else {
        out.push_back(m | 27);
        for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(arg >> (8 * i)));
    }
}

struct Encoder {
    Bytes& out;

    void operator()(const Null&) const { out.push_back(0xf6); }
    void operator()(bool b) const { out.push_back(b ? 0xf5 : 0xf4); }
    void operator()(std::uint64_t v) const { put_head(out, 0, v); }
    void operator()(std::int64_t v) const {
        put_head(out, 1, static_cast<std::uint64_t>(-(v + 1)));
    }
    void operator()(double d) const {
        out.push_back(0xfb);
        auto bits = std::bit_cast<std::uint64_t>(d);
        for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    void operator()(const Bytes& b) const {
        put_head(out, 2, b.size());
        out.insert(out.end(), b.begin(), b.end());
    }
    void operator()(const std::string& s) const {
        put_head(out, 3, s.size());
        out.insert(out.end(), s.begin(), s.end());
    }
    void operator()(const Array& a) const {
        put_head(out, 4, a.size());
        for (const auto& item : a) encode_into(out, item);
    }
    void operator()(const Map& m) const {
        std::vector<std::pair<Bytes, const Value*>> entries;
        entries.reserve(m.size());
        for (const auto& [k, v] : m) entries.emplace_back(encode(k), &v);
        std::sort(entries.begin(), entries.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        put_head(out, 5, entries.size());
        for (const auto& [kb, v] : entries) {
            out.insert(out.end(), kb.begin(), kb.end());
            encode_into(out, *v);
        }
    }
};

class Decoder {
public:
    explicit Decoder(ByteView data) : data_(data) {}

    Value item(int depth) {
        if (depth > kMaxDepth) fail("nesting too deep");
        std::uint8_t ib = byte();
        std::uint8_t major = ib >> 5;
        std::uint8_t info = ib & 0x1f;
        if (major == 7) return simple(info);
        std::uint64_t arg = argument(info);
        switch (major) {
            case 0: return Value(static_cast<unsigned long long>(arg));
            case 1: {
                if (arg > static_cast<std::uint64_t>(INT64_MAX)) fail("negative integer out of range");
                Value v;
                v.data = static_cast<std::int64_t>(-1 - static_cast<std::int64_t>(arg));
                return v;
            }
            case 2: {
                auto span = take(arg);
                return Value(Bytes(span.begin(), span.end()));
            }
            case 3: {
                auto span = take(arg);
                return Value(std::string(span.begin(), span.end()));
            }
            case 4: {
                if (arg > remaining()) fail("array length exceeds input");
                Array a;
                a.reserve(static_cast<std::size_t>(arg));
                for (std::uint64_t i = 0; i < arg; ++i) a.push_back(item(depth + 1));
                return Value(std::move(a));
            }
            case 5: {
                if (arg > remaining() / 2) fail("map length exceeds input");
                Map m;
                m.reserve(static_cast<std::size_t>(arg));
                for (std::uint64_t i = 0; i < arg; ++i) {
                    Value k = item(depth + 1);
                    Value v = item(depth + 1);
                    m.emplace_back(std::move(k), std::move(v));
                }
                return Value(std::move(m));
            }
            default: fail("tags are not supported");
        }
    }

    bool done() const { return pos_ == data_.size(); }

private:
    ByteView data_;
    std::size_t pos_ = 0;

    [[noreturn]] static void fail(const std::string& msg) {
        throw Error(Errc::MalformedCbor, "malformed CBOR: " + msg);
    }

    std::size_t remaining() const { return data_.size() - pos_; }

    std::uint8_t byte() {
        if (pos_ >= data_.size()) fail("truncated input");
        return data_[pos_++];
    }

    ByteView take(std::uint64_t n) {
        if (n > remaining()) fail("truncated input");
        auto span = data_.subspan(pos_, static_cast<std::size_t>(n));
        pos_ += static_cast<std::size_t>(n);
        return span;
    }

    std::uint64_t argument(std::uint8_t info) {
        if (info < 24) return info;
        int len = 0;
        switch (info) {
            case 24: len = 1; break;
            case 25: len = 2; break;
            case 26: len = 4; break;
            case 27: len = 8; break;
            case 31: fail("indefinite lengths are not supported");
            default: fail("reserved additional info");
        }
        std::uint64_t v = 0;
        for (int i = 0; i < len; ++i) v = (v << 8) | byte();
        return v;
    }

    Value simple(std::uint8_t info) {
        switch (info) {
            case 20: return Value(false);
            case 21: return Value(true);
            case 22: return Value();
            case 25: {
                std::uint16_t h = static_cast<std::uint16_t>(argument(25));
                return Value(half_to_double(h));
            }
            case 26: {
                auto bits = static_cast<std::uint32_t>(argument(26));
                return Value(static_cast<double>(std::bit_cast<float>(bits)));
            }
            case 27: {
                std::uint64_t bits = argument(27);
                return Value(std::bit_cast<double>(bits));
            }
            default: fail("unsupported simple value");
        }
    }

    static double half_to_double(std::uint16_t h) {
        int exp = (h >> 10) & 0x1f;
        int mant = h & 0x3ff;
        double v;
        if (exp == 0)
            v = std::ldexp(mant, -24);
        else if (exp != 31)
            v = std::ldexp(mant + 1024, exp - 25);
        else
            v = mant == 0 ? INFINITY : NAN;
        return (h & 0x8000) ? -v : v;
    }
};

}  // namespace

bool Value::as_bool() const {
    if (!is_bool()) mismatch("bool");
    return std::get<bool>(data);
}
std::uint64_t Value::as_uint() const {
    if (!is_uint()) mismatch("unsigned integer");
    return std::get<std::uint64_t>(data);
}
std::int64_t Value::as_int() const {
    if (auto* u = std::get_if<std::uint64_t>(&data)) {
        if (*u > static_cast<std::uint64_t>(INT64_MAX)) mismatch("int64");
        return static_cast<std::int64_t>(*u);
    }
    if (auto* i = std::get_if<std::int64_t>(&data)) return *i;
    mismatch("integer");
}
double Value::as_double() const {
    if (auto* d = std::get_if<double>(&data)) return *d;
    if (auto* u = std::get_if<std::uint64_t>(&data)) return static_cast<double>(*u);
    if (auto* i = std::get_if<std::int64_t>(&data)) return static_cast<double>(*i);
    mismatch("number");
}
const Bytes& Value::as_bytes() const {
    if (!is_bytes()) mismatch("byte string");
    return std::get<Bytes>(data);
}
const std::string& Value::as_text() const {
    if (!is_text()) mismatch("text string");
    return std::get<std::string>(data);
}
const Array& Value::as_array() const {
    if (!is_array()) mismatch("array");
    return std::get<Array>(data);
}
const Map& Value::as_map() const {
    if (!is_map()) mismatch("map");
    return std::get<Map>(data);
}

const Value* Value::find(const Value& key) const {
    auto* m = std::get_if<Map>(&data);
    if (!m) return nullptr;
    for (const auto& [k, v] : *m)
        if (k == key) return &v;
    return nullptr;
}

const Value& Value::at(const Value& key) const {
    const Value* v = find(key);
    if (!v) throw Error(Errc::SchemaMismatch, "missing CBOR map key " + diagnostic(key));
    return *v;
}

bool Value::operator==(const Value& other) const {
    if (data.index() != other.data.index()) return false;
    if (auto* d = std::get_if<double>(&data)) {
        return std::bit_cast<std::uint64_t>(*d) == std::bit_cast<std::uint64_t>(std::get<double>(other.data));
    }
    if (is_map()) {
        // Order-insensitive: compare canonical encodings.
        return encode(*this) == encode(other);
    }
    return data == other.data;
}

void encode_into(Bytes& out, const Value& v) { std::visit(Encoder{out}, v.data); }

Bytes encode(const Value& v) {
    Bytes out;
    encode_into(out, v);
    return out;
}

Value decode(ByteView data) {
    Decoder d(data);
    Value v = d.item(0);
    if (!d.done()) throw Error(Errc::MalformedCbor, "malformed CBOR: trailing bytes");
    return v;
}

Map canonical_map(Map entries) {
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return encode(a.first) < encode(b.first); });
    return entries;
}

std::string diagnostic(const Value& v) {
    std::ostringstream os;
    struct Visitor {
        std::ostringstream& os;
        void operator()(const Null&) const { os << "null"; }
        void operator()(bool b) const { os << (b ? "true" : "false"); }
        void operator()(std::uint64_t u) const { os << u; }
        void operator()(std::int64_t i) const { os << i; }
        void operator()(double d) const { os << d; }
        void operator()(const Bytes& b) const { os << "h'" << to_hex(b) << "'"; }
        void operator()(const std::string& s) const { os << '"' << s << '"'; }
        void operator()(const Array& a) const {
            os << '[';
            for (std::size_t i = 0; i < a.size(); ++i) {
                if (i) os << ", ";
                std::visit(*this, a[i].data);
            }
            os << ']';
        }
        void operator()(const Map& m) const {
            os << '{';
            for (std::size_t i = 0; i < m.size(); ++i) {
                if (i) os << ", ";
                std::visit(*this, m[i].first.data);
                os << ": ";
                std::visit(*this, m[i].second.data);
            }
            os << '}';
        }
    };
    std::visit(Visitor{os}, v.data);
    return os.str();
}

}  // namespace tip::cbor
