#pragma once

// Canonical CBOR: definite lengths only, shortest integer heads, map entries
// sorted by their encoded key bytes (integer keys therefore ascend), floats
// always as 64-bit. Decoding accepts any well-formed definite-length item.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "tip/bytes.hpp"

namespace tip::cbor {

struct Value;
using Array = std::vector<Value>;
using Map = std::vector<std::pair<Value, Value>>;

struct Null {
    bool operator==(const Null&) const = default;
};

struct Value {
    // uint64 holds non-negative integers, int64 only negative ones.
    std::variant<Null, bool, std::uint64_t, std::int64_t, double, Bytes, std::string, Array, Map>
        data;

    Value() : data(Null{}) {}
    Value(bool b) : data(b) {}
    Value(int v) { set_int(v); }
    Value(long v) { set_int(v); }
    Value(long long v) { set_int(v); }
    Value(unsigned v) : data(static_cast<std::uint64_t>(v)) {}
    Value(unsigned long v) : data(static_cast<std::uint64_t>(v)) {}
    Value(unsigned long long v) : data(static_cast<std::uint64_t>(v)) {}
    Value(double d) : data(d) {}
    Value(float f) : data(static_cast<double>(f)) {}
    Value(Bytes b) : data(std::move(b)) {}
    Value(ByteView b) : data(Bytes(b.begin(), b.end())) {}
    Value(std::string s) : data(std::move(s)) {}
    Value(const char* s) : data(std::string(s)) {}
    Value(std::string_view s) : data(std::string(s)) {}
    Value(Array a) : data(std::move(a)) {}
    Value(Map m) : data(std::move(m)) {}

    bool is_null() const { return std::holds_alternative<Null>(data); }
    bool is_bool() const { return std::holds_alternative<bool>(data); }
    bool is_uint() const { return std::holds_alternative<std::uint64_t>(data); }
    bool is_int() const { return is_uint() || std::holds_alternative<std::int64_t>(data); }
    bool is_float() const { return std::holds_alternative<double>(data); }
    bool is_number() const { return is_int() || is_float(); }
    bool is_bytes() const { return std::holds_alternative<Bytes>(data); }
    bool is_text() const { return std::holds_alternative<std::string>(data); }
    bool is_array() const { return std::holds_alternative<Array>(data); }
    bool is_map() const { return std::holds_alternative<Map>(data); }

    // Accessors throw Error(Errc::SchemaMismatch) on type mismatch.
    bool as_bool() const;
    std::uint64_t as_uint() const;
    std::int64_t as_int() const;
    double as_double() const;  // any number
    const Bytes& as_bytes() const;
    const std::string& as_text() const;
    const Array& as_array() const;
    const Map& as_map() const;

    /// Map lookup; nullptr when absent or when this is not a map.
    const Value* find(const Value& key) const;
    const Value& at(const Value& key) const;  // SchemaMismatch when absent

    bool operator==(const Value& other) const;

private:
    void set_int(long long v) {
        if (v >= 0)
            data = static_cast<std::uint64_t>(v);
        else
            data = static_cast<std::int64_t>(v);
    }
};

Bytes encode(const Value& v);
void encode_into(Bytes& out, const Value& v);

/// Throws Error(Errc::MalformedCbor) on truncation, trailing bytes,
/// indefinite lengths, unsupported tags or nesting deeper than 64.
Value decode(ByteView data);

/// Builds a map whose entries are sorted canonically.
Map canonical_map(Map entries);

std::string diagnostic(const Value& v);

}  // namespace tip::cbor
