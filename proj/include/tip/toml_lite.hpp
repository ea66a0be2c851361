#pragma once

// Reader for the subset of TOML used by adapter descriptors, node
// configuration, intent files and scenario scripts: [tables], [[arrays of
// tables]], dotted keys, basic/literal strings, integers, floats, booleans,
// arrays and inline tables. Multi-line strings and dates are not supported.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tip::toml {

struct Value;
using Array = std::vector<Value>;
using Table = std::map<std::string, Value, std::less<>>;

struct Value {
    std::variant<std::string, std::int64_t, double, bool, Array, Table> data;
    int line = 0;

    bool is_string() const { return std::holds_alternative<std::string>(data); }
    bool is_integer() const { return std::holds_alternative<std::int64_t>(data); }
    bool is_float() const { return std::holds_alternative<double>(data); }
    bool is_number() const { return is_integer() || is_float(); }
    bool is_bool() const { return std::holds_alternative<bool>(data); }
    bool is_array() const { return std::holds_alternative<Array>(data); }
    bool is_table() const { return std::holds_alternative<Table>(data); }

    const std::string& as_string() const;
    std::int64_t as_integer() const;
    double as_number() const;  // integer or float
    bool as_bool() const;
    const Array& as_array() const;
    const Table& as_table() const;
};

/// Throws tip::Error(Errc::TomlSyntax) with "line N: ..." in the message.
Table parse(std::string_view text);
Table parse_file(const std::string& path);

const Value* find(const Table& table, std::string_view dotted_key);
const Table* find_table(const Table& table, std::string_view dotted_key);

std::optional<std::string> get_string(const Table& t, std::string_view key);
std::optional<double> get_number(const Table& t, std::string_view key);
std::optional<std::int64_t> get_integer(const Table& t, std::string_view key);
std::optional<bool> get_bool(const Table& t, std::string_view key);

}  // namespace tip::toml
