#include "tip/toml_lite.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "tip/error.hpp"

namespace tip::toml {

namespace {

class Parser {
public:
    explicit Parser(std::string_view text) : src_(text) {}

    Table run() {
        Table root;
        Table* current = &root;
        while (true) {
            skip_ws_comments_newlines();
            if (eof()) break;
            if (peek() == '[') {
                current = parse_header(root);
            } else {
                parse_key_value(*current);
            }
            expect_line_end();
        }
        return root;
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    std::set<std::string> headers_;  // [table] headers seen, see header_id

    static std::string join(const std::vector<std::string>& path) {
        std::string out;
        for (const auto& p : path) out += (out.empty() ? "" : ".") + p;
        return out;
    }

    // Dotted path where every array of tables on the way contributes its
    // current element index, so [a.b] under two [[a]] entries differ.
    static std::string header_id(const Table& root, const std::vector<std::string>& path) {
        std::string id;
        const Table* t = &root;
        for (const auto& seg : path) {
            id += "." + seg;
            auto it = t->find(seg);
            if (it == t->end()) break;
            if (it->second.is_array()) {
                const auto& arr = it->second.as_array();
                id += "#" + std::to_string(arr.size());
                if (arr.empty() || !arr.back().is_table()) break;
                t = &arr.back().as_table();
            } else if (it->second.is_table()) {
                t = &it->second.as_table();
            } else {
                break;
            }
        }
        return id;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(Errc::TomlSyntax, "line " + std::to_string(line_) + ": " + msg);
    }

    bool eof() const { return pos_ >= src_.size(); }
    char peek(std::size_t ahead = 0) const {
        return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
    }
    char get() {
        char c = src_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }

    void skip_ws() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
    }
    void skip_comment() {
        if (peek() == '#') {
            while (!eof() && peek() != '\n') ++pos_;
        }
    }
    void skip_ws_comments_newlines() {
        while (!eof()) {
            skip_ws();
            skip_comment();
            if (peek() == '\n' || peek() == '\r') {
                get();
                continue;
            }
            break;
        }
    }
    void expect_line_end() {
        skip_ws();
        skip_comment();
        if (eof()) return;
        if (peek() == '\r') get();
        if (eof()) return;
        if (peek() != '\n') fail("expected end of line");
        get();
    }

    static bool bare_key_char(char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
               c == '_' || c == '-';
    }

    std::string parse_simple_key() {
        skip_ws();
        if (peek() == '"') return parse_basic_string();
        if (peek() == '\'') return parse_literal_string();
        std::string key;
        while (!eof() && bare_key_char(peek())) key.push_back(get());
        if (key.empty()) fail("expected key");
        return key;
    }

    std::vector<std::string> parse_dotted_key() {
        std::vector<std::string> parts{parse_simple_key()};
        skip_ws();
        while (peek() == '.') {
            get();
            parts.push_back(parse_simple_key());
            skip_ws();
        }
        return parts;
    }

    Table& descend(Table& base, const std::vector<std::string>& path, std::size_t count) {
        Table* t = &base;
        for (std::size_t i = 0; i < count; ++i) {
            auto it = t->find(path[i]);
            if (it == t->end()) {
                it = t->emplace(path[i], Value{Table{}, line_}).first;
            }
            Value& v = it->second;
            if (v.is_array()) {
                auto& arr = std::get<Array>(v.data);
                if (arr.empty() || !arr.back().is_table()) fail("key '" + path[i] + "' is not a table");
                t = &std::get<Table>(arr.back().data);
            } else if (v.is_table()) {
                t = &std::get<Table>(v.data);
            } else {
                fail("key '" + path[i] + "' is not a table");
            }
        }
        return *t;
    }

    Table* parse_header(Table& root) {
        get();  // '['
        bool array_of_tables = false;
        if (peek() == '[') {
            get();
            array_of_tables = true;
        }
        auto path = parse_dotted_key();
        skip_ws();
        if (peek() != ']') fail("expected ']'");
        get();
        if (array_of_tables) {
            if (peek() != ']') fail("expected ']]'");
            get();
        }
        Table& parent = descend(root, path, path.size() - 1);
        const std::string& last = path.back();
        auto it = parent.find(last);
        if (array_of_tables) {
            if (it == parent.end()) it = parent.emplace(last, Value{Array{}, line_}).first;
            if (!it->second.is_array()) fail("key '" + last + "' is not an array of tables");
            auto& arr = std::get<Array>(it->second.data);
            arr.push_back(Value{Table{}, line_});
            return &std::get<Table>(arr.back().data);
        }
        if (it == parent.end()) it = parent.emplace(last, Value{Table{}, line_}).first;
        if (!it->second.is_table()) fail("key '" + last + "' redefined");
        if (!headers_.insert(header_id(root, path)).second) fail("table [" + join(path) + "] defined twice");
        return &std::get<Table>(it->second.data);
    }

    void parse_key_value(Table& table) {
        auto path = parse_dotted_key();
        skip_ws();
        if (peek() != '=') fail("expected '=' after key");
        get();
        skip_ws();
        int key_line = line_;
        Value v = parse_value();
        v.line = key_line;
        Table& target = descend(table, path, path.size() - 1);
        if (target.count(path.back()) != 0) fail("duplicate key '" + path.back() + "'");
        target.emplace(path.back(), std::move(v));
    }

    std::string parse_basic_string() {
        get();  // opening quote
        if (peek() == '"' && peek(1) == '"') fail("multi-line strings are not supported");
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            char c = get();
            if (c == '"') break;
            if (c != '\\') {
                out.push_back(c);
                continue;
            }
            if (eof()) fail("unterminated escape");
            char e = get();
            switch (e) {
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                case 'r': out.push_back('\r'); break;
                case 'b': out.push_back('\b'); break;
                case 'f': out.push_back('\f'); break;
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                case 'u':
                case 'U': {
                    int digits = e == 'u' ? 4 : 8;
                    std::uint32_t cp = 0;
                    for (int i = 0; i < digits; ++i) {
                        if (eof()) fail("bad unicode escape");
                        char h = get();
                        int n = (h >= '0' && h <= '9')   ? h - '0'
                                : (h >= 'a' && h <= 'f') ? h - 'a' + 10
                                : (h >= 'A' && h <= 'F') ? h - 'A' + 10
                                                         : -1;
                        if (n < 0) fail("bad unicode escape");
                        cp = (cp << 4) | static_cast<std::uint32_t>(n);
                    }
                    encode_utf8(out, cp);
                    break;
                }
                default: fail(std::string("unknown escape '\\") + e + "'");
            }
        }
        return out;
    }

    static void encode_utf8(std::string& out, std::uint32_t cp) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }

    std::string parse_literal_string() {
        get();
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            char c = get();
            if (c == '\'') break;
            out.push_back(c);
        }
        return out;
    }

    Value parse_value() {
        char c = peek();
        if (c == '"') return Value{parse_basic_string(), line_};
        if (c == '\'') return Value{parse_literal_string(), line_};
        if (c == '[') return parse_array();
        if (c == '{') return parse_inline_table();
        if (src_.substr(pos_, 4) == "true" && !bare_key_char(peek(4))) {
            pos_ += 4;
            return Value{true, line_};
        }
        if (src_.substr(pos_, 5) == "false" && !bare_key_char(peek(5))) {
            pos_ += 5;
            return Value{false, line_};
        }
        return parse_number();
    }

    Value parse_array() {
        get();  // '['
        Array items;
        while (true) {
            skip_ws_comments_newlines();
            if (eof()) fail("unterminated array");
            if (peek() == ']') {
                get();
                break;
            }
            items.push_back(parse_value());
            skip_ws_comments_newlines();
            if (peek() == ',') {
                get();
                continue;
            }
            if (peek() == ']') {
                get();
                break;
            }
            fail("expected ',' or ']' in array");
        }
        return Value{std::move(items), line_};
    }

    Value parse_inline_table() {
        get();  // '{'
        Table t;
        skip_ws();
        if (peek() == '}') {
            get();
            return Value{std::move(t), line_};
        }
        while (true) {
            parse_key_value(t);
            skip_ws();
            if (peek() == ',') {
                get();
                continue;
            }
            if (peek() == '}') {
                get();
                break;
            }
            fail("expected ',' or '}' in inline table");
        }
        return Value{std::move(t), line_};
    }

    Value parse_number() {
        std::size_t start = pos_;
        while (!eof()) {
            char c = peek();
            if ((c >= '0' && c <= '9') || c == '+' || c == '-' || c == '.' || c == 'e' ||
                c == 'E' || c == '_' || c == 'x' || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F') ||
                c == 'i' || c == 'n') {
                ++pos_;
            } else {
                break;
            }
        }
        std::string tok;
        for (char c : src_.substr(start, pos_ - start))
            if (c != '_') tok.push_back(c);
        if (tok.empty()) fail("expected a value");
        std::string body = tok;
        if (body[0] == '+' || body[0] == '-') body = body.substr(1);
        bool negative = tok[0] == '-';
        if (body == "inf") return Value{negative ? -INFINITY : INFINITY, line_};
        if (body == "nan") return Value{NAN, line_};
        try {
            if (body.rfind("0x", 0) == 0) {
                std::size_t used = 0;
                auto v = static_cast<std::int64_t>(std::stoull(body.substr(2), &used, 16));
                if (used != body.size() - 2) fail("bad hex integer '" + tok + "'");
                return Value{negative ? -v : v, line_};
            }
            bool is_float = body.find_first_of(".eE") != std::string::npos;
            std::size_t used = 0;
            if (is_float) {
                double d = std::stod(tok, &used);
                if (used != tok.size()) fail("bad float '" + tok + "'");
                return Value{d, line_};
            }
            std::int64_t i = std::stoll(tok, &used, 10);
            if (used != tok.size()) fail("bad integer '" + tok + "'");
            return Value{i, line_};
        } catch (const std::logic_error&) {
            fail("bad number '" + tok + "'");
        }
    }
};

[[noreturn]] void type_error(const char* want, int line) {
    throw Error(Errc::TomlSyntax, "line " + std::to_string(line) + ": expected " + want);
}

}  // namespace

const std::string& Value::as_string() const {
    if (!is_string()) type_error("string", line);
    return std::get<std::string>(data);
}
std::int64_t Value::as_integer() const {
    if (!is_integer()) type_error("integer", line);
    return std::get<std::int64_t>(data);
}
double Value::as_number() const {
    if (is_integer()) return static_cast<double>(std::get<std::int64_t>(data));
    if (!is_float()) type_error("number", line);
    return std::get<double>(data);
}
bool Value::as_bool() const {
    if (!is_bool()) type_error("boolean", line);
    return std::get<bool>(data);
}
const Array& Value::as_array() const {
    if (!is_array()) type_error("array", line);
    return std::get<Array>(data);
}
const Table& Value::as_table() const {
    if (!is_table()) type_error("table", line);
    return std::get<Table>(data);
}

Table parse(std::string_view text) { return Parser(text).run(); }

Table parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const Value* find(const Table& table, std::string_view dotted_key) {
    const Table* t = &table;
    while (true) {
        auto dot = dotted_key.find('.');
        auto head = dotted_key.substr(0, dot);
        auto it = t->find(head);
        if (it == t->end()) return nullptr;
        if (dot == std::string_view::npos) return &it->second;
        if (!it->second.is_table()) return nullptr;
        t = &std::get<Table>(it->second.data);
        dotted_key.remove_prefix(dot + 1);
    }
}

const Table* find_table(const Table& table, std::string_view dotted_key) {
    const Value* v = find(table, dotted_key);
    return v && v->is_table() ? &std::get<Table>(v->data) : nullptr;
}

std::optional<std::string> get_string(const Table& t, std::string_view key) {
    const Value* v = find(t, key);
    if (!v) return std::nullopt;
    return v->as_string();
}
std::optional<double> get_number(const Table& t, std::string_view key) {
    const Value* v = find(t, key);
    if (!v) return std::nullopt;
    return v->as_number();
}
std::optional<std::int64_t> get_integer(const Table& t, std::string_view key) {
    const Value* v = find(t, key);
    if (!v) return std::nullopt;
    return v->as_integer();
}
std::optional<bool> get_bool(const Table& t, std::string_view key) {
    const Value* v = find(t, key);
    if (!v) return std::nullopt;
    return v->as_bool();
}

}  // namespace tip::toml
