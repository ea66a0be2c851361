#include "tip/formula.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>

#include "tip/error.hpp"

namespace tip::formula {

int Ast::constant(double v) {
    nodes.push_back(Node{Kind::Constant, v, -1, -1});
    return root();
}

int Ast::variable() {
    nodes.push_back(Node{Kind::Variable, 0.0, -1, -1});
    return root();
}

int Ast::unary(int child) {
    nodes.push_back(Node{Kind::Neg, 0.0, child, -1});
    return root();
}

int Ast::binary(Kind k, int lhs, int rhs) {
    nodes.push_back(Node{k, 0.0, lhs, rhs});
    return root();
}

int Ast::depth() const {
    if (nodes.empty()) return 0;
    std::vector<int> d(nodes.size(), 1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        if (n.lhs >= 0) d[i] = std::max(d[i], d[static_cast<std::size_t>(n.lhs)] + 1);
        if (n.rhs >= 0) d[i] = std::max(d[i], d[static_cast<std::size_t>(n.rhs)] + 1);
    }
    return d.back();
}

namespace {

std::string render(const Ast& ast, int i) {
    const Node& n = ast.at(i);
    switch (n.kind) {
        case Kind::Constant: {
            char buf[64];
            auto r = std::to_chars(buf, buf + sizeof buf, n.value);
            return std::string(buf, r.ptr);
        }
        case Kind::Variable: return "x";
        case Kind::Neg: return "-" + render(ast, n.lhs);
        default: break;
    }
    const char* op = n.kind == Kind::Add ? " + " : n.kind == Kind::Sub ? " - " : n.kind == Kind::Mul ? " * " : " / ";
    return "(" + render(ast, n.lhs) + op + render(ast, n.rhs) + ")";
}

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, LParen, RParen, End };

struct Token {
    Tok kind;
    std::size_t pos;  // 0-based offset
    double number = 0.0;
    std::string text;
};

[[noreturn]] void fail(Errc code, std::size_t pos, const std::string& what) {
    throw Error(code, "column " + std::to_string(pos + 1) + ": " + what);
}

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) { advance(); }

    Ast run() {
        expr(0);
        if (tok_.kind != Tok::End) fail(Errc::TrailingInput, tok_.pos, "unexpected trailing input");
        if (ast_.depth() > kMaxDepth)
            throw Error(Errc::DepthExceeded, "formula nests deeper than " + std::to_string(kMaxDepth));
        return std::move(ast_);
    }

private:
    void advance() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        Token t{Tok::End, pos_, 0.0, {}};
        if (pos_ >= src_.size()) {
            tok_ = t;
            return;
        }
        char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t start = pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            if (pos_ < src_.size() && src_[pos_] == '.') {
                ++pos_;
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            }
            if (pos_ - start == 1 && c == '.') fail(Errc::LexError, start, "lone '.'");
            if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
                std::size_t save = pos_++;
                if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
                if (pos_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[pos_])))
                    fail(Errc::LexError, save, "malformed exponent");
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            }
            std::string lit(src_.substr(start, pos_ - start));
            t.kind = Tok::Number;
            t.number = std::strtod(lit.c_str(), nullptr);
            t.text = lit;
            tok_ = t;
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            t.kind = Tok::Ident;
            t.text = std::string(src_.substr(start, pos_ - start));
            tok_ = t;
            return;
        }
        ++pos_;
        switch (c) {
            case '+': t.kind = Tok::Plus; break;
            case '-': t.kind = Tok::Minus; break;
            case '*': t.kind = Tok::Star; break;
            case '/': t.kind = Tok::Slash; break;
            case '(': t.kind = Tok::LParen; break;
            case ')': t.kind = Tok::RParen; break;
            default: fail(Errc::LexError, t.pos, std::string("unexpected character '") + c + "'");
        }
        tok_ = t;
    }

    void guard(int level) {
        // Recursion is bounded independently of AST depth so that inputs like
        // "((((...))))" cannot exhaust the stack.
        if (level > 4 * kMaxDepth)
            throw Error(Errc::DepthExceeded, "formula nests deeper than " + std::to_string(kMaxDepth));
    }

    int expr(int level) {
        guard(level);
        int lhs = term(level + 1);
        while (tok_.kind == Tok::Plus || tok_.kind == Tok::Minus) {
            Kind k = tok_.kind == Tok::Plus ? Kind::Add : Kind::Sub;
            advance();
            int rhs = term(level + 1);
            lhs = ast_.binary(k, lhs, rhs);
        }
        return lhs;
    }

    int term(int level) {
        guard(level);
        int lhs = factor(level + 1);
        while (tok_.kind == Tok::Star || tok_.kind == Tok::Slash) {
            Kind k = tok_.kind == Tok::Star ? Kind::Mul : Kind::Div;
            advance();
            int rhs = factor(level + 1);
            lhs = ast_.binary(k, lhs, rhs);
        }
        return lhs;
    }

    int factor(int level) {
        guard(level);
        Token t = tok_;
        switch (t.kind) {
            case Tok::Number: advance(); return ast_.constant(t.number);
            case Tok::Ident:
                if (t.text != "x") fail(Errc::UnknownIdentifier, t.pos, "unknown identifier '" + t.text + "'");
                advance();
                return ast_.variable();
            case Tok::Minus: {
                advance();
                int child = factor(level + 1);
                return ast_.unary(child);
            }
            case Tok::LParen: {
                advance();
                int inner = expr(level + 1);
                if (tok_.kind != Tok::RParen) fail(Errc::UnexpectedToken, tok_.pos, "expected ')'");
                advance();
                return inner;
            }
            case Tok::End: fail(Errc::UnexpectedToken, t.pos, "unexpected end of formula");
            default: fail(Errc::UnexpectedToken, t.pos, "unexpected token");
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    Token tok_{Tok::End, 0, 0.0, {}};
    Ast ast_;
};

}  // namespace

std::string Ast::to_string() const { return nodes.empty() ? std::string() : render(*this, root()); }

Ast parse_formula(std::string_view src) { return Parser(src).run(); }

int error_column(const std::string& message) {
    constexpr std::string_view tag = "column ";
    auto at = message.find(tag);
    if (at == std::string::npos) return 0;
    return std::atoi(message.c_str() + at + tag.size());
}

}  // namespace tip::formula
