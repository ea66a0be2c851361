#pragma once

// Arithmetic formulas over one variable `x`:
//   expr   := term (('+' | '-') term)*
//   term   := factor (('*' | '/') factor)*
//   factor := NUMBER | 'x' | '-' factor | '(' expr ')'

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tip::formula {

inline constexpr int kMaxDepth = 64;

enum class Kind : std::uint8_t { Constant, Variable, Add, Sub, Mul, Div, Neg };

struct Node {
    Kind kind = Kind::Constant;
    double value = 0.0;  // Constant only
    int lhs = -1;        // binary ops and Neg
    int rhs = -1;        // binary ops
};

/// Flat tree; children always precede their parent, root is the last node.
struct Ast {
    std::vector<Node> nodes;

    int root() const { return static_cast<int>(nodes.size()) - 1; }
    const Node& at(int i) const { return nodes.at(static_cast<std::size_t>(i)); }
    int depth() const;
    /// Fully parenthesised rendering, e.g. "((x * 1.8) + 32)".
    std::string to_string() const;

    int constant(double v);
    int variable();
    int unary(int child);
    int binary(Kind k, int lhs, int rhs);
};

/// Errors carry "column N" (1-based) in the message: LexError,
/// UnexpectedToken, UnknownIdentifier, TrailingInput, DepthExceeded.
Ast parse_formula(std::string_view src);

/// 1-based column of the failure when the message carries one, else 0.
int error_column(const std::string& message);

}  // namespace tip::formula
