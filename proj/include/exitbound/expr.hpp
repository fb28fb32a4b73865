#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "exitbound/errors.hpp"

namespace exitbound {

/// Scalar arithmetic expression in the variables y1..yn.
///
/// Grammar, loosest binding first:
///
///     sum     := product (('+' | '-') product)*
///     product := unary (('*' | '/') unary)*
///     unary   := '-' unary | power
///     power   := primary ('^' unary)?          right-associative
///     primary := number | 'y'<k> | func '(' sum ')' | '(' sum ')'
///     func    := sin | cos | exp | tanh | sqrt | abs
///
/// Parsed trees are immutable and evaluation is pure, so one Expr may be
/// shared across threads.
class Expr {
public:
    enum class Op : std::uint8_t { Literal, Var, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Tanh, Sqrt, Abs };

    struct Node {
        Op op;
        double value = 0.0;     // Literal
        std::uint32_t var = 0;  // Var, zero-based
        std::int32_t lhs = -1;  // unary operand or binary left
        std::int32_t rhs = -1;

        bool operator==(const Node&) const = default;
    };

    static Expr parse(std::string_view text, std::size_t dim);

    /// Expression equal to a constant, without going through the parser.
    static Expr constant(double value, std::size_t dim) {
        Expr e;
        e.dim_ = dim;
        e.nodes_.push_back(Node{Op::Literal, value});
        e.root_ = 0;
        e.constant_ = value;
        return e;
    }

    [[nodiscard]] double eval(std::span<const double> point) const {
        if (constant_) return *constant_;
        if (point.size() != dim_) {
            throw InputError("expression expects a point of dimension " + std::to_string(dim_));
        }
        return eval_node(root_, point);
    }

    [[nodiscard]] bool is_constant() const noexcept { return constant_.has_value(); }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::span<const Node> nodes() const noexcept { return nodes_; }

    /// Fully parenthesized rendering that parses back to the same tree.
    [[nodiscard]] std::string to_string() const { return render(root_); }

    /// Structural equality of the trees.
    [[nodiscard]] bool same_tree(const Expr& other) const { return equal_at(root_, other, other.root_); }

private:
    [[nodiscard]] double eval_node(std::int32_t i, std::span<const double> y) const {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        switch (n.op) {
            case Op::Literal: return n.value;
            case Op::Var: return y[n.var];
            case Op::Neg: return -eval_node(n.lhs, y);
            case Op::Add: return eval_node(n.lhs, y) + eval_node(n.rhs, y);
            case Op::Sub: return eval_node(n.lhs, y) - eval_node(n.rhs, y);
            case Op::Mul: return eval_node(n.lhs, y) * eval_node(n.rhs, y);
            case Op::Div: {
                const double num = eval_node(n.lhs, y);
                const double den = eval_node(n.rhs, y);
                if (den == 0.0) throw DomainError("division by zero in " + render(i));
                return num / den;
            }
            case Op::Pow: {
                const double base = eval_node(n.lhs, y);
                const double expo = eval_node(n.rhs, y);
                const double r = std::pow(base, expo);
                if (std::isnan(r) && !std::isnan(base) && !std::isnan(expo)) {
                    throw DomainError("undefined power in " + render(i));
                }
                return r;
            }
            case Op::Sin: return std::sin(eval_node(n.lhs, y));
            case Op::Cos: return std::cos(eval_node(n.lhs, y));
            case Op::Exp: return std::exp(eval_node(n.lhs, y));
            case Op::Tanh: return std::tanh(eval_node(n.lhs, y));
            case Op::Sqrt: {
                const double a = eval_node(n.lhs, y);
                if (a < 0.0) throw DomainError("square root of negative value in " + render(i));
                return std::sqrt(a);
            }
            case Op::Abs: return std::abs(eval_node(n.lhs, y));
        }
        return 0.0;
    }

    static const char* function_name(Op op) {
        switch (op) {
            case Op::Sin: return "sin";
            case Op::Cos: return "cos";
            case Op::Exp: return "exp";
            case Op::Tanh: return "tanh";
            case Op::Sqrt: return "sqrt";
            case Op::Abs: return "abs";
            default: return nullptr;
        }
    }

    [[nodiscard]] std::string render(std::int32_t i) const {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        switch (n.op) {
            case Op::Literal: {
                std::array<char, 32> buf{};
                auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), n.value);
                return std::string(buf.data(), end);
            }
            case Op::Var: return "y" + std::to_string(n.var + 1);
            case Op::Neg: return "(-" + render(n.lhs) + ")";
            case Op::Add: return "(" + render(n.lhs) + " + " + render(n.rhs) + ")";
            case Op::Sub: return "(" + render(n.lhs) + " - " + render(n.rhs) + ")";
            case Op::Mul: return "(" + render(n.lhs) + " * " + render(n.rhs) + ")";
            case Op::Div: return "(" + render(n.lhs) + " / " + render(n.rhs) + ")";
            case Op::Pow: return "(" + render(n.lhs) + " ^ " + render(n.rhs) + ")";
            default: return std::string(function_name(n.op)) + "(" + render(n.lhs) + ")";
        }
    }

    [[nodiscard]] bool equal_at(std::int32_t i, const Expr& other, std::int32_t j) const {
        if ((i < 0) != (j < 0)) return false;
        if (i < 0) return true;
        const Node& a = nodes_[static_cast<std::size_t>(i)];
        const Node& b = other.nodes_[static_cast<std::size_t>(j)];
        if (a.op != b.op || a.var != b.var) return false;
        if (a.op == Op::Literal && a.value != b.value) return false;
        return equal_at(a.lhs, other, b.lhs) && equal_at(a.rhs, other, b.rhs);
    }

    friend class ExprParser;

    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
    std::size_t dim_ = 0;
    std::optional<double> constant_;
};

class ExprParser {
public:
    ExprParser(std::string_view text, std::size_t dim) : text_(text), dim_(dim) {}

    Expr run() {
        expr_.dim_ = dim_;
        skip_ws();
        if (pos_ == text_.size()) throw SyntaxError("empty expression", pos_);
        expr_.root_ = sum();
        skip_ws();
        if (pos_ != text_.size()) {
            throw SyntaxError("unexpected '" + std::string(1, text_[pos_]) + "', expected operator or end of input",
                              pos_);
        }
        bool has_var = false;
        for (const auto& n : expr_.nodes_) has_var = has_var || n.op == Expr::Op::Var;
        if (!has_var) {
            try {
                const double v = expr_.eval_node(expr_.root_, {});
                expr_.constant_ = v;
            } catch (const DomainError&) {
                // left unfolded; evaluation reports the error
            }
        }
        return std::move(expr_);
    }

private:
    using Op = Expr::Op;

    std::int32_t add(Expr::Node n) {
        expr_.nodes_.push_back(n);
        return static_cast<std::int32_t>(expr_.nodes_.size() - 1);
    }

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                                       text_[pos_] == '\r')) {
            ++pos_;
        }
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::int32_t sum() {
        std::int32_t lhs = product();
        for (;;) {
            if (accept('+')) {
                lhs = add({Op::Add, 0.0, 0, lhs, product()});
            } else if (accept('-')) {
                lhs = add({Op::Sub, 0.0, 0, lhs, product()});
            } else {
                return lhs;
            }
        }
    }

    std::int32_t product() {
        std::int32_t lhs = unary();
        for (;;) {
            if (accept('*')) {
                lhs = add({Op::Mul, 0.0, 0, lhs, unary()});
            } else if (accept('/')) {
                lhs = add({Op::Div, 0.0, 0, lhs, unary()});
            } else {
                return lhs;
            }
        }
    }

    std::int32_t unary() {
        if (accept('-')) return add({Op::Neg, 0.0, 0, unary(), -1});
        return power();
    }

    std::int32_t power() {
        const std::int32_t base = primary();
        if (accept('^')) return add({Op::Pow, 0.0, 0, base, unary()});
        return base;
    }

    std::int32_t primary() {
        skip_ws();
        if (pos_ >= text_.size()) throw SyntaxError("unexpected end of input, expected operand", pos_);
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            const std::int32_t inner = sum();
            if (!accept(')')) throw SyntaxError("expected ')'", pos_);
            return inner;
        }
        if ((c >= '0' && c <= '9') || c == '.') return number();
        if (is_alpha(c)) return identifier();
        throw SyntaxError("unexpected '" + std::string(1, c) + "', expected number, variable, function or '('", pos_);
    }

    std::int32_t number() {
        const std::size_t start = pos_;
        double value = 0.0;
        auto [end, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value,
                                         std::chars_format::general);
        if (ec != std::errc{}) throw SyntaxError("malformed number", start);
        pos_ = static_cast<std::size_t>(end - text_.data());
        return add({Op::Literal, value, 0, -1, -1});
    }

    std::int32_t identifier() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && (is_alpha(text_[pos_]) || (text_[pos_] >= '0' && text_[pos_] <= '9'))) ++pos_;
        const std::string_view name = text_.substr(start, pos_ - start);

        static constexpr std::array<std::pair<std::string_view, Op>, 6> functions{{
            {"sin", Op::Sin}, {"cos", Op::Cos}, {"exp", Op::Exp},
            {"tanh", Op::Tanh}, {"sqrt", Op::Sqrt}, {"abs", Op::Abs},
        }};
        for (const auto& [fname, op] : functions) {
            if (name == fname) {
                if (!accept('(')) throw SyntaxError("expected '(' after function " + std::string(name), pos_);
                const std::int32_t arg = sum();
                if (!accept(')')) throw SyntaxError("expected ')'", pos_);
                return add({op, 0.0, 0, arg, -1});
            }
        }

        if (name.size() >= 2 && name[0] == 'y') {
            std::size_t index = 0;
            auto [end, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), index);
            if (ec == std::errc{} && end == name.data() + name.size() && name[1] != '0') {
                if (index > dim_) {
                    throw SyntaxError("variable " + std::string(name) + " out of range for dimension " +
                                          std::to_string(dim_),
                                      start);
                }
                return add({Op::Var, 0.0, static_cast<std::uint32_t>(index - 1), -1, -1});
            }
        }
        throw SyntaxError("unknown identifier '" + std::string(name) + "'", start);
    }

    static bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }

    std::string_view text_;
    std::size_t dim_;
    std::size_t pos_ = 0;
    Expr expr_;
};

inline Expr Expr::parse(std::string_view text, std::size_t dim) { return ExprParser(text, dim).run(); }

}  // namespace exitbound
