#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tflpi/errors.hpp"

namespace tflpi {

// Ordered table of state-variable names. The order fixes the coordinate
// convention for every module built on top of it.
class VarTable {
   public:
    VarTable() = default;
    explicit VarTable(std::vector<std::string> names);

    std::size_t size() const { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    const std::vector<std::string>& names() const { return names_; }
    std::optional<std::size_t> index(std::string_view ident) const;

    bool operator==(const VarTable& other) const { return names_ == other.names_; }

   private:
    std::vector<std::string> names_;
};

// Immutable scalar expression AST over indexed variables. Values are cheap
// to copy (shared pointer to the root node) and safe to share across threads.
class Expr {
   public:
    enum class Kind { Constant, Var, Neg, Sin, Cos, Exp, Add, Sub, Mul, Div, PowInt };

    Expr() : Expr(constant(0.0)) {}

    static Expr constant(double value);
    static Expr var(std::size_t index);
    static Expr sin(const Expr& e);
    static Expr cos(const Expr& e);
    static Expr exp(const Expr& e);
    // x^0 folds to the constant 1; the stored exponent is never zero.
    static Expr pow_int(const Expr& base, int exponent);

    friend Expr operator+(const Expr& a, const Expr& b);
    friend Expr operator-(const Expr& a, const Expr& b);
    friend Expr operator*(const Expr& a, const Expr& b);
    friend Expr operator/(const Expr& a, const Expr& b);
    friend Expr operator-(const Expr& a);

    double eval(std::span<const double> x) const;

    // Exact symbolic partial derivative with respect to variable i,
    // post-processed by simplify().
    Expr diff(std::size_t i) const;

    // Constant folding plus the unit/zero identities. Evaluation-preserving
    // wherever both sides are defined.
    Expr simplified() const;

    // Fully parenthesized infix form; reparses to an evaluation-equivalent Expr.
    std::string str(const VarTable& vars) const;

    Kind kind() const;
    // Value if this node is a literal constant.
    std::optional<double> constant_value() const;
    // 1 + largest variable index referenced, 0 for constant expressions.
    std::size_t min_var_count() const;

    // Opaque AST node; defined in expr.cpp.
    struct Node;
    const std::shared_ptr<const Node>& node() const { return node_; }

   private:
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
};

// Parse an infix expression over the declared variables. Grammar: + - * /,
// ^ with an integer-literal exponent, unary minus, parentheses, sin/cos/exp,
// decimal and scientific literals. Precedence ^ > unary- > */ > +-.
Expr parse_expr(std::string_view text, const VarTable& vars);

// Substitute replacement[i] for variable i. Used to compose a function of the
// output, lambda_tilde(y), with the output map h(x).
Expr substitute(const Expr& e, const std::vector<Expr>& replacement);

}  // namespace tflpi
