#include "tflpi/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <set>
#include <sstream>

namespace tflpi {

VarTable::VarTable(std::vector<std::string> names) : names_(std::move(names)) {
    std::set<std::string> seen;
    for (const auto& n : names_) {
        if (n.empty()) throw Error("variable names must be nonempty");
        if (!seen.insert(n).second) throw Error("duplicate variable name '" + n + "'");
    }
}

std::optional<std::size_t> VarTable::index(std::string_view ident) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == ident) return i;
    return std::nullopt;
}

struct Expr::Node {
    Kind kind;
    double value = 0.0;      // Constant
    std::size_t var = 0;     // Var
    int exponent = 0;        // PowInt
    std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;
using K = Expr::Kind;

NodePtr make_node(K kind, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = kind;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

NodePtr make_const(double v) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = K::Constant;
    n->value = v;
    return n;
}

}  // namespace

Expr Expr::constant(double value) { return Expr(make_const(value)); }

Expr Expr::var(std::size_t index) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Var;
    n->var = index;
    return Expr(std::move(n));
}

Expr Expr::sin(const Expr& e) { return Expr(make_node(K::Sin, e.node_)); }
Expr Expr::cos(const Expr& e) { return Expr(make_node(K::Cos, e.node_)); }
Expr Expr::exp(const Expr& e) { return Expr(make_node(K::Exp, e.node_)); }

Expr Expr::pow_int(const Expr& base, int exponent) {
    if (exponent == 0) return constant(1.0);
    if (exponent == 1) return base;
    auto n = std::make_shared<Node>();
    n->kind = Kind::PowInt;
    n->exponent = exponent;
    n->a = base.node_;
    return Expr(std::move(n));
}

Expr operator+(const Expr& a, const Expr& b) { return Expr(make_node(K::Add, a.node_, b.node_)); }
Expr operator-(const Expr& a, const Expr& b) { return Expr(make_node(K::Sub, a.node_, b.node_)); }
Expr operator*(const Expr& a, const Expr& b) { return Expr(make_node(K::Mul, a.node_, b.node_)); }
Expr operator/(const Expr& a, const Expr& b) { return Expr(make_node(K::Div, a.node_, b.node_)); }
Expr operator-(const Expr& a) { return Expr(make_node(K::Neg, a.node_)); }

Expr::Kind Expr::kind() const { return node_->kind; }

std::optional<double> Expr::constant_value() const {
    if (node_->kind == Kind::Constant) return node_->value;
    return std::nullopt;
}

namespace {

double eval_node(const Expr::Node& n, std::span<const double> x) {
    switch (n.kind) {
        case K::Constant: return n.value;
        case K::Var:
            if (n.var >= x.size())
                throw DimensionMismatchError("evaluation point is shorter than a variable index");
            return x[n.var];
        case K::Neg: return -eval_node(*n.a, x);
        case K::Sin: return std::sin(eval_node(*n.a, x));
        case K::Cos: return std::cos(eval_node(*n.a, x));
        case K::Exp: return std::exp(eval_node(*n.a, x));
        case K::Add: return eval_node(*n.a, x) + eval_node(*n.b, x);
        case K::Sub: return eval_node(*n.a, x) - eval_node(*n.b, x);
        case K::Mul: return eval_node(*n.a, x) * eval_node(*n.b, x);
        case K::Div: {
            const double denom = eval_node(*n.b, x);
            if (denom == 0.0) throw DivByZeroError();
            return eval_node(*n.a, x) / denom;
        }
        case K::PowInt: {
            const double base = eval_node(*n.a, x);
            if (n.exponent < 0 && base == 0.0) throw DivByZeroError();
            return std::pow(base, n.exponent);
        }
    }
    throw Error("corrupt expression node");
}

std::size_t min_vars_node(const Expr::Node& n) {
    switch (n.kind) {
        case K::Constant: return 0;
        case K::Var: return n.var + 1;
        default: {
            std::size_t m = n.a ? min_vars_node(*n.a) : 0;
            if (n.b) m = std::max(m, min_vars_node(*n.b));
            return m;
        }
    }
}

bool is_const(const NodePtr& n, double v) {
    return n->kind == K::Constant && n->value == v;
}

NodePtr simplify_node(const NodePtr& node);

NodePtr simplify_binary(const Expr::Node& n) {
    NodePtr a = simplify_node(n.a);
    NodePtr b = simplify_node(n.b);
    const bool ca = a->kind == K::Constant;
    const bool cb = b->kind == K::Constant;

    switch (n.kind) {
        case K::Add:
            if (ca && cb) return make_const(a->value + b->value);
            if (is_const(a, 0.0)) return b;
            if (is_const(b, 0.0)) return a;
            break;
        case K::Sub:
            if (ca && cb) return make_const(a->value - b->value);
            if (is_const(b, 0.0)) return a;
            if (is_const(a, 0.0)) {
                if (b->kind == K::Neg) return b->a;
                return make_node(K::Neg, b);
            }
            break;
        case K::Mul:
            if (ca && cb) return make_const(a->value * b->value);
            if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
            if (is_const(a, 1.0)) return b;
            if (is_const(b, 1.0)) return a;
            break;
        case K::Div:
            if (ca && cb && b->value != 0.0) return make_const(a->value / b->value);
            if (is_const(a, 0.0)) return make_const(0.0);
            if (is_const(b, 1.0)) return a;
            break;
        default: break;
    }
    return make_node(n.kind, a, b);
}

NodePtr simplify_node(const NodePtr& node) {
    const Expr::Node& n = *node;
    switch (n.kind) {
        case K::Constant:
        case K::Var: return node;
        case K::Neg: {
            NodePtr a = simplify_node(n.a);
            if (a->kind == K::Constant) return make_const(-a->value);
            if (a->kind == K::Neg) return a->a;  // -(-e) -> e
            return make_node(K::Neg, a);
        }
        case K::Sin: {
            NodePtr a = simplify_node(n.a);
            if (a->kind == K::Constant) return make_const(std::sin(a->value));
            return make_node(K::Sin, a);
        }
        case K::Cos: {
            NodePtr a = simplify_node(n.a);
            if (a->kind == K::Constant) return make_const(std::cos(a->value));
            return make_node(K::Cos, a);
        }
        case K::Exp: {
            NodePtr a = simplify_node(n.a);
            if (a->kind == K::Constant) return make_const(std::exp(a->value));
            return make_node(K::Exp, a);
        }
        case K::PowInt: {
            NodePtr a = simplify_node(n.a);
            if (n.exponent == 1) return a;
            if (a->kind == K::Constant && !(n.exponent < 0 && a->value == 0.0))
                return make_const(std::pow(a->value, n.exponent));
            auto r = std::make_shared<Expr::Node>();
            r->kind = K::PowInt;
            r->exponent = n.exponent;
            r->a = a;
            return r;
        }
        default: return simplify_binary(n);
    }
}

}  // namespace

double Expr::eval(std::span<const double> x) const { return eval_node(*node_, x); }

std::size_t Expr::min_var_count() const { return min_vars_node(*node_); }

Expr Expr::simplified() const { return Expr(simplify_node(node_)); }

Expr Expr::diff(std::size_t i) const {
    const Node& n = *node_;
    Expr d = constant(0.0);
    switch (n.kind) {
        case Kind::Constant: break;
        case Kind::Var: d = constant(n.var == i ? 1.0 : 0.0); break;
        case Kind::Neg: d = -Expr(n.a).diff(i); break;
        case Kind::Sin: d = cos(Expr(n.a)) * Expr(n.a).diff(i); break;
        case Kind::Cos: d = -(sin(Expr(n.a)) * Expr(n.a).diff(i)); break;
        case Kind::Exp: d = exp(Expr(n.a)) * Expr(n.a).diff(i); break;
        case Kind::Add: d = Expr(n.a).diff(i) + Expr(n.b).diff(i); break;
        case Kind::Sub: d = Expr(n.a).diff(i) - Expr(n.b).diff(i); break;
        case Kind::Mul: d = Expr(n.a).diff(i) * Expr(n.b) + Expr(n.a) * Expr(n.b).diff(i); break;
        case Kind::Div:
            d = (Expr(n.a).diff(i) * Expr(n.b) - Expr(n.a) * Expr(n.b).diff(i)) /
                pow_int(Expr(n.b), 2);
            break;
        case Kind::PowInt:
            d = constant(static_cast<double>(n.exponent)) * pow_int(Expr(n.a), n.exponent - 1) *
                Expr(n.a).diff(i);
            break;
    }
    return d.simplified();
}

namespace {

void print_node(const Expr::Node& n, const VarTable& vars, std::ostream& os) {
    switch (n.kind) {
        case K::Constant: {
            std::ostringstream tmp;
            tmp.precision(17);
            tmp << n.value;
            if (n.value < 0.0) {
                os << "(" << tmp.str() << ")";
            } else {
                os << tmp.str();
            }
            break;
        }
        case K::Var: os << vars.name(n.var); break;
        case K::Neg:
            os << "(-";
            print_node(*n.a, vars, os);
            os << ")";
            break;
        case K::Sin:
        case K::Cos:
        case K::Exp:
            os << (n.kind == K::Sin ? "sin(" : n.kind == K::Cos ? "cos(" : "exp(");
            print_node(*n.a, vars, os);
            os << ")";
            break;
        case K::PowInt:
            os << "(";
            print_node(*n.a, vars, os);
            os << " ^ " << n.exponent << ")";
            break;
        default: {
            const char* op = n.kind == K::Add   ? " + "
                             : n.kind == K::Sub ? " - "
                             : n.kind == K::Mul ? " * "
                                                : " / ";
            os << "(";
            print_node(*n.a, vars, os);
            os << op;
            print_node(*n.b, vars, os);
            os << ")";
            break;
        }
    }
}

Expr rebuild_subst(const Expr::Node& n, const std::vector<Expr>& repl) {
    switch (n.kind) {
        case K::Constant: return Expr::constant(n.value);
        case K::Var:
            if (n.var >= repl.size())
                throw DimensionMismatchError("substitution table shorter than variable index");
            return repl[n.var];
        case K::Neg: return -rebuild_subst(*n.a, repl);
        case K::Sin: return Expr::sin(rebuild_subst(*n.a, repl));
        case K::Cos: return Expr::cos(rebuild_subst(*n.a, repl));
        case K::Exp: return Expr::exp(rebuild_subst(*n.a, repl));
        case K::Add: return rebuild_subst(*n.a, repl) + rebuild_subst(*n.b, repl);
        case K::Sub: return rebuild_subst(*n.a, repl) - rebuild_subst(*n.b, repl);
        case K::Mul: return rebuild_subst(*n.a, repl) * rebuild_subst(*n.b, repl);
        case K::Div: return rebuild_subst(*n.a, repl) / rebuild_subst(*n.b, repl);
        case K::PowInt: return Expr::pow_int(rebuild_subst(*n.a, repl), n.exponent);
    }
    throw Error("corrupt expression node");
}

// Recursive-descent parser; positions are byte offsets into the input.
class Parser {
   public:
    Parser(std::string_view text, const VarTable& vars) : text_(text), vars_(vars) {}

    Expr parse() {
        Expr e = parse_sum();
        skip_ws();
        if (pos_ != text_.size()) throw SyntaxError(pos_, "unexpected trailing input");
        return e;
    }

   private:
    std::string_view text_;
    const VarTable& vars_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    Expr parse_sum() {
        Expr e = parse_product();
        for (;;) {
            if (eat('+')) {
                e = e + parse_product();
            } else if (eat('-')) {
                e = e - parse_product();
            } else {
                return e;
            }
        }
    }

    Expr parse_product() {
        Expr e = parse_unary();
        for (;;) {
            if (eat('*')) {
                e = e * parse_unary();
            } else if (eat('/')) {
                e = e / parse_unary();
            } else {
                return e;
            }
        }
    }

    Expr parse_unary() {
        if (eat('-')) return -parse_unary();
        return parse_power();
    }

    Expr parse_power() {
        Expr base = parse_primary();
        if (eat('^')) {
            skip_ws();
            const std::size_t start = pos_;
            if (pos_ < text_.size() &&
                (std::isalpha(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
                while (pos_ < text_.size() &&
                       (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                    ++pos_;
                const std::string ident(text_.substr(start, pos_ - start));
                if (!vars_.index(ident)) throw UnknownVariableError(ident);
                throw SyntaxError(start, "exponent must be an integer literal");
            }
            if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) ++pos_;
            const std::size_t digits = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            if (pos_ == digits) throw SyntaxError(start, "exponent must be an integer literal");
            const int k = std::atoi(std::string(text_.substr(start, pos_ - start)).c_str());
            return Expr::pow_int(base, k);
        }
        return base;
    }

    Expr parse_primary() {
        skip_ws();
        if (pos_ >= text_.size()) throw SyntaxError(pos_, "unexpected end of input");
        const char c = text_[pos_];

        if (c == '(') {
            ++pos_;
            Expr e = parse_sum();
            if (!eat(')')) throw SyntaxError(pos_, "expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        throw SyntaxError(pos_, std::string("unexpected character '") + c + "'");
    }

    Expr parse_number() {
        const char* begin = text_.data() + pos_;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) throw SyntaxError(pos_, "malformed number");
        pos_ += static_cast<std::size_t>(end - begin);
        return Expr::constant(v);
    }

    Expr parse_ident() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        const std::string ident(text_.substr(start, pos_ - start));

        if ((ident == "sin" || ident == "cos" || ident == "exp") && peek() == '(') {
            eat('(');
            Expr arg = parse_sum();
            if (!eat(')')) throw SyntaxError(pos_, "expected ')' after function argument");
            if (ident == "sin") return Expr::sin(arg);
            if (ident == "cos") return Expr::cos(arg);
            return Expr::exp(arg);
        }
        if (auto idx = vars_.index(ident)) return Expr::var(*idx);
        throw UnknownVariableError(ident);
    }
};

}  // namespace

std::string Expr::str(const VarTable& vars) const {
    std::ostringstream os;
    print_node(*node_, vars, os);
    return os.str();
}

Expr parse_expr(std::string_view text, const VarTable& vars) {
    return Parser(text, vars).parse();
}

Expr substitute(const Expr& e, const std::vector<Expr>& replacement) {
    return rebuild_subst(*e.node(), replacement).simplified();
}

}  // namespace tflpi
