#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "tflpi/liegeom.hpp"
#include "tflpi/sysmodel.hpp"

namespace fixtures {

inline std::string systems_dir() {
#ifdef TFLPI_SYSTEMS_DIR
    return TFLPI_SYSTEMS_DIR;
#else
    return "systems";
#endif
}

inline tflpi::SystemBundle motivating() {
    return tflpi::load_system_file(systems_dir() + "/motivating.sys");
}

inline tflpi::SystemBundle unicycle() {
    return tflpi::load_system_file(systems_dir() + "/unicycle.sys");
}

// Two-state system with g tangent to the target set: condition (a) fails.
inline tflpi::SystemBundle degenerate_tangent_input() {
    return tflpi::load_system(R"(
[vars] x1 x2
[f]
0
0
[g]
1
0
[h]
x1
[gamma] x2
[nstar] 1
[x0] 0 0
)");
}

// Three-state fixture where W contributes a direction transverse to
// T Gamma* + G_0, so the condition-(b) dimensions differ.
inline tflpi::SystemBundle w_breaks_condition_b() {
    return tflpi::load_system(R"(
[vars] x1 x2 x3
[f]
0
x1
1
[g]
1
0
0
[h]
x3
[gamma]
x1
x2
[nstar] 1
[x0] 0 0 0
)");
}

// n = 4 planar vehicle with speed state; G_1 = Sp{g, ad_f g} is not involutive
// where x4 != 0, which holds on the whole target set (x4 = 1 there).
inline tflpi::SystemBundle noninvolutive_gsmall() {
    return tflpi::load_system(R"(
[vars] x1 x2 x3 x4
[f]
x4 * cos(x3)
x4 * sin(x3)
0
0
[g]
0
0
1
0
[h]
x1
x2
x3
x4
[gamma]
x1^2 + x2^2 - 1
x1 * cos(x3) + x2 * sin(x3)
x4 - 1
[nstar] 1
[x0] 1 0 1.5707963267948966 1
)");
}

// A solvable fixture with n - nstar = 1, exercising the G_{-1} convention.
inline tflpi::SystemBundle codim_one() {
    return tflpi::load_system(R"(
[vars] x1 x2
[f]
0
0
[g]
0
1
[h]
x2
[gamma] x2
[nstar] 1
[x0] 0 0
)");
}

// Deterministic point in [-lo, hi]^n.
inline Eigen::VectorXd random_point(std::mt19937& rng, int n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = dist(rng);
    return x;
}

// Small random smooth expression over `nvars` variables: a linear combination
// of low-order monomials and trig/exp atoms with bounded coefficients.
inline tflpi::Expr random_expr(std::mt19937& rng, int nvars) {
    using tflpi::Expr;
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    std::uniform_int_distribution<int> pick_var(0, nvars - 1);
    std::uniform_int_distribution<int> pick_kind(0, 5);

    auto atom = [&]() -> Expr {
        const Expr v = Expr::var(static_cast<std::size_t>(pick_var(rng)));
        switch (pick_kind(rng)) {
            case 0: return v;
            case 1: return Expr::sin(v);
            case 2: return Expr::cos(v);
            case 3: return Expr::exp(Expr::constant(coef(rng)) * v);
            case 4: return Expr::pow_int(v, 2);
            default: return v * Expr::var(static_cast<std::size_t>(pick_var(rng)));
        }
    };
    Expr e = Expr::constant(coef(rng));
    for (int i = 0; i < 3; ++i) e = e + Expr::constant(coef(rng)) * atom();
    return e.simplified();
}

inline tflpi::VectorField random_field(std::mt19937& rng, const tflpi::VarTable& vars) {
    tflpi::VectorField f{vars, {}};
    for (std::size_t i = 0; i < vars.size(); ++i) f.comps.push_back(random_expr(rng, static_cast<int>(vars.size())));
    return f;
}

// Finite-difference Jacobian of a vector field (independent bracket oracle).
inline Eigen::MatrixXd fd_jacobian(const tflpi::VectorField& f, const Eigen::VectorXd& x,
                                   double h = 1e-5) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd J(f.dim(), n);
    for (int j = 0; j < n; ++j) {
        Eigen::VectorXd xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        J.col(j) = (f.eval(xp) - f.eval(xm)) / (2.0 * h);
    }
    return J;
}

inline Eigen::VectorXd fd_bracket(const tflpi::VectorField& a, const tflpi::VectorField& b,
                                  const Eigen::VectorXd& x, double h = 1e-5) {
    return fd_jacobian(b, x, h) * a.eval(x) - fd_jacobian(a, x, h) * b.eval(x);
}

}  // namespace fixtures
