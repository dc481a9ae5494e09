#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "tflpi/expr.hpp"
#include "tflpi/liegeom.hpp"

namespace tflpi {

// Single-input control-affine system xdot = f(x) + g(x) u with output y = h(x).
struct ControlSystem {
    VarTable vars;
    std::vector<Expr> f;
    std::vector<Expr> g;
    std::vector<Expr> h;

    int n() const { return static_cast<int>(vars.size()); }
    int p() const { return static_cast<int>(h.size()); }

    VectorField drift() const { return VectorField{vars, f}; }
    VectorField input_field() const { return VectorField{vars, g}; }

    // Jacobian of the output map at x (p x n).
    Eigen::MatrixXd output_jacobian(const Eigen::VectorXd& x) const;
};

// Target submanifold given as the zero set of the constraint map gamma,
// with declared dimension nstar and a base point on the set.
struct TargetSet {
    std::vector<Expr> gamma;  // n - nstar rows
    int nstar = 0;
    Eigen::VectorXd x0;

    int codim() const { return static_cast<int>(gamma.size()); }
    Eigen::VectorXd gamma_eval(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd gamma_jacobian(const Eigen::VectorXd& x) const;
};

// Observer/controller settings carried by the system-definition file.
struct SimSettings {
    std::optional<double> eps;
    std::optional<double> sat;
    std::vector<double> alpha;
    std::vector<double> k;
    std::optional<Expr> phi0;  // over xi1..xir
};

struct SystemBundle {
    ControlSystem sys;
    TargetSet target;
    std::optional<Expr> lambda;  // composed over the state variables
    SimSettings sim;
};

// Parse the line-oriented system-definition format. Sections: [vars], [f],
// [g], [h], [gamma], [nstar], [x0], optional [lambda], [observer], [controller].
// '#' starts a comment.
SystemBundle load_system(const std::string& file_text);
SystemBundle load_system_file(const std::string& path);

// Candidate output function given over the state variables or over y1..yp;
// the latter is composed with h symbolically.
Expr parse_output_function(const std::string& text, const ControlSystem& sys);

struct ValidationCheck {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    std::vector<int> dh_ranks;       // at x0 then at ball samples
    double gamma_residual_x0 = 0.0;
    double dgamma_sigma_ratio_min = 0.0;  // min over set samples of sigma_min/sigma_max
    bool pass = false;

    nlohmann::json to_json() const;
};

struct SampleConfig {
    int count = 64;
    double radius = 0.05;
    double tol_rank = kRankTolRel;
    double tol_zero = kZeroTol;
};

// Regularity checks: rank(Dh) = p at x0 and on a 32-point ball of radius 0.1,
// gamma(x0) = 0, and sigma_min/sigma_max of Dgamma on sampled set points.
ValidationReport validate(const ControlSystem& sys, const TargetSet& tset,
                          const SampleConfig& cfg = {});

// Orthonormal basis of ker(Dgamma_x); throws NotOnSet / RankDrop.
Frame tangent_space(const TargetSet& tset, const Eigen::VectorXd& x,
                    double tol_rel = kRankTolRel);

// sup over samples of max_i |<Dgamma_i(x), v(x)>|; the tangency criterion for invariance.
double invariance_check(const VectorField& v, const TargetSet& tset,
                        const std::vector<Eigen::VectorXd>& samples);

// Gauss-Newton projection onto gamma^{-1}(0); componentwise |gamma| <= 1e-10.
Eigen::VectorXd project_to_set(const TargetSet& tset, const Eigen::VectorXd& x_guess);

// Deterministic Halton points in the coordinate ball around `center`.
std::vector<Eigen::VectorXd> halton_ball(const Eigen::VectorXd& center, double radius, int count);

// Halton offsets in the tangent directions at x0, pushed back onto the set
// by project_to_set. Deterministic, so reports are reproducible.
std::vector<Eigen::VectorXd> sample_on_set(const TargetSet& tset, double radius, int count);

}  // namespace tflpi
