#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>
#include <vector>

#include "tflpi/expr.hpp"

namespace tflpi {

// Relative singular-value cutoff used for every numeric rank decision.
inline constexpr double kRankTolRel = 1e-8;
// Threshold below which a sampled scalar quantity counts as vanishing.
inline constexpr double kZeroTol = 1e-7;

// Ordered set of vectors attached to a base point: the pointwise realization
// of a distribution or tangent space.
struct Frame {
    Eigen::VectorXd base;      // anchoring point in R^n
    Eigen::MatrixXd vectors;   // n x m, one generator per column
    int rank = 0;              // numeric rank of `vectors`
    double tol_rel = kRankTolRel;

    int ambient_dim() const { return static_cast<int>(base.size()); }
    int count() const { return static_cast<int>(vectors.cols()); }
};

Frame make_frame(const Eigen::VectorXd& base, const Eigen::MatrixXd& vectors,
                 double tol_rel = kRankTolRel);

int numeric_rank(const Eigen::MatrixXd& m, double tol_rel = kRankTolRel);

// Orthonormal basis of the column span (rank columns).
Frame orthonormalized(const Frame& f);
// Orthogonal projector onto the span; used by the bundle-identity tests.
Eigen::MatrixXd projector(const Frame& f);

Frame subspace_sum(const Frame& a, const Frame& b);
// Computed through the annihilator identity ann(A) + ann(B) = ann(A cap B).
Frame subspace_intersect(const Frame& a, const Frame& b);
// Orthogonal complement, identifying R^n with its dual via the Euclidean pairing.
Frame annihilator(const Frame& f);
bool is_direct_sum(const Frame& a, const Frame& b);

// n expressions over a shared variable table.
struct VectorField {
    VarTable vars;
    std::vector<Expr> comps;

    int dim() const { return static_cast<int>(comps.size()); }
    Eigen::VectorXd eval(const Eigen::VectorXd& x) const;
    VectorField simplified() const;

    static VectorField constant(const VarTable& vars, const Eigen::VectorXd& value);
};

// L_v(lambda) = sum_i d(lambda)/dx_i * v_i
Expr lie_derivative(const Expr& lambda, const VectorField& v);

// [a, b] = Db a - Da b, computed symbolically component by component.
VectorField lie_bracket(const VectorField& a, const VectorField& b);

// (ad^0_f g, ..., ad^k_f g) with simplification between iterates.
std::vector<VectorField> ad_iterates(const VectorField& f, const VectorField& g, int k);

// Finite list of generating vector fields; evaluation yields a Frame.
struct Distribution {
    VarTable vars;
    std::vector<VectorField> gens;

    Frame eval(const Eigen::VectorXd& x, double tol_rel = kRankTolRel) const;
};

// G_i = Sp{ad^j_f g : 0 <= j <= i}. The convention i = -1 yields the empty
// distribution (needed when n - nstar = 1).
Distribution build_G(const VectorField& f, const VectorField& g, int i);

// Orthonormal frame spanning ker(Dh_x); throws RankDrop when Dh loses rank.
Frame output_kernel_W(const VarTable& vars, const std::vector<Expr>& h, const Eigen::VectorXd& x,
                      double tol_rel = kRankTolRel);

struct KernelFields {
    std::vector<VectorField> fields;
    // True when no symbolic kernel basis was found and the fields are the
    // frozen numeric kernel frame at x0.
    bool frozen_fallback = false;
};

// Symbolic generators of W = ann(Sp{dh_1,...,dh_p}). When Dh carries a p x p
// identity block (both bundled examples) the basis is exact; otherwise the
// kernel frame at x0 is frozen into constant fields and flagged.
KernelFields output_kernel_fields(const VarTable& vars, const std::vector<Expr>& h,
                                  const Eigen::VectorXd& x0, double tol_rel = kRankTolRel);

struct ClosureReport {
    int sweeps = 0;
    bool converged = true;
    bool regular = true;                              // final rank equal at all samples
    bool frozen_w_fallback = false;                   // W adjoined as frozen numeric frames
    std::vector<std::vector<int>> rank_history;       // [sweep][sample]
    std::vector<int> final_ranks;                     // per sample

    nlohmann::json to_json() const;
};

// Smallest bracket-closed superset, detected by pointwise rank saturation over
// the sample set. Extra generators (typically the W fields) are adjoined before
// the first sweep. Capped at 2(n+1) sweeps; non-convergence is reported, not thrown.
std::pair<Distribution, ClosureReport> involutive_closure(
    const Distribution& d, const std::vector<VectorField>& extra,
    const std::vector<Eigen::VectorXd>& region, double tol_rel = kRankTolRel);

}  // namespace tflpi
