#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "tflpi/liegeom.hpp"
#include "tflpi/sysmodel.hpp"

namespace tflpi {

// Nonvanishing threshold, kept a decade above kZeroTol to avoid verdict
// flapping near the boundary.
inline constexpr double kNonzeroTol = 1e-6;

struct CondARecord {
    int dim_tangent = 0;
    int dim_g = 0;       // dim G_{n-nstar-1}(x0)
    int dim_sum = 0;
    int n = 0;
    bool independent = false;
    bool pass = false;

    nlohmann::json to_json() const;
};

struct CondBRecord {
    // per sample: dim(T + G_{n-nstar-2}) and dim(T + inv(G_{n-nstar-2}+W))
    std::vector<std::pair<int, int>> dims;
    bool equal_everywhere = false;
    bool pass = false;

    nlohmann::json to_json() const;
};

struct LtflpiReport {
    CondARecord cond_a;
    CondBRecord cond_b;
    ClosureReport closure;
    bool regular = false;   // closure rank constant across samples
    bool solvable = false;
    int sample_count = 0;
    double radius = 0.0;
    double tol_rank = kRankTolRel;

    nlohmann::json to_json() const;
};

struct LtflpiOutcome {
    LtflpiReport report;
    Distribution closure;                  // inv(G_{n-nstar-2} + W)
    std::vector<Eigen::VectorXd> samples;  // the on-set sample list used
};

CondARecord check_condition_a(const ControlSystem& sys, const TargetSet& tset,
                              const SampleConfig& cfg = {});

// Needs the sample list so the involutive closure is computed once per call.
std::pair<CondBRecord, std::pair<Distribution, ClosureReport>> check_condition_b(
    const ControlSystem& sys, const TargetSet& tset, const std::vector<Eigen::VectorXd>& samples,
    const SampleConfig& cfg = {});

LtflpiOutcome check_ltflpi(const ControlSystem& sys, const TargetSet& tset,
                           const SampleConfig& cfg = {});

struct RelDegReport {
    int r = 0;                 // smallest k with L_g L_f^{k-1} lambda nonzero at x0
    bool well_defined = false;
    double value_at_x0 = 0.0;  // L_g L_f^{r-1} lambda at x0
    // max over ball samples of |L_g L_f^k lambda| for k = 0..r-2
    std::vector<double> lower_term_max;
    // per k, per sample raw values
    std::vector<std::vector<double>> per_sample;
    std::string failure;  // empty when well-defined

    nlohmann::json to_json() const;
};

// Well-definedness requires vanishing of the lower terms on a full-dimensional
// ball around x0, not just on the target set.
RelDegReport relative_degree(const Expr& lambda, const ControlSystem& sys,
                             const Eigen::VectorXd& x0, int rmax,
                             const std::vector<Eigen::VectorXd>& ball_samples,
                             double tol_zero = kZeroTol, double tol_nonzero = kNonzeroTol);

struct ZeroDynReport {
    double max_residual = 0.0;  // max |L_f^k lambda| over set samples, k = 0..r-1
    int chain_rank = 0;         // rank of the chain Jacobian at x0
    bool dims_match = false;    // nstar == n - r
    bool coincide = false;

    nlohmann::json to_json() const;
};

ZeroDynReport zero_dynamics_coincidence(const Expr& lambda, int r, const ControlSystem& sys,
                                        const TargetSet& tset,
                                        const std::vector<Eigen::VectorXd>& samples,
                                        double tol_zero = kZeroTol);

struct ObsFactorReport {
    double max_residual = 0.0;
    std::vector<Eigen::VectorXd> sigmas;  // least-squares coefficients per sample
    bool observable = false;

    nlohmann::json to_json() const;
};

// Least-squares fit Dlambda ~ sum_i sigma_i Dh_i at each sample; the residual
// is relative to max(1, |Dlambda|).
ObsFactorReport observability_factorization(const Expr& lambda, const ControlSystem& sys,
                                            const std::vector<Eigen::VectorXd>& samples,
                                            double tol = kZeroTol);

// Same test with externally supplied gradient rows (used on numerically
// constructed outputs).
ObsFactorReport observability_factorization_rows(const std::vector<Eigen::VectorXd>& dlambda_rows,
                                                 const ControlSystem& sys,
                                                 const std::vector<Eigen::VectorXd>& samples,
                                                 double tol = kZeroTol);

struct GtflpiReport {
    bool cond_a = false;
    bool cond_b_involutive = false;
    bool cond_b_constant_rank = false;
    bool cond_c_constant_rank = false;
    bool cond_c_dims_equal = false;
    double involutivity_residual = 0.0;
    std::vector<int> g_ranks;        // G_{n-nstar-2} rank at grid + ball samples
    std::vector<int> closure_ranks;  // inv(G+W) rank per sample
    bool cylinder_attested = false;
    bool sufficient_hold = false;  // never a claim of necessity

    nlohmann::json to_json() const;
};

// Sufficient conditions for the global problem over a user-supplied grid on
// the target set. The generalized-cylinder assumption is recorded as given.
GtflpiReport check_gtflpi(const ControlSystem& sys, const TargetSet& tset,
                          const std::vector<Eigen::VectorXd>& grid, bool cylinder_attested,
                          const SampleConfig& cfg = {});

struct CommuteReport {
    bool commuting = false;
    double max_residual = 0.0;
    int witness_i = -1;
    int witness_j = -1;
    std::string witness;  // printed bracket of the worst pair

    nlohmann::json to_json() const;
};

// [ad^i_f g, ad^j_f g] = 0 for i,j < num_fields, tested at 20 deterministic
// pseudo-random points in [-1,1]^n.
CommuteReport check_commuting(const ControlSystem& sys, int num_fields, double tol = 1e-8);

}  // namespace tflpi
