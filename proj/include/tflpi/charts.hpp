#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "tflpi/ltflpi.hpp"
#include "tflpi/ode.hpp"

namespace tflpi {

struct FlowStep {
    VectorField field;
    int s_index = 0;     // parameter slot in the chart coordinate vector
    std::string label;   // v1.., w1.., ad<k>, tran<k>
};

// Ordered flow composition: tangential-complement fields, then the single
// ad^{n-nstar-1}_f g slot, then the transversal group (highest iterate first,
// g last), then the tangential frame fields. The frozen frames w_i, v_i are
// constant fields built from the bases at x0.
struct FlowChart {
    Eigen::VectorXd x0;
    VarTable vars;
    int n = 0;
    int nstar = 0;
    int mu = 0;             // dim(T_{x0} Gamma* cap inv(G_{n-nstar-2}+W)(x0))
    std::vector<FlowStep> steps;  // execution order, innermost flow first
    int lambda_index = 0;         // slot of the outer transversal parameter

    nlohmann::json to_json() const;
};

// Assemble the chart frame from a solvable LTFLPI outcome; throws
// PreconditionError when the outcome is not solvable and IndependenceFailure
// when the assembled fields are rank-deficient at x0.
FlowChart build_frames(const ControlSystem& sys, const TargetSet& tset,
                       const LtflpiOutcome& outcome, const SampleConfig& cfg = {});

// x = Phi_s(x0): integrate each flow segment for "time" equal to its parameter.
Eigen::VectorXd forward_map(const FlowChart& chart, const Eigen::VectorXd& s,
                            const OdeOptions& opts = {});

// Damped Newton inversion of the forward map (finite-difference Jacobian,
// step 1e-6, at most 50 iterations, success at |F|_inf < 1e-9).
Eigen::VectorXd invert_chart(const FlowChart& chart, const Eigen::VectorXd& x,
                             const OdeOptions& opts = {});

struct ChartVerification {
    double roundtrip_max = 0.0;
    double ann_residual_max = 0.0;     // |<dlam, ad^k_f g>|, k <= n-nstar-2
    double nonvanish_at_x0 = 0.0;      // |<dlam, ad^{n-nstar-1}_f g>(x0)|
    double lambda_on_set_max = 0.0;
    double observability_residual = 0.0;
    double radius = 0.0;      // chart-validity ball for the gradient checks
    double set_radius = 0.0;  // working radius of the on-set vanishing test
    int ball_points = 0;
    int set_points = 0;
    bool pass = false;
    std::string failing_check;  // empty when pass

    nlohmann::json to_json() const;
};

// A transverse output as handed around the toolkit: always evaluable, with a
// closed form attached only when the user supplied one.
struct TransverseOutput {
    std::function<double(const Eigen::VectorXd&)> value;
    std::optional<Expr> symbolic;
};

struct ChartResult {
    FlowChart chart;
    double validity_radius = 0.0;
    ChartVerification verification;

    Eigen::VectorXd forward(const Eigen::VectorXd& s) const { return forward_map(chart, s); }
    Eigen::VectorXd invert(const Eigen::VectorXd& x) const { return invert_chart(chart, x); }
    // The constructed observable transverse output.
    double lambda(const Eigen::VectorXd& x) const { return invert(x)(chart.lambda_index); }
    // Numeric-only handle on the constructed output.
    TransverseOutput output() const;

    nlohmann::json to_json() const;
};

// Numeric verification battery for the extracted output at the given radius.
ChartVerification verify_chart(const ControlSystem& sys, const TargetSet& tset,
                               const FlowChart& chart, double radius,
                               const SampleConfig& cfg = {});

// Single-shot extraction: verify at the given radius and throw
// VerificationError naming the failing check on failure.
ChartResult extract_lambda(const ControlSystem& sys, const TargetSet& tset, const FlowChart& chart,
                           double radius, const SampleConfig& cfg = {});

// Full pipeline: check_ltflpi, build_frames, then verify with the radius
// halved up to six times. The final attempt is returned honestly even when
// verification still fails.
ChartResult construct_chart(const ControlSystem& sys, const TargetSet& tset,
                            const SampleConfig& cfg = {}, double initial_radius = 0.05);

struct EtaRecipe {
    std::vector<int> s_slots;              // chart slots of the tangential coordinates
    std::vector<double> lg_eta_residuals;  // max |<d eta_i, g>| over samples, when checked
    bool checked = false;
};

struct NormalForm {
    int r = 0;
    std::vector<Expr> xi_chain;  // xi_k = L_f^{k-1} lambda
    Expr a1;                     // L_f^r lambda
    Expr a2;                     // L_g L_f^{r-1} lambda
    EtaRecipe eta;

    nlohmann::json to_json(const VarTable& vars) const;
};

// Requires lambda to have verified relative degree n - nstar; the eta recipe
// is filled (and L_g eta checked) when a constructed chart is supplied.
NormalForm normal_form(const Expr& lambda, const ControlSystem& sys, const TargetSet& tset,
                       const SampleConfig& cfg = {}, const ChartResult* chart = nullptr);

// Throws NotSymbolic when the output has no closed form; the chart coordinate
// evaluators remain the only handle on the chain in that case.
NormalForm normal_form(const TransverseOutput& lambda, const ControlSystem& sys,
                       const TargetSet& tset, const SampleConfig& cfg = {},
                       const ChartResult* chart = nullptr);

}  // namespace tflpi
