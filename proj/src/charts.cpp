#include "tflpi/charts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tflpi/errors.hpp"

namespace tflpi {

namespace {

// Deterministic orthonormal basis of the span: pivoted QR of the projector,
// columns sign-fixed and ordered by leading entry. Axis-aligned subspaces get
// their axis vectors back exactly, matching the frames a hand calculation uses.
Eigen::MatrixXd canonical_basis(const Frame& f) {
    const int n = f.ambient_dim();
    if (f.rank == 0) return Eigen::MatrixXd(n, 0);
    const Eigen::MatrixXd p = projector(f);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(p);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, f.rank);

    std::vector<int> lead(static_cast<std::size_t>(f.rank));
    for (int c = 0; c < f.rank; ++c) {
        int arg = 0;
        q.col(c).cwiseAbs().maxCoeff(&arg);
        if (q(arg, c) < 0.0) q.col(c) = -q.col(c);
        // snap clean axis vectors free of QR sign noise
        for (int i = 0; i < n; ++i)
            if (std::abs(q(i, c)) < 1e-14) q(i, c) = 0.0;
        lead[static_cast<std::size_t>(c)] = arg;
    }
    std::vector<int> order(static_cast<std::size_t>(f.rank));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return lead[static_cast<std::size_t>(a)] <
                                                lead[static_cast<std::size_t>(b)]; });
    Eigen::MatrixXd out(n, f.rank);
    for (int c = 0; c < f.rank; ++c) out.col(c) = q.col(order[static_cast<std::size_t>(c)]);
    return out;
}

}  // namespace

FlowChart build_frames(const ControlSystem& sys, const TargetSet& tset,
                       const LtflpiOutcome& outcome, const SampleConfig& cfg) {
    if (!outcome.report.solvable)
        throw PreconditionError("build_frames requires a solvable LTFLPI outcome");

    FlowChart chart;
    chart.x0 = tset.x0;
    chart.vars = sys.vars;
    chart.n = sys.n();
    chart.nstar = tset.nstar;

    const Frame tangent = tangent_space(tset, tset.x0, cfg.tol_rank);
    const Frame closure_frame = outcome.closure.eval(tset.x0, cfg.tol_rank);
    const Frame g_tang = make_frame(
        tset.x0, canonical_basis(subspace_intersect(tangent, closure_frame)), cfg.tol_rank);
    chart.mu = g_tang.rank;
    chart.lambda_index = chart.nstar - chart.mu;

    // Tangential complement: the part of T_{x0}Gamma* outside G^tang.
    const Eigen::MatrixXd complement =
        tangent.vectors - projector(g_tang) * tangent.vectors;
    const Frame v_frame = make_frame(
        tset.x0, canonical_basis(make_frame(tset.x0, complement, cfg.tol_rank)), cfg.tol_rank);
    if (v_frame.rank != chart.nstar - chart.mu)
        throw RankDropError("tangential complement has unexpected dimension");

    const auto ads = ad_iterates(sys.drift(), sys.input_field(), sys.n() - tset.nstar - 1);
    const int r = sys.n() - tset.nstar;  // transversal dimension

    // Execution order per the flow composition: v's, single top iterate,
    // transversal group highest-to-lowest, then the w's.
    for (int i = 0; i < v_frame.rank; ++i)
        chart.steps.push_back({VectorField::constant(sys.vars, v_frame.vectors.col(i)), i,
                               "v" + std::to_string(i + 1)});
    chart.steps.push_back(
        {ads[static_cast<std::size_t>(r - 1)], chart.nstar - chart.mu, "ad" + std::to_string(r - 1)});
    for (int j = r - 2; j >= 0; --j)
        chart.steps.push_back({ads[static_cast<std::size_t>(j)],
                               chart.nstar - chart.mu + 1 + j, "tran" + std::to_string(j)});
    for (int i = 0; i < chart.mu; ++i)
        chart.steps.push_back({VectorField::constant(sys.vars, g_tang.vectors.col(i)),
                               chart.n - chart.mu + i, "w" + std::to_string(i + 1)});

    Eigen::MatrixXd all(chart.n, chart.n);
    for (std::size_t i = 0; i < chart.steps.size(); ++i)
        all.col(static_cast<int>(i)) = chart.steps[i].field.eval(tset.x0);
    if (numeric_rank(all, cfg.tol_rank) != chart.n)
        throw IndependenceFailureError("chart frame is rank-deficient at x0");

    return chart;
}

Eigen::VectorXd forward_map(const FlowChart& chart, const Eigen::VectorXd& s,
                            const OdeOptions& opts) {
    if (s.size() != chart.n) throw DimensionMismatchError("chart parameter has wrong dimension");
    Eigen::VectorXd x = chart.x0;
    for (const auto& step : chart.steps) {
        const double t = s(step.s_index);
        if (t == 0.0) continue;
        const VectorField& field = step.field;
        x = integrate_ode(
            [&field](const Eigen::VectorXd& xi, Eigen::VectorXd& dx, double) {
                dx = field.eval(xi);
            },
            x, 0.0, t, opts);
    }
    return x;
}

namespace {

Eigen::MatrixXd fd_jacobian(const FlowChart& chart, const Eigen::VectorXd& s,
                            const OdeOptions& opts, double step) {
    const int n = chart.n;
    Eigen::MatrixXd J(n, n);
    for (int j = 0; j < n; ++j) {
        Eigen::VectorXd sp = s, sm = s;
        sp(j) += step;
        sm(j) -= step;
        J.col(j) = (forward_map(chart, sp, opts) - forward_map(chart, sm, opts)) / (2.0 * step);
    }
    return J;
}

}  // namespace

Eigen::VectorXd invert_chart(const FlowChart& chart, const Eigen::VectorXd& x,
                             const OdeOptions& opts) {
    if (x.size() != chart.n) throw DimensionMismatchError("point has wrong dimension");
    constexpr int kMaxIter = 50;
    constexpr double kTol = 1e-9;
    constexpr double kFdStep = 1e-6;
    constexpr double kMinDamping = 1.0 / 1024.0;

    Eigen::VectorXd s = Eigen::VectorXd::Zero(chart.n);
    Eigen::VectorXd residual = forward_map(chart, s, opts) - x;
    double best = residual.lpNorm<Eigen::Infinity>();

    for (int iter = 0; iter < kMaxIter; ++iter) {
        if (best < kTol) return s;
        const Eigen::MatrixXd J = fd_jacobian(chart, s, opts, kFdStep);
        const Eigen::VectorXd step = J.fullPivLu().solve(-residual);
        if (!step.allFinite()) throw NoConvergenceError("chart inversion produced a singular step");

        double alpha = 1.0;
        for (;;) {
            const Eigen::VectorXd candidate = s + alpha * step;
            double cand_norm;
            Eigen::VectorXd cand_res;
            try {
                cand_res = forward_map(chart, candidate, opts) - x;
                cand_norm = cand_res.lpNorm<Eigen::Infinity>();
            } catch (const IntegratorBlowupError&) {
                cand_norm = std::numeric_limits<double>::infinity();
            }
            if (cand_norm < best) {
                s = candidate;
                residual = cand_res;
                best = cand_norm;
                break;
            }
            alpha *= 0.5;
            if (alpha < kMinDamping)
                throw NoConvergenceError("chart inversion stalled (damping exhausted)");
        }
    }
    if (best < kTol) return s;
    throw NoConvergenceError("chart inversion did not converge in 50 iterations");
}

ChartVerification verify_chart(const ControlSystem& sys, const TargetSet& tset,
                               const FlowChart& chart, double radius, const SampleConfig& cfg) {
    ChartVerification v;
    v.radius = radius;

    auto fail = [&](const std::string& name) {
        if (v.failing_check.empty()) v.failing_check = name;
    };

    // Flow/inversion roundtrip over an s-ball.
    for (const auto& s : halton_ball(Eigen::VectorXd::Zero(chart.n), radius, 16)) {
        const Eigen::VectorXd x = forward_map(chart, s);
        const Eigen::VectorXd back = invert_chart(chart, x);
        v.roundtrip_max = std::max(v.roundtrip_max, (back - s).lpNorm<Eigen::Infinity>());
    }
    if (v.roundtrip_max >= 1e-7) fail("roundtrip");

    const int r = chart.n - chart.nstar;
    const auto ads = ad_iterates(sys.drift(), sys.input_field(), r - 1);

    auto lambda_at = [&](const Eigen::VectorXd& x) {
        return invert_chart(chart, x)(chart.lambda_index);
    };
    // Central differences over a Newton-based function: the step is kept well
    // above the inversion tolerance so the quotient noise stays near 1e-6.
    constexpr double kGradStep = 1e-4;
    auto numeric_gradient = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd grad(chart.n);
        for (int j = 0; j < chart.n; ++j) {
            Eigen::VectorXd xp = x, xm = x;
            xp(j) += kGradStep;
            xm(j) -= kGradStep;
            grad(j) = (lambda_at(xp) - lambda_at(xm)) / (2.0 * kGradStep);
        }
        return grad;
    };

    const auto ball = halton_ball(tset.x0, radius, 32);
    v.ball_points = static_cast<int>(ball.size());
    std::vector<Eigen::VectorXd> gradient_rows;
    gradient_rows.reserve(ball.size());
    for (const auto& x : ball) {
        const Eigen::VectorXd grad = numeric_gradient(x);
        gradient_rows.push_back(grad);
        for (int k = 0; k + 1 < r; ++k) {
            const double pairing = grad.dot(ads[static_cast<std::size_t>(k)].eval(x));
            v.ann_residual_max = std::max(v.ann_residual_max, std::abs(pairing));
        }
    }
    if (v.ann_residual_max >= 1e-5) fail("annihilation");

    const Eigen::VectorXd grad0 = numeric_gradient(tset.x0);
    v.nonvanish_at_x0 = std::abs(grad0.dot(ads[static_cast<std::size_t>(r - 1)].eval(tset.x0)));
    if (v.nonvanish_at_x0 <= 1e-4) fail("nonvanishing");

    // The vanishing test stays at the working radius even when the chart ball
    // shrinks: a surrogate frame that is only valid to second order would
    // otherwise slip under the absolute threshold on a small enough ball.
    v.set_radius = cfg.radius;
    const auto set_samples = sample_on_set(tset, cfg.radius, 32);
    v.set_points = static_cast<int>(set_samples.size());
    try {
        for (const auto& x : set_samples)
            v.lambda_on_set_max = std::max(v.lambda_on_set_max, std::abs(lambda_at(x)));
    } catch (const NoConvergenceError&) {
        v.lambda_on_set_max = std::numeric_limits<double>::infinity();
    }
    if (v.lambda_on_set_max >= 1e-7) fail("vanishing_on_set");

    v.observability_residual =
        observability_factorization_rows(gradient_rows, sys, ball, 1e-5).max_residual;
    if (v.observability_residual >= 1e-5) fail("observability");

    v.pass = v.failing_check.empty();
    return v;
}

ChartResult extract_lambda(const ControlSystem& sys, const TargetSet& tset, const FlowChart& chart,
                           double radius, const SampleConfig& cfg) {
    ChartResult result;
    result.chart = chart;
    result.validity_radius = radius;
    result.verification = verify_chart(sys, tset, chart, radius, cfg);
    if (!result.verification.pass)
        throw VerificationError(result.verification.failing_check,
                                "constructed output failed verification at radius " +
                                    std::to_string(radius));
    return result;
}

ChartResult construct_chart(const ControlSystem& sys, const TargetSet& tset,
                            const SampleConfig& cfg, double initial_radius) {
    const LtflpiOutcome outcome = check_ltflpi(sys, tset, cfg);
    const FlowChart chart = build_frames(sys, tset, outcome, cfg);

    ChartResult result;
    result.chart = chart;
    double radius = initial_radius;
    for (int attempt = 0; attempt <= 6; ++attempt) {
        result.validity_radius = radius;
        result.verification = verify_chart(sys, tset, chart, radius, cfg);
        if (result.verification.pass) return result;
        // the on-set test runs at a fixed radius, so shrinking cannot cure it
        if (result.verification.lambda_on_set_max >= 1e-7) break;
        radius *= 0.5;
    }
    return result;  // honest failure: verification of the last attempt is kept
}

TransverseOutput ChartResult::output() const {
    const FlowChart chart_copy = chart;
    return {[chart_copy](const Eigen::VectorXd& x) {
                return invert_chart(chart_copy, x)(chart_copy.lambda_index);
            },
            std::nullopt};
}

NormalForm normal_form(const TransverseOutput& lambda, const ControlSystem& sys,
                       const TargetSet& tset, const SampleConfig& cfg, const ChartResult* chart) {
    if (!lambda.symbolic)
        throw NotSymbolicError(
            "the output is only available as a numeric evaluator; the symbolic chain "
            "needs a closed form (the chart inverse still provides transverse coordinates)");
    return normal_form(*lambda.symbolic, sys, tset, cfg, chart);
}

NormalForm normal_form(const Expr& lambda, const ControlSystem& sys, const TargetSet& tset,
                       const SampleConfig& cfg, const ChartResult* chart) {
    const auto ball = halton_ball(tset.x0, cfg.radius, cfg.count);
    const RelDegReport rd = relative_degree(lambda, sys, tset.x0, sys.n(), ball);
    const int r = sys.n() - tset.nstar;
    if (!rd.well_defined || rd.r != r)
        throw PreconditionError(
            "normal_form requires a verified relative degree of n - nstar (got " +
            (rd.well_defined ? std::to_string(rd.r) : std::string("undefined")) + ")");

    NormalForm nf;
    nf.r = r;
    nf.xi_chain.push_back(lambda.simplified());
    for (int k = 1; k < r; ++k) nf.xi_chain.push_back(lie_derivative(nf.xi_chain.back(), sys.drift()));
    nf.a1 = lie_derivative(nf.xi_chain.back(), sys.drift());
    nf.a2 = lie_derivative(nf.xi_chain.back(), sys.input_field());

    if (chart != nullptr) {
        // Tangential coordinate candidates: the complement slots and the
        // tangential-frame slots of the chart.
        for (int i = 0; i < chart->chart.nstar - chart->chart.mu; ++i)
            nf.eta.s_slots.push_back(i);
        for (int i = 0; i < chart->chart.mu; ++i)
            nf.eta.s_slots.push_back(chart->chart.n - chart->chart.mu + i);

        const auto pts = halton_ball(tset.x0, cfg.radius, 8);
        const VectorField g = sys.input_field();
        constexpr double kGradStep = 1e-4;
        for (int slot : nf.eta.s_slots) {
            double worst = 0.0;
            for (const auto& x : pts) {
                Eigen::VectorXd grad(chart->chart.n);
                for (int j = 0; j < chart->chart.n; ++j) {
                    Eigen::VectorXd xp = x, xm = x;
                    xp(j) += kGradStep;
                    xm(j) -= kGradStep;
                    grad(j) = (invert_chart(chart->chart, xp)(slot) -
                               invert_chart(chart->chart, xm)(slot)) /
                              (2.0 * kGradStep);
                }
                worst = std::max(worst, std::abs(grad.dot(g.eval(x))));
            }
            nf.eta.lg_eta_residuals.push_back(worst);
        }
        nf.eta.checked = true;
    }
    return nf;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

nlohmann::json FlowChart::to_json() const {
    nlohmann::json steps_json = nlohmann::json::array();
    for (const auto& st : steps) {
        std::string field = "(";
        for (int c = 0; c < st.field.dim(); ++c) {
            if (c) field += ", ";
            field += st.field.comps[static_cast<std::size_t>(c)].str(vars);
        }
        steps_json.push_back(
            {{"label", st.label}, {"s_index", st.s_index}, {"field", field + ")"}});
    }
    return {{"n", n}, {"nstar", nstar}, {"mu", mu},
            {"lambda_index", lambda_index}, {"steps", steps_json}};
}

nlohmann::json ChartVerification::to_json() const {
    return {{"roundtrip_max", roundtrip_max},
            {"annihilation_residual_max", ann_residual_max},
            {"nonvanish_at_x0", nonvanish_at_x0},
            {"lambda_on_set_max", lambda_on_set_max},
            {"observability_residual", observability_residual},
            {"radius", radius},
            {"set_radius", set_radius},
            {"ball_points", ball_points},
            {"set_points", set_points},
            {"pass", pass},
            {"failing_check", failing_check}};
}

nlohmann::json ChartResult::to_json() const {
    return {{"chart", chart.to_json()},
            {"validity_radius", validity_radius},
            {"verification", verification.to_json()}};
}

nlohmann::json NormalForm::to_json(const VarTable& vars) const {
    nlohmann::json chain = nlohmann::json::array();
    for (const auto& xi : xi_chain) chain.push_back(xi.str(vars));
    nlohmann::json eta_json = {{"s_slots", eta.s_slots},
                               {"lg_eta_residuals", eta.lg_eta_residuals},
                               {"checked", eta.checked}};
    return {{"r", r}, {"xi_chain", chain}, {"a1", a1.str(vars)}, {"a2", a2.str(vars)},
            {"eta", eta_json}};
}

}  // namespace tflpi
