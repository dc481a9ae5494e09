#include "tflpi/ltflpi.hpp"

#include <algorithm>
#include <random>

#include "tflpi/errors.hpp"

namespace tflpi {

namespace {

Eigen::VectorXd gradient_row(const Expr& lambda, const Eigen::VectorXd& x) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd row(n);
    std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (int j = 0; j < n; ++j) row(j) = lambda.diff(static_cast<std::size_t>(j)).eval(xs);
    return row;
}

std::vector<Expr> lf_chain(const Expr& lambda, const VectorField& f, int count) {
    std::vector<Expr> chain;
    chain.reserve(static_cast<std::size_t>(count));
    chain.push_back(lambda.simplified());
    for (int k = 1; k < count; ++k) chain.push_back(lie_derivative(chain.back(), f));
    return chain;
}

}  // namespace

CondARecord check_condition_a(const ControlSystem& sys, const TargetSet& tset,
                              const SampleConfig& cfg) {
    CondARecord rec;
    rec.n = sys.n();
    const Frame tangent = tangent_space(tset, tset.x0, cfg.tol_rank);
    const Distribution g_dist =
        build_G(sys.drift(), sys.input_field(), sys.n() - tset.nstar - 1);
    const Frame g_frame = g_dist.eval(tset.x0, cfg.tol_rank);
    const Frame sum = subspace_sum(tangent, g_frame);
    rec.dim_tangent = tangent.rank;
    rec.dim_g = g_frame.rank;
    rec.dim_sum = sum.rank;
    rec.independent = sum.rank == tangent.rank + g_frame.rank;
    rec.pass = rec.independent && sum.rank == rec.n;
    return rec;
}

std::pair<CondBRecord, std::pair<Distribution, ClosureReport>> check_condition_b(
    const ControlSystem& sys, const TargetSet& tset, const std::vector<Eigen::VectorXd>& samples,
    const SampleConfig& cfg) {
    const int deficit = sys.n() - tset.nstar - 2;
    const Distribution g_small = build_G(sys.drift(), sys.input_field(), deficit);

    const KernelFields w = output_kernel_fields(sys.vars, sys.h, tset.x0, cfg.tol_rank);
    auto [closure, closure_rep] = involutive_closure(g_small, w.fields, samples, cfg.tol_rank);
    closure_rep.frozen_w_fallback = w.frozen_fallback;

    CondBRecord rec;
    rec.dims.reserve(samples.size());
    bool equal = true;
    for (const auto& x : samples) {
        const Frame tangent = tangent_space(tset, x, cfg.tol_rank);
        const int d1 = subspace_sum(tangent, g_small.eval(x, cfg.tol_rank)).rank;
        const int d2 = subspace_sum(tangent, closure.eval(x, cfg.tol_rank)).rank;
        rec.dims.emplace_back(d1, d2);
        equal = equal && d1 == d2;
    }
    rec.equal_everywhere = equal;
    rec.pass = equal && closure_rep.converged;
    return {rec, {closure, closure_rep}};
}

LtflpiOutcome check_ltflpi(const ControlSystem& sys, const TargetSet& tset,
                           const SampleConfig& cfg) {
    LtflpiOutcome out;
    out.samples = sample_on_set(tset, cfg.radius, cfg.count);

    out.report.cond_a = check_condition_a(sys, tset, cfg);
    auto [cond_b, closure_pair] = check_condition_b(sys, tset, out.samples, cfg);
    out.report.cond_b = cond_b;
    out.closure = closure_pair.first;
    out.report.closure = closure_pair.second;
    out.report.regular = closure_pair.second.regular;
    out.report.sample_count = static_cast<int>(out.samples.size());
    out.report.radius = cfg.radius;
    out.report.tol_rank = cfg.tol_rank;
    out.report.solvable = out.report.cond_a.pass && cond_b.pass && out.report.regular;
    return out;
}

RelDegReport relative_degree(const Expr& lambda, const ControlSystem& sys,
                             const Eigen::VectorXd& x0, int rmax,
                             const std::vector<Eigen::VectorXd>& ball_samples, double tol_zero,
                             double tol_nonzero) {
    RelDegReport rep;
    if (rmax > sys.n()) rmax = sys.n();
    const VectorField f = sys.drift();
    const VectorField g = sys.input_field();
    std::span<const double> x0s(x0.data(), static_cast<std::size_t>(x0.size()));

    const std::vector<Expr> chain = lf_chain(lambda, f, rmax);

    int r = 0;
    for (int k = 1; k <= rmax; ++k) {
        const Expr term = lie_derivative(chain[static_cast<std::size_t>(k - 1)], g);
        if (std::abs(term.eval(x0s)) > tol_nonzero) {
            r = k;
            rep.value_at_x0 = term.eval(x0s);
            break;
        }
    }
    if (r == 0) {
        rep.failure = "no k <= rmax with L_g L_f^{k-1} lambda nonzero at x0";
        return rep;
    }
    rep.r = r;

    bool vanish = true;
    for (int k = 0; k < r; ++k) {
        const Expr term = lie_derivative(chain[static_cast<std::size_t>(k)], g);
        std::vector<double> values;
        values.reserve(ball_samples.size());
        double worst = std::abs(term.eval(x0s));
        for (const auto& x : ball_samples) {
            std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
            const double v = term.eval(xs);
            values.push_back(v);
            worst = std::max(worst, std::abs(v));
        }
        rep.per_sample.push_back(std::move(values));
        if (k + 1 < r) {
            rep.lower_term_max.push_back(worst);
            vanish = vanish && worst < tol_zero;
        }
    }
    rep.well_defined = vanish;
    if (!vanish)
        rep.failure = "a lower-order term L_g L_f^k lambda does not vanish on the ball around x0";
    return rep;
}

ZeroDynReport zero_dynamics_coincidence(const Expr& lambda, int r, const ControlSystem& sys,
                                        const TargetSet& tset,
                                        const std::vector<Eigen::VectorXd>& samples,
                                        double tol_zero) {
    ZeroDynReport rep;
    const std::vector<Expr> chain = lf_chain(lambda, sys.drift(), r);

    for (const auto& x : samples) {
        std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
        for (const auto& c : chain) rep.max_residual = std::max(rep.max_residual, std::abs(c.eval(xs)));
    }

    Eigen::MatrixXd chain_jac(r, sys.n());
    for (int k = 0; k < r; ++k)
        chain_jac.row(k) = gradient_row(chain[static_cast<std::size_t>(k)], tset.x0).transpose();
    rep.chain_rank = numeric_rank(chain_jac);

    rep.dims_match = tset.nstar == sys.n() - r;
    rep.coincide = rep.dims_match && rep.max_residual < tol_zero && rep.chain_rank == r;
    return rep;
}

ObsFactorReport observability_factorization_rows(const std::vector<Eigen::VectorXd>& dlambda_rows,
                                                 const ControlSystem& sys,
                                                 const std::vector<Eigen::VectorXd>& samples,
                                                 double tol) {
    if (dlambda_rows.size() != samples.size())
        throw DimensionMismatchError("one gradient row per sample is required");
    ObsFactorReport rep;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Eigen::MatrixXd dh = sys.output_jacobian(samples[i]);  // p x n
        const Eigen::VectorXd& row = dlambda_rows[i];
        // min_sigma | dh^T sigma - dlambda^T |
        const Eigen::VectorXd sigma =
            dh.transpose().completeOrthogonalDecomposition().solve(row);
        const double resid =
            (row - dh.transpose() * sigma).norm() / std::max(1.0, row.norm());
        rep.sigmas.push_back(sigma);
        rep.max_residual = std::max(rep.max_residual, resid);
    }
    rep.observable = rep.max_residual < tol;
    return rep;
}

ObsFactorReport observability_factorization(const Expr& lambda, const ControlSystem& sys,
                                            const std::vector<Eigen::VectorXd>& samples,
                                            double tol) {
    std::vector<Eigen::VectorXd> rows;
    rows.reserve(samples.size());
    for (const auto& x : samples) rows.push_back(gradient_row(lambda, x));
    return observability_factorization_rows(rows, sys, samples, tol);
}

GtflpiReport check_gtflpi(const ControlSystem& sys, const TargetSet& tset,
                          const std::vector<Eigen::VectorXd>& grid, bool cylinder_attested,
                          const SampleConfig& cfg) {
    if (grid.empty()) throw PreconditionError("check_gtflpi requires a nonempty grid");
    GtflpiReport rep;
    rep.cylinder_attested = cylinder_attested;

    const int deficit = sys.n() - tset.nstar - 2;
    const Distribution g_small = build_G(sys.drift(), sys.input_field(), deficit);
    const Distribution g_big = build_G(sys.drift(), sys.input_field(), sys.n() - tset.nstar - 1);

    // (a) pointwise direct-sum condition at every grid point
    rep.cond_a = true;
    for (const auto& x : grid) {
        const Frame tangent = tangent_space(tset, x, cfg.tol_rank);
        const Frame gf = g_big.eval(x, cfg.tol_rank);
        const Frame sum = subspace_sum(tangent, gf);
        rep.cond_a = rep.cond_a && sum.rank == sys.n() && sum.rank == tangent.rank + gf.rank;
    }

    // Off-set ball samples augment the grid for the constant-rank checks.
    std::vector<Eigen::VectorXd> all_points = grid;
    for (const auto& x : halton_ball(tset.x0, cfg.radius, std::max(8, cfg.count / 4)))
        all_points.push_back(x);

    // (b) involutivity of G_{n-nstar-2}: every pairwise bracket stays in the
    // span, and the rank is constant over grid and ball samples.
    rep.involutivity_residual = 0.0;
    std::vector<VectorField> brackets;
    for (std::size_t i = 0; i < g_small.gens.size(); ++i)
        for (std::size_t j = i + 1; j < g_small.gens.size(); ++j)
            brackets.push_back(lie_bracket(g_small.gens[i], g_small.gens[j]));
    for (const auto& x : all_points) {
        const Frame gf = g_small.eval(x, cfg.tol_rank);
        rep.g_ranks.push_back(gf.rank);
        const Eigen::MatrixXd proj = projector(gf);
        for (const auto& br : brackets) {
            const Eigen::VectorXd v = br.eval(x);
            const double resid = (v - proj * v).norm() / std::max(1.0, v.norm());
            rep.involutivity_residual = std::max(rep.involutivity_residual, resid);
        }
    }
    rep.cond_b_involutive = rep.involutivity_residual < 1e-6;
    rep.cond_b_constant_rank =
        std::all_of(rep.g_ranks.begin(), rep.g_ranks.end(),
                    [&](int r) { return r == rep.g_ranks.front(); });

    // (c) constant rank of inv(G_{n-nstar-2}+W) plus the same dimension
    // equality the local test uses, at every grid point.
    const KernelFields w = output_kernel_fields(sys.vars, sys.h, tset.x0, cfg.tol_rank);
    auto [closure, closure_rep] = involutive_closure(g_small, w.fields, all_points, cfg.tol_rank);
    rep.closure_ranks = closure_rep.final_ranks;
    rep.cond_c_constant_rank = closure_rep.regular && closure_rep.converged;

    rep.cond_c_dims_equal = true;
    for (const auto& x : grid) {
        const Frame tangent = tangent_space(tset, x, cfg.tol_rank);
        const int d1 = subspace_sum(tangent, g_small.eval(x, cfg.tol_rank)).rank;
        const int d2 = subspace_sum(tangent, closure.eval(x, cfg.tol_rank)).rank;
        rep.cond_c_dims_equal = rep.cond_c_dims_equal && d1 == d2;
    }

    rep.sufficient_hold = rep.cond_a && rep.cond_b_involutive && rep.cond_b_constant_rank &&
                          rep.cond_c_constant_rank && rep.cond_c_dims_equal;
    return rep;
}

CommuteReport check_commuting(const ControlSystem& sys, int num_fields, double tol) {
    CommuteReport rep;
    const auto fields = ad_iterates(sys.drift(), sys.input_field(), num_fields - 1);

    std::mt19937 rng(20240821u);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<Eigen::VectorXd> points;
    for (int i = 0; i < 20; ++i) {
        Eigen::VectorXd x(sys.n());
        for (int j = 0; j < sys.n(); ++j) x(j) = unit(rng);
        points.push_back(x);
    }

    for (std::size_t i = 0; i < fields.size(); ++i) {
        for (std::size_t j = i + 1; j < fields.size(); ++j) {
            const VectorField br = lie_bracket(fields[i], fields[j]);
            double worst = 0.0;
            for (const auto& x : points) worst = std::max(worst, br.eval(x).lpNorm<Eigen::Infinity>());
            if (worst > rep.max_residual) {
                rep.max_residual = worst;
                rep.witness_i = static_cast<int>(i);
                rep.witness_j = static_cast<int>(j);
                std::string txt = "(";
                for (int c = 0; c < br.dim(); ++c) {
                    if (c) txt += ", ";
                    txt += br.comps[static_cast<std::size_t>(c)].str(sys.vars);
                }
                rep.witness = txt + ")";
            }
        }
    }
    rep.commuting = rep.max_residual < tol;
    return rep;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

nlohmann::json CondARecord::to_json() const {
    return {{"dim_tangent", dim_tangent}, {"dim_g", dim_g},   {"dim_sum", dim_sum},
            {"n", n},                     {"independent", independent}, {"pass", pass}};
}

nlohmann::json CondBRecord::to_json() const {
    nlohmann::json dims_json = nlohmann::json::array();
    for (const auto& [d1, d2] : dims) dims_json.push_back({{"with_g", d1}, {"with_closure", d2}});
    return {{"dims", dims_json}, {"equal_everywhere", equal_everywhere}, {"pass", pass}};
}

nlohmann::json LtflpiReport::to_json() const {
    return {{"condition_a", cond_a.to_json()},
            {"condition_b", cond_b.to_json()},
            {"closure", closure.to_json()},
            {"regular", regular},
            {"solvable", solvable},
            {"sample_count", sample_count},
            {"radius", radius},
            {"tol_rank", tol_rank}};
}

nlohmann::json RelDegReport::to_json() const {
    return {{"r", r},
            {"well_defined", well_defined},
            {"value_at_x0", value_at_x0},
            {"lower_term_max", lower_term_max},
            {"per_sample", per_sample},
            {"failure", failure}};
}

nlohmann::json ZeroDynReport::to_json() const {
    return {{"max_residual", max_residual},
            {"chain_rank", chain_rank},
            {"dims_match", dims_match},
            {"coincide", coincide}};
}

nlohmann::json ObsFactorReport::to_json() const {
    nlohmann::json sig = nlohmann::json::array();
    for (const auto& s : sigmas) {
        std::vector<double> row(s.data(), s.data() + s.size());
        sig.push_back(row);
    }
    return {{"max_residual", max_residual}, {"observable", observable}, {"sigma", sig}};
}

nlohmann::json GtflpiReport::to_json() const {
    return {{"condition_a", cond_a},
            {"condition_b_involutive", cond_b_involutive},
            {"condition_b_constant_rank", cond_b_constant_rank},
            {"condition_c_constant_rank", cond_c_constant_rank},
            {"condition_c_dims_equal", cond_c_dims_equal},
            {"involutivity_residual", involutivity_residual},
            {"g_ranks", g_ranks},
            {"closure_ranks", closure_ranks},
            {"cylinder_attested", cylinder_attested},
            {"verdict", sufficient_hold ? "sufficient-hold" : "sufficient-fail"}};
}

nlohmann::json CommuteReport::to_json() const {
    return {{"commuting", commuting},
            {"max_residual", max_residual},
            {"witness_i", witness_i},
            {"witness_j", witness_j},
            {"witness", witness}};
}

}  // namespace tflpi
