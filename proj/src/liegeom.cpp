#include "tflpi/liegeom.hpp"

#include <algorithm>

#include "tflpi/errors.hpp"

namespace tflpi {

int numeric_rank(const Eigen::MatrixXd& m, double tol_rel) {
    if (m.cols() == 0 || m.rows() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) return 0;
    const double cutoff = tol_rel * sv(0);
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff) ++r;
    return r;
}

Frame make_frame(const Eigen::VectorXd& base, const Eigen::MatrixXd& vectors, double tol_rel) {
    if (vectors.cols() > 0 && vectors.rows() != base.size())
        throw DimensionMismatchError("frame vectors must match base-point dimension");
    Frame f;
    f.base = base;
    f.vectors = vectors.cols() > 0 ? vectors : Eigen::MatrixXd(base.size(), 0);
    f.tol_rel = tol_rel;
    f.rank = numeric_rank(f.vectors, tol_rel);
    return f;
}

namespace {

void check_compatible(const Frame& a, const Frame& b) {
    if (a.ambient_dim() != b.ambient_dim())
        throw DimensionMismatchError("frames live in different ambient dimensions");
    if (a.base != b.base)
        throw DimensionMismatchError("frames anchored at different base points");
}

}  // namespace

Frame orthonormalized(const Frame& f) {
    if (f.count() == 0 || f.rank == 0)
        return make_frame(f.base, Eigen::MatrixXd(f.ambient_dim(), 0), f.tol_rel);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(f.vectors, Eigen::ComputeThinU);
    return make_frame(f.base, svd.matrixU().leftCols(f.rank), f.tol_rel);
}

Eigen::MatrixXd projector(const Frame& f) {
    const int n = f.ambient_dim();
    if (f.rank == 0) return Eigen::MatrixXd::Zero(n, n);
    Frame q = orthonormalized(f);
    return q.vectors * q.vectors.transpose();
}

Frame subspace_sum(const Frame& a, const Frame& b) {
    check_compatible(a, b);
    Eigen::MatrixXd joined(a.ambient_dim(), a.count() + b.count());
    joined << a.vectors, b.vectors;
    return orthonormalized(make_frame(a.base, joined, a.tol_rel));
}

Frame annihilator(const Frame& f) {
    const int n = f.ambient_dim();
    if (f.rank == 0) return make_frame(f.base, Eigen::MatrixXd::Identity(n, n), f.tol_rel);
    if (f.rank == n) return make_frame(f.base, Eigen::MatrixXd(n, 0), f.tol_rel);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(f.vectors, Eigen::ComputeFullU);
    return make_frame(f.base, svd.matrixU().rightCols(n - f.rank), f.tol_rel);
}

Frame subspace_intersect(const Frame& a, const Frame& b) {
    check_compatible(a, b);
    return annihilator(subspace_sum(annihilator(a), annihilator(b)));
}

bool is_direct_sum(const Frame& a, const Frame& b) {
    return subspace_sum(a, b).rank == a.rank + b.rank;
}

Eigen::VectorXd VectorField::eval(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(comps.size());
    std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (std::size_t i = 0; i < comps.size(); ++i) out(static_cast<int>(i)) = comps[i].eval(xs);
    return out;
}

VectorField VectorField::simplified() const {
    VectorField out{vars, {}};
    out.comps.reserve(comps.size());
    for (const auto& c : comps) out.comps.push_back(c.simplified());
    return out;
}

VectorField VectorField::constant(const VarTable& vars, const Eigen::VectorXd& value) {
    VectorField out{vars, {}};
    out.comps.reserve(static_cast<std::size_t>(value.size()));
    for (int i = 0; i < value.size(); ++i) out.comps.push_back(Expr::constant(value(i)));
    return out;
}

Expr lie_derivative(const Expr& lambda, const VectorField& v) {
    Expr acc = Expr::constant(0.0);
    for (std::size_t i = 0; i < v.comps.size(); ++i) acc = acc + lambda.diff(i) * v.comps[i];
    return acc.simplified();
}

VectorField lie_bracket(const VectorField& a, const VectorField& b) {
    if (!(a.vars == b.vars) || a.dim() != b.dim())
        throw DimensionMismatchError("lie_bracket requires fields over the same variables");
    const std::size_t n = a.comps.size();
    VectorField out{a.vars, {}};
    out.comps.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        // [a,b]_i = sum_j db_i/dx_j a_j - da_i/dx_j b_j
        Expr acc = Expr::constant(0.0);
        for (std::size_t j = 0; j < n; ++j)
            acc = acc + b.comps[i].diff(j) * a.comps[j] - a.comps[i].diff(j) * b.comps[j];
        out.comps.push_back(acc.simplified());
    }
    return out;
}

std::vector<VectorField> ad_iterates(const VectorField& f, const VectorField& g, int k) {
    if (k < 0) throw DimensionMismatchError("ad_iterates requires k >= 0");
    std::vector<VectorField> out;
    out.reserve(static_cast<std::size_t>(k) + 1);
    out.push_back(g.simplified());
    for (int j = 1; j <= k; ++j) out.push_back(lie_bracket(f, out.back()));
    return out;
}

Frame Distribution::eval(const Eigen::VectorXd& x, double tol_rel) const {
    Eigen::MatrixXd cols(x.size(), static_cast<int>(gens.size()));
    for (std::size_t i = 0; i < gens.size(); ++i) cols.col(static_cast<int>(i)) = gens[i].eval(x);
    return make_frame(x, cols, tol_rel);
}

Distribution build_G(const VectorField& f, const VectorField& g, int i) {
    Distribution d{f.vars, {}};
    if (i < 0) return d;
    d.gens = ad_iterates(f, g, i);
    return d;
}

Frame output_kernel_W(const VarTable& vars, const std::vector<Expr>& h, const Eigen::VectorXd& x,
                      double tol_rel) {
    const int n = static_cast<int>(vars.size());
    const int p = static_cast<int>(h.size());
    Eigen::MatrixXd dh(p, n);
    std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < n; ++j)
            dh(i, j) = h[static_cast<std::size_t>(i)].diff(static_cast<std::size_t>(j)).eval(xs);
    if (numeric_rank(dh, tol_rel) < p)
        throw RankDropError("Dh has rank below p at the requested point");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(dh, Eigen::ComputeFullV);
    return make_frame(x, svd.matrixV().rightCols(n - p), tol_rel);
}

KernelFields output_kernel_fields(const VarTable& vars, const std::vector<Expr>& h,
                                  const Eigen::VectorXd& x0, double tol_rel) {
    const int n = static_cast<int>(vars.size());
    const int p = static_cast<int>(h.size());

    // Symbolic Jacobian entries.
    std::vector<std::vector<Expr>> dh(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) {
        dh[static_cast<std::size_t>(i)].reserve(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j)
            dh[static_cast<std::size_t>(i)].push_back(
                h[static_cast<std::size_t>(i)].diff(static_cast<std::size_t>(j)));
    }

    auto entry_is = [&](int i, int j, double v) {
        auto c = dh[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].constant_value();
        return c.has_value() && *c == v;
    };

    KernelFields out;

    // Constant Jacobian: the kernel at x0 is the kernel everywhere, so the
    // orthonormal numeric basis is an exact set of constant generators.
    bool all_constant = true;
    for (int i = 0; i < p && all_constant; ++i)
        for (int j = 0; j < n && all_constant; ++j)
            all_constant = dh[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                               .constant_value()
                               .has_value();
    if (all_constant) {
        const Frame ker = output_kernel_W(vars, h, x0, tol_rel);
        for (int c = 0; c < ker.count(); ++c)
            out.fields.push_back(VectorField::constant(vars, ker.vectors.col(c)));
        return out;
    }

    // Look for a p x p identity block: for each row a pivot column holding the
    // constant 1 with constant 0 in every other row.
    std::vector<int> pivot(static_cast<std::size_t>(p), -1);
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    bool have_block = true;
    for (int i = 0; i < p && have_block; ++i) {
        for (int j = 0; j < n; ++j) {
            if (used[static_cast<std::size_t>(j)] || !entry_is(i, j, 1.0)) continue;
            bool clean = true;
            for (int k = 0; k < p; ++k)
                if (k != i && !entry_is(k, j, 0.0)) clean = false;
            if (clean) {
                pivot[static_cast<std::size_t>(i)] = j;
                used[static_cast<std::size_t>(j)] = true;
                break;
            }
        }
        have_block = pivot[static_cast<std::size_t>(i)] >= 0;
    }

    if (have_block) {
        // Kernel generator for each non-pivot column j: e_j - sum_i dh[i][j] e_{pivot_i}.
        for (int j = 0; j < n; ++j) {
            if (used[static_cast<std::size_t>(j)]) continue;
            VectorField w{vars, std::vector<Expr>(static_cast<std::size_t>(n), Expr::constant(0.0))};
            w.comps[static_cast<std::size_t>(j)] = Expr::constant(1.0);
            for (int i = 0; i < p; ++i) {
                const int pj = pivot[static_cast<std::size_t>(i)];
                w.comps[static_cast<std::size_t>(pj)] =
                    w.comps[static_cast<std::size_t>(pj)] -
                    dh[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            }
            out.fields.push_back(w.simplified());
        }
        return out;
    }

    out.frozen_fallback = true;
    const Frame frozen = output_kernel_W(vars, h, x0, tol_rel);
    for (int c = 0; c < frozen.count(); ++c)
        out.fields.push_back(VectorField::constant(vars, frozen.vectors.col(c)));
    return out;
}

nlohmann::json ClosureReport::to_json() const {
    return nlohmann::json{{"sweeps", sweeps},
                          {"converged", converged},
                          {"regular", regular},
                          {"frozen_w_fallback", frozen_w_fallback},
                          {"rank_history", rank_history},
                          {"final_ranks", final_ranks}};
}

namespace {

std::vector<int> ranks_at_samples(const std::vector<VectorField>& gens,
                                  const std::vector<Eigen::VectorXd>& region, double tol_rel) {
    std::vector<int> out;
    out.reserve(region.size());
    for (const auto& x : region) {
        Eigen::MatrixXd cols(x.size(), static_cast<int>(gens.size()));
        for (std::size_t i = 0; i < gens.size(); ++i)
            cols.col(static_cast<int>(i)) = gens[i].eval(x);
        out.push_back(numeric_rank(cols, tol_rel));
    }
    return out;
}

// Does w leave the span of `cols` at any sample? Tested via rank growth.
bool adds_direction(const std::vector<VectorField>& gens, const VectorField& candidate,
                    const std::vector<Eigen::VectorXd>& region, double tol_rel) {
    for (const auto& x : region) {
        Eigen::MatrixXd cols(x.size(), static_cast<int>(gens.size()) + 1);
        for (std::size_t i = 0; i < gens.size(); ++i)
            cols.col(static_cast<int>(i)) = gens[i].eval(x);
        cols.col(static_cast<int>(gens.size())) = candidate.eval(x);
        Eigen::MatrixXd without = cols.leftCols(static_cast<int>(gens.size()));
        if (numeric_rank(cols, tol_rel) > numeric_rank(without, tol_rel)) return true;
    }
    return false;
}

}  // namespace

std::pair<Distribution, ClosureReport> involutive_closure(
    const Distribution& d, const std::vector<VectorField>& extra,
    const std::vector<Eigen::VectorXd>& region, double tol_rel) {
    if (region.empty()) throw PreconditionError("involutive_closure needs a nonempty sample region");

    Distribution cur = d;
    for (const auto& w : extra) cur.gens.push_back(w.simplified());

    const int n = region.front().size();
    const int max_sweeps = 2 * (n + 1);

    ClosureReport rep;
    std::vector<int> ranks = ranks_at_samples(cur.gens, region, tol_rel);
    rep.rank_history.push_back(ranks);

    bool still_growing = false;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        const std::size_t count_before = cur.gens.size();
        bool grew = false;
        for (std::size_t i = 0; i < count_before; ++i) {
            for (std::size_t j = i + 1; j < count_before; ++j) {
                VectorField br = lie_bracket(cur.gens[i], cur.gens[j]);
                if (adds_direction(cur.gens, br, region, tol_rel)) {
                    cur.gens.push_back(br);
                    grew = true;
                }
            }
        }
        rep.sweeps = sweep + 1;
        ranks = ranks_at_samples(cur.gens, region, tol_rel);
        rep.rank_history.push_back(ranks);
        const bool saturated = std::all_of(ranks.begin(), ranks.end(), [n](int r) { return r == n; });
        still_growing = grew && !saturated;
        if (!still_growing) break;
    }
    // Hitting the sweep cap with rank still growing is reported, not thrown.
    rep.converged = !still_growing;

    rep.final_ranks = ranks;
    rep.regular = std::all_of(ranks.begin(), ranks.end(),
                              [&](int r) { return r == ranks.front(); });
    return {cur, rep};
}

}  // namespace tflpi
