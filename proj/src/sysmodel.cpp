#include "tflpi/sysmodel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "tflpi/errors.hpp"

namespace tflpi {

namespace {

Eigen::MatrixXd symbolic_jacobian_eval(const std::vector<Expr>& rows, const Eigen::VectorXd& x) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd J(static_cast<int>(rows.size()), n);
    std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < n; ++j)
            J(static_cast<int>(i), j) = rows[i].diff(static_cast<std::size_t>(j)).eval(xs);
    return J;
}

}  // namespace

Eigen::MatrixXd ControlSystem::output_jacobian(const Eigen::VectorXd& x) const {
    return symbolic_jacobian_eval(h, x);
}

Eigen::VectorXd TargetSet::gamma_eval(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(codim());
    std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (int i = 0; i < codim(); ++i) out(i) = gamma[static_cast<std::size_t>(i)].eval(xs);
    return out;
}

Eigen::MatrixXd TargetSet::gamma_jacobian(const Eigen::VectorXd& x) const {
    return symbolic_jacobian_eval(gamma, x);
}

// ---------------------------------------------------------------------------
// system-definition loader
// ---------------------------------------------------------------------------

namespace {

struct Section {
    std::string name;
    std::string inline_text;  // text after the closing bracket
    int line_no = 0;
    std::vector<std::pair<int, std::string>> body;  // (line number, text)
};

std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<Section> split_sections(const std::string& text) {
    std::vector<Section> sections;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        std::string line = strip(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            auto close = line.find(']');
            if (close == std::string::npos) throw FormatError(line_no, "unterminated section header");
            Section s;
            s.name = strip(line.substr(1, close - 1));
            s.inline_text = strip(line.substr(close + 1));
            s.line_no = line_no;
            sections.push_back(std::move(s));
        } else {
            if (sections.empty()) throw FormatError(line_no, "content before the first section");
            sections.back().body.emplace_back(line_no, line);
        }
    }
    return sections;
}

std::vector<std::string> tokens_of(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

std::vector<Expr> parse_expr_lines(const Section& s, const VarTable& vars) {
    std::vector<Expr> out;
    if (!s.inline_text.empty()) {
        try {
            out.push_back(parse_expr(s.inline_text, vars));
        } catch (const Error& e) {
            throw FormatError(s.line_no, std::string("in [") + s.name + "]: " + e.what());
        }
    }
    for (const auto& [ln, text] : s.body) {
        try {
            out.push_back(parse_expr(text, vars));
        } catch (const Error& e) {
            throw FormatError(ln, std::string("in [") + s.name + "]: " + e.what());
        }
    }
    return out;
}

std::vector<double> parse_number_list(const Section& s) {
    std::vector<double> out;
    auto eat = [&](const std::string& text, int ln) {
        for (const auto& tok : tokens_of(text)) {
            try {
                std::size_t used = 0;
                out.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw FormatError(ln, "expected a number, got '" + tok + "'");
            }
        }
    };
    eat(s.inline_text, s.line_no);
    for (const auto& [ln, text] : s.body) eat(text, ln);
    return out;
}

std::string joined_text(const Section& s) {
    std::string text = s.inline_text;
    for (const auto& [ln, body] : s.body) {
        if (!text.empty()) text += ' ';
        text += body;
    }
    return text;
}

VarTable xi_table(int r) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(r));
    for (int i = 1; i <= r; ++i) names.push_back("xi" + std::to_string(i));
    return VarTable(names);
}

void parse_settings_section(const Section& s, SimSettings& out, const VarTable& xi_vars) {
    for (const auto& [ln, text] : s.body) {
        std::istringstream in(text);
        std::string key;
        in >> key;
        std::string rest;
        std::getline(in, rest);
        rest = strip(rest);
        try {
            if (key == "eps") {
                out.eps = std::stod(rest);
            } else if (key == "sat") {
                out.sat = std::stod(rest);
            } else if (key == "alpha") {
                out.alpha.clear();
                for (const auto& tok : tokens_of(rest)) out.alpha.push_back(std::stod(tok));
            } else if (key == "k") {
                out.k.clear();
                for (const auto& tok : tokens_of(rest)) out.k.push_back(std::stod(tok));
            } else if (key == "phi0") {
                out.phi0 = parse_expr(rest, xi_vars);
            } else {
                throw FormatError(ln, "unknown key '" + key + "' in [" + s.name + "]");
            }
        } catch (const FormatError&) {
            throw;
        } catch (const std::exception& e) {
            throw FormatError(ln, "bad value for '" + key + "': " + e.what());
        }
    }
}

}  // namespace

SystemBundle load_system(const std::string& file_text) {
    const std::vector<Section> sections = split_sections(file_text);

    const Section* vars_sec = nullptr;
    for (const auto& s : sections)
        if (s.name == "vars") vars_sec = &s;
    if (!vars_sec) throw FormatError(0, "missing [vars] section");

    std::vector<std::string> names = tokens_of(vars_sec->inline_text);
    for (const auto& [ln, text] : vars_sec->body)
        for (const auto& tok : tokens_of(text)) names.push_back(tok);
    if (names.empty()) throw FormatError(vars_sec->line_no, "[vars] declares no variables");
    VarTable vars(names);
    const int n = static_cast<int>(vars.size());

    SystemBundle bundle;
    bundle.sys.vars = vars;
    std::optional<int> nstar;
    std::optional<std::pair<std::string, int>> lambda_text;

    for (const auto& s : sections) {
        if (s.name == "vars") continue;
        if (s.name == "f") {
            bundle.sys.f = parse_expr_lines(s, vars);
        } else if (s.name == "g") {
            bundle.sys.g = parse_expr_lines(s, vars);
        } else if (s.name == "h") {
            bundle.sys.h = parse_expr_lines(s, vars);
        } else if (s.name == "gamma") {
            bundle.target.gamma = parse_expr_lines(s, vars);
        } else if (s.name == "nstar") {
            auto vals = parse_number_list(s);
            if (vals.size() != 1 || vals[0] != std::floor(vals[0]))
                throw FormatError(s.line_no, "[nstar] expects a single integer");
            nstar = static_cast<int>(vals[0]);
        } else if (s.name == "x0") {
            auto vals = parse_number_list(s);
            bundle.target.x0 = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<int>(vals.size()));
        } else if (s.name == "lambda") {
            lambda_text = {joined_text(s), s.line_no};
        } else if (s.name == "observer" || s.name == "controller") {
            // handled after nstar is known (phi0 needs the chain length)
        } else {
            throw FormatError(s.line_no, "unknown section [" + s.name + "]");
        }
    }

    if (bundle.sys.f.size() != static_cast<std::size_t>(n))
        throw FormatError(0, "[f] must list exactly n = " + std::to_string(n) + " expressions, got " +
                                 std::to_string(bundle.sys.f.size()));
    if (bundle.sys.g.size() != static_cast<std::size_t>(n))
        throw FormatError(0, "[g] must list exactly n = " + std::to_string(n) + " expressions, got " +
                                 std::to_string(bundle.sys.g.size()));
    if (bundle.sys.h.empty()) throw FormatError(0, "missing or empty [h] section");
    if (bundle.sys.p() > n) throw FormatError(0, "output dimension p exceeds n");
    if (!nstar) throw FormatError(0, "missing [nstar] section");
    bundle.target.nstar = *nstar;
    if (*nstar <= 0 || *nstar >= n)
        throw FormatError(0, "[nstar] must satisfy 0 < nstar < n");
    if (bundle.target.gamma.size() != static_cast<std::size_t>(n - *nstar))
        throw FormatError(0, "[gamma] must list n - nstar = " + std::to_string(n - *nstar) +
                                 " expressions, got " + std::to_string(bundle.target.gamma.size()));
    if (bundle.target.x0.size() != n)
        throw FormatError(0, "[x0] must list n = " + std::to_string(n) + " numbers");

    if (lambda_text) {
        try {
            bundle.lambda = parse_output_function(lambda_text->first, bundle.sys);
        } catch (const Error& e) {
            throw FormatError(lambda_text->second, std::string("in [lambda]: ") + e.what());
        }
    }

    const VarTable xis = xi_table(n - *nstar);
    for (const auto& s : sections)
        if (s.name == "observer" || s.name == "controller")
            parse_settings_section(s, bundle.sim, xis);

    return bundle;
}

SystemBundle load_system_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open system file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_system(buf.str());
}

Expr parse_output_function(const std::string& text, const ControlSystem& sys) {
    try {
        return parse_expr(text, sys.vars);
    } catch (const UnknownVariableError&) {
        std::vector<std::string> ynames;
        for (int i = 1; i <= sys.p(); ++i) ynames.push_back("y" + std::to_string(i));
        Expr tilde = parse_expr(text, VarTable(ynames));
        return substitute(tilde, sys.h);
    }
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

namespace {

double radical_inverse(int base, int index) {
    double result = 0.0;
    double f = 1.0 / base;
    while (index > 0) {
        result += f * (index % base);
        index /= base;
        f /= base;
    }
    return result;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

// Halton offsets mapped to (-1,1)^d and scaled by radius/sqrt(d) so every
// offset lies inside the Euclidean radius ball.
std::vector<Eigen::VectorXd> halton_offsets(int dim, double radius, int count) {
    if (dim > static_cast<int>(std::size(kPrimes)))
        throw DimensionMismatchError("halton sampler supports at most 12 dimensions");
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(count));
    const double scale = dim > 0 ? radius / std::sqrt(static_cast<double>(dim)) : 0.0;
    for (int i = 1; i <= count; ++i) {
        Eigen::VectorXd v(dim);
        for (int d = 0; d < dim; ++d) v(d) = scale * (2.0 * radical_inverse(kPrimes[d], i) - 1.0);
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace

std::vector<Eigen::VectorXd> halton_ball(const Eigen::VectorXd& center, double radius, int count) {
    auto offsets = halton_offsets(static_cast<int>(center.size()), radius, count);
    for (auto& v : offsets) v += center;
    return offsets;
}

std::vector<Eigen::VectorXd> sample_on_set(const TargetSet& tset, double radius, int count) {
    Frame tangent = tangent_space(tset, tset.x0);
    const auto offsets = halton_offsets(tangent.rank, radius, count);
    std::vector<Eigen::VectorXd> out;
    out.reserve(offsets.size());
    for (const auto& s : offsets)
        out.push_back(project_to_set(tset, tset.x0 + tangent.vectors.leftCols(tangent.rank) * s));
    return out;
}

// ---------------------------------------------------------------------------
// geometry operations
// ---------------------------------------------------------------------------

Frame tangent_space(const TargetSet& tset, const Eigen::VectorXd& x, double tol_rel) {
    const Eigen::VectorXd residual = tset.gamma_eval(x);
    if (residual.lpNorm<Eigen::Infinity>() > 1e-7)
        throw NotOnSetError("point is not on the target set (|gamma| = " +
                            std::to_string(residual.lpNorm<Eigen::Infinity>()) + ")");
    const Eigen::MatrixXd J = tset.gamma_jacobian(x);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
    const int rank = numeric_rank(J, tol_rel);
    const int n = static_cast<int>(x.size());
    if (n - rank != tset.nstar)
        throw RankDropError("null space of Dgamma has dimension " + std::to_string(n - rank) +
                            ", expected " + std::to_string(tset.nstar));
    return make_frame(x, svd.matrixV().rightCols(tset.nstar), tol_rel);
}

double invariance_check(const VectorField& v, const TargetSet& tset,
                        const std::vector<Eigen::VectorXd>& samples) {
    double worst = 0.0;
    for (const auto& x : samples) {
        const Eigen::VectorXd residual = tset.gamma_eval(x);
        if (residual.lpNorm<Eigen::Infinity>() > 1e-7)
            throw NotOnSetError("invariance_check sample is off the target set");
        const Eigen::VectorXd pairing = tset.gamma_jacobian(x) * v.eval(x);
        worst = std::max(worst, pairing.lpNorm<Eigen::Infinity>());
    }
    return worst;
}

Eigen::VectorXd project_to_set(const TargetSet& tset, const Eigen::VectorXd& x_guess) {
    Eigen::VectorXd x = x_guess;
    for (int iter = 0; iter < 50; ++iter) {
        const Eigen::VectorXd residual = tset.gamma_eval(x);
        if (residual.lpNorm<Eigen::Infinity>() <= 1e-10) return x;
        const Eigen::MatrixXd J = tset.gamma_jacobian(x);
        // minimum-norm Gauss-Newton step keeps the point near the guess
        const Eigen::VectorXd step =
            J.completeOrthogonalDecomposition().solve(Eigen::VectorXd(-residual));
        x += step;
    }
    throw NoConvergenceError("project_to_set did not reach |gamma| <= 1e-10 in 50 iterations");
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

namespace {

double sigma_ratio(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) return 0.0;
    return sv(sv.size() - 1) / sv(0);
}

}  // namespace

ValidationReport validate(const ControlSystem& sys, const TargetSet& tset, const SampleConfig& cfg) {
    ValidationReport rep;
    const int n = sys.n();
    const int p = sys.p();

    auto push = [&rep](const std::string& name, double value, double threshold, bool pass) {
        rep.checks.push_back({name, value, threshold, pass});
    };

    push("output_dim_range", static_cast<double>(p), static_cast<double>(n), p >= 1 && p <= n);

    const int rank_x0 = numeric_rank(sys.output_jacobian(tset.x0), cfg.tol_rank);
    rep.dh_ranks.push_back(rank_x0);
    push("dh_rank_x0", static_cast<double>(rank_x0), static_cast<double>(p), rank_x0 == p);

    int min_ball_rank = rank_x0;
    for (const auto& x : halton_ball(tset.x0, 0.1, 32)) {
        const int r = numeric_rank(sys.output_jacobian(x), cfg.tol_rank);
        rep.dh_ranks.push_back(r);
        min_ball_rank = std::min(min_ball_rank, r);
    }
    push("dh_rank_ball", static_cast<double>(min_ball_rank), static_cast<double>(p),
         min_ball_rank == p);

    rep.gamma_residual_x0 = tset.gamma_eval(tset.x0).lpNorm<Eigen::Infinity>();
    push("gamma_vanishes_x0", rep.gamma_residual_x0, 1e-9, rep.gamma_residual_x0 <= 1e-9);

    const double ratio_x0 = sigma_ratio(tset.gamma_jacobian(tset.x0));
    const bool regular_x0 = ratio_x0 > cfg.tol_rank;
    push("dgamma_regular_x0", ratio_x0, cfg.tol_rank, regular_x0);

    rep.dgamma_sigma_ratio_min = ratio_x0;
    bool regular_set = regular_x0;
    if (regular_x0 && rep.gamma_residual_x0 <= 1e-7) {
        try {
            for (const auto& x : sample_on_set(tset, cfg.radius, cfg.count)) {
                const double r = sigma_ratio(tset.gamma_jacobian(x));
                rep.dgamma_sigma_ratio_min = std::min(rep.dgamma_sigma_ratio_min, r);
                regular_set = regular_set && r > cfg.tol_rank;
            }
        } catch (const Error&) {
            regular_set = false;
        }
    } else {
        regular_set = false;
    }
    push("dgamma_regular_set", rep.dgamma_sigma_ratio_min, cfg.tol_rank, regular_set);

    rep.pass = true;
    for (const auto& c : rep.checks) rep.pass = rep.pass && c.pass;
    return rep;
}

nlohmann::json ValidationReport::to_json() const {
    nlohmann::json checks_json = nlohmann::json::array();
    for (const auto& c : checks)
        checks_json.push_back({{"name", c.name},
                               {"value", c.value},
                               {"threshold", c.threshold},
                               {"pass", c.pass}});
    return nlohmann::json{{"checks", checks_json},
                          {"dh_ranks", dh_ranks},
                          {"gamma_residual_x0", gamma_residual_x0},
                          {"dgamma_sigma_ratio_min", dgamma_sigma_ratio_min},
                          {"pass", pass}};
}

}  // namespace tflpi
