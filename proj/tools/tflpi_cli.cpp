// Command-line front end: load a system definition, run the solvability and
// construction pipeline, and emit JSON reports / CSV trajectories.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "tflpi/charts.hpp"
#include "tflpi/ltflpi.hpp"
#include "tflpi/sim.hpp"
#include "tflpi/sysmodel.hpp"

namespace {

using nlohmann::json;
using namespace tflpi;

constexpr int kExitPositive = 0;   // command succeeded, verdict positive
constexpr int kExitNegative = 1;   // command ran, verdict negative
constexpr int kExitUsage = 2;      // input or usage error
constexpr int kExitNumerical = 3;  // NoConvergence / Blowup

struct CommonOpts {
    std::string json_path;
    bool no_meta = false;
    SampleConfig cfg;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--json", opts.json_path, "write the JSON report to this path");
    cmd->add_flag("--no-meta", opts.no_meta, "omit the meta block (timestamps) from JSON");
    cmd->add_option("--tol-rank", opts.cfg.tol_rank, "relative rank tolerance");
    cmd->add_option("--tol-zero", opts.cfg.tol_zero, "vanishing threshold");
    cmd->add_option("--samples", opts.cfg.count, "sample count for set/ball sampling");
    cmd->add_option("--radius", opts.cfg.radius, "sampling radius");
}

void emit(const CommonOpts& opts, json report) {
    report["schema"] = 1;
    if (!opts.no_meta) {
        report["meta"] = {{"tool", "tflpi"}, {"version", "0.1.0"},
                          {"timestamp", static_cast<long>(std::time(nullptr))}};
    }
    const std::string text = report.dump(2) + "\n";
    if (!opts.json_path.empty()) {
        std::ofstream out(opts.json_path);
        if (!out) throw Error("cannot write JSON report to '" + opts.json_path + "'");
        out << text;
    } else {
        std::cout << text;
    }
}

std::vector<double> parse_csv_doubles(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

Expr require_lambda(const SystemBundle& bundle, const std::string& flag_text) {
    if (!flag_text.empty()) return parse_output_function(flag_text, bundle.sys);
    if (bundle.lambda) return *bundle.lambda;
    throw Error("no candidate output: pass --lambda or add a [lambda] section to the file");
}

int run_validate(const std::string& path, const CommonOpts& opts) {
    const SystemBundle bundle = load_system_file(path);
    const ValidationReport rep = validate(bundle.sys, bundle.target, opts.cfg);
    emit(opts, {{"command", "validate"}, {"input", path}, {"verdict", rep.pass},
                {"report", rep.to_json()}});
    return rep.pass ? kExitPositive : kExitNegative;
}

int run_check_ltflpi(const std::string& path, const CommonOpts& opts) {
    const SystemBundle bundle = load_system_file(path);
    const LtflpiOutcome outcome = check_ltflpi(bundle.sys, bundle.target, opts.cfg);
    emit(opts, {{"command", "check_ltflpi"},
                {"input", path},
                {"verdict", outcome.report.solvable},
                {"report", outcome.report.to_json()},
                {"tolerances", {{"tol_rank", opts.cfg.tol_rank}, {"tol_zero", opts.cfg.tol_zero}}}});
    return outcome.report.solvable ? kExitPositive : kExitNegative;
}

int run_check_gtflpi(const std::string& path, int grid_count, bool cylinder,
                     const CommonOpts& opts) {
    const SystemBundle bundle = load_system_file(path);
    const auto grid = sample_on_set(bundle.target, opts.cfg.radius, grid_count);
    const GtflpiReport rep =
        check_gtflpi(bundle.sys, bundle.target, grid, cylinder, opts.cfg);
    emit(opts, {{"command", "check_gtflpi"},
                {"input", path},
                {"verdict", rep.sufficient_hold},
                {"grid_points", grid_count},
                {"report", rep.to_json()}});
    return rep.sufficient_hold ? kExitPositive : kExitNegative;
}

int run_reldeg(const std::string& path, const std::string& lambda_text, const CommonOpts& opts) {
    const SystemBundle bundle = load_system_file(path);
    const Expr lambda = require_lambda(bundle, lambda_text);
    const ControlSystem& sys = bundle.sys;
    const TargetSet& tset = bundle.target;

    const auto ball = halton_ball(tset.x0, opts.cfg.radius, opts.cfg.count);
    const RelDegReport rd = relative_degree(lambda, sys, tset.x0, sys.n(), ball,
                                            opts.cfg.tol_zero, kNonzeroTol);

    json report{{"command", "reldeg"}, {"input", path}, {"lambda", lambda.str(sys.vars)},
                {"relative_degree", rd.to_json()}};
    bool verdict = rd.well_defined && rd.r == sys.n() - tset.nstar;

    if (rd.well_defined) {
        const auto set_samples = sample_on_set(tset, opts.cfg.radius, opts.cfg.count);
        const ZeroDynReport zd =
            zero_dynamics_coincidence(lambda, rd.r, sys, tset, set_samples, opts.cfg.tol_zero);
        const ObsFactorReport obs =
            observability_factorization(lambda, sys, set_samples, opts.cfg.tol_zero);
        report["zero_dynamics"] = zd.to_json();
        report["observability"] = obs.to_json();
        verdict = verdict && zd.coincide && obs.observable;
    }
    report["verdict"] = verdict;
    emit(opts, report);
    return verdict ? kExitPositive : kExitNegative;
}

int run_construct(const std::string& path, const CommonOpts& opts) {
    const SystemBundle bundle = load_system_file(path);
    try {
        const ChartResult result =
            construct_chart(bundle.sys, bundle.target, opts.cfg, opts.cfg.radius);
        emit(opts, {{"command", "construct"},
                    {"input", path},
                    {"verdict", result.verification.pass},
                    {"report", result.to_json()}});
        return result.verification.pass ? kExitPositive : kExitNegative;
    } catch (const PreconditionError& e) {
        // not solvable: the question was answered, negatively
        emit(opts, {{"command", "construct"},
                    {"input", path},
                    {"verdict", false},
                    {"error", e.what()},
                    {"ltflpi", check_ltflpi(bundle.sys, bundle.target, opts.cfg).report.to_json()}});
        std::cerr << e.what() << "\n";
        return kExitNegative;
    }
}

int run_normalform(const std::string& path, const std::string& lambda_text,
                   const CommonOpts& opts) {
    const SystemBundle bundle = load_system_file(path);
    const Expr lambda = require_lambda(bundle, lambda_text);
    try {
        const NormalForm nf = normal_form(lambda, bundle.sys, bundle.target, opts.cfg);
        emit(opts, {{"command", "normalform"},
                    {"input", path},
                    {"verdict", true},
                    {"lambda", lambda.str(bundle.sys.vars)},
                    {"report", nf.to_json(bundle.sys.vars)}});
        return kExitPositive;
    } catch (const PreconditionError& e) {
        emit(opts, {{"command", "normalform"}, {"input", path}, {"verdict", false},
                    {"error", e.what()}});
        std::cerr << e.what() << "\n";
        return kExitNegative;
    }
}

int run_simulate(const std::string& path, const std::string& lambda_text,
                 std::optional<double> eps, double T, std::optional<double> sat,
                 const std::string& out_path, const std::string& xinit_text, double stride,
                 const CommonOpts& opts) {
    const SystemBundle bundle = load_system_file(path);
    const ControlSystem& sys = bundle.sys;
    const TargetSet& tset = bundle.target;
    const Expr lambda = require_lambda(bundle, lambda_text);

    const NormalForm nf = normal_form(lambda, sys, tset, opts.cfg);

    ObserverConfig obs;
    obs.r = nf.r;
    if (!bundle.sim.phi0) throw Error("the [observer] section must provide phi0");
    obs.phi0 = *bundle.sim.phi0;
    if (bundle.sim.alpha.empty()) throw Error("the [observer] section must provide alpha");
    obs.alpha = Eigen::Map<const Eigen::VectorXd>(bundle.sim.alpha.data(),
                                                  static_cast<int>(bundle.sim.alpha.size()));
    if (bundle.sim.k.empty()) throw Error("the [controller] section must provide k");
    obs.k = Eigen::Map<const Eigen::VectorXd>(bundle.sim.k.data(),
                                              static_cast<int>(bundle.sim.k.size()));
    obs.eps = eps ? *eps : bundle.sim.eps.value_or(0.01);
    obs.sat = sat ? *sat : bundle.sim.sat.value_or(20.0);

    Eigen::VectorXd x_init = tset.x0;
    if (!xinit_text.empty()) {
        const auto vals = parse_csv_doubles(xinit_text);
        if (static_cast<int>(vals.size()) != sys.n())
            throw Error("--xinit needs exactly n comma-separated values");
        x_init = Eigen::Map<const Eigen::VectorXd>(vals.data(), sys.n());
    }
    const Eigen::VectorXd xi0 = Eigen::VectorXd::Zero(nf.r);

    const Trajectory traj =
        simulate_closed_loop(sys, tset, nf.xi_chain, obs, x_init, xi0, T, stride);

    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw Error("cannot write trajectory CSV to '" + out_path + "'");
        traj.write_csv(out);
    }
    emit(opts, {{"command", "simulate"},
                {"input", path},
                {"verdict", !traj.blowup},
                {"observer", {{"eps", obs.eps}, {"sat", obs.sat}, {"r", obs.r}}},
                {"report", traj.summary_json()}});
    if (traj.blowup) {
        std::cerr << "trajectory truncated: " << traj.blowup_reason << "\n";
        return kExitNumerical;
    }
    return kExitPositive;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"transverse feedback linearization with partial information"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string path, lambda_text, out_path, xinit_text;
    double T = 20.0, stride = 0.01;
    std::optional<double> eps, sat;
    int grid_count = 24;
    bool cylinder = false;

    auto* validate_cmd = app.add_subcommand("validate", "regularity checks on a system file");
    validate_cmd->add_option("file", path)->required();
    add_common(validate_cmd, opts);

    auto* check_cmd = app.add_subcommand("check", "solvability checks");
    check_cmd->require_subcommand(1);
    auto* ltflpi_cmd = check_cmd->add_subcommand("ltflpi", "local observable-transverse-output solvability");
    ltflpi_cmd->add_option("file", path)->required();
    add_common(ltflpi_cmd, opts);
    auto* gtflpi_cmd = check_cmd->add_subcommand("gtflpi", "global sufficient conditions");
    gtflpi_cmd->add_option("file", path)->required();
    gtflpi_cmd->add_option("--grid", grid_count, "number of grid points on the target set");
    gtflpi_cmd->add_flag("--assume-cylinder", cylinder,
                         "attest that the target set is a generalized cylinder");
    add_common(gtflpi_cmd, opts);

    auto* reldeg_cmd = app.add_subcommand("reldeg", "relative degree / transverse-output battery");
    reldeg_cmd->add_option("file", path)->required();
    reldeg_cmd->add_option("--lambda", lambda_text, "candidate output expression");
    add_common(reldeg_cmd, opts);

    auto* construct_cmd = app.add_subcommand("construct", "build and verify the flow chart");
    construct_cmd->add_option("file", path)->required();
    add_common(construct_cmd, opts);

    auto* normal_cmd = app.add_subcommand("normalform", "symbolic chain, a1 and a2");
    normal_cmd->add_option("file", path)->required();
    normal_cmd->add_option("--lambda", lambda_text, "candidate output expression");
    add_common(normal_cmd, opts);

    auto* sim_cmd = app.add_subcommand("simulate", "closed-loop output-feedback simulation");
    sim_cmd->add_option("file", path)->required();
    sim_cmd->add_option("--lambda", lambda_text, "candidate output expression");
    sim_cmd->add_option("--eps", eps, "high-gain parameter");
    sim_cmd->add_option("--T", T, "horizon");
    sim_cmd->add_option("--sat", sat, "input saturation bound");
    sim_cmd->add_option("--out", out_path, "trajectory CSV path");
    sim_cmd->add_option("--xinit", xinit_text, "comma-separated initial state");
    sim_cmd->add_option("--stride", stride, "output stride");
    add_common(sim_cmd, opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitPositive : kExitUsage;
    }

    try {
        if (*validate_cmd) return run_validate(path, opts);
        if (*ltflpi_cmd) return run_check_ltflpi(path, opts);
        if (*gtflpi_cmd) return run_check_gtflpi(path, grid_count, cylinder, opts);
        if (*reldeg_cmd) return run_reldeg(path, lambda_text, opts);
        if (*construct_cmd) return run_construct(path, opts);
        if (*normal_cmd) return run_normalform(path, lambda_text, opts);
        if (*sim_cmd)
            return run_simulate(path, lambda_text, eps, T, sat, out_path, xinit_text, stride, opts);
    } catch (const NoConvergenceError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const IntegratorBlowupError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const PreconditionError& e) {
        std::cerr << e.what() << "\n";
        return kExitNegative;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
