#include "tflpi/sim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "tflpi/errors.hpp"

namespace tflpi {

VarTable ObserverConfig::xi_vars(int r) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(r));
    for (int i = 1; i <= r; ++i) names.push_back("xi" + std::to_string(i));
    return VarTable(names);
}

void ObserverConfig::validate() const {
    if (r < 1) throw PreconditionError("observer chain length r must be positive");
    if (eps <= 0.0) throw PreconditionError("high-gain parameter eps must be positive");
    if (sat <= 0.0) throw PreconditionError("saturation bound must be positive");
    if (alpha.size() != r) throw PreconditionError("observer needs r alpha coefficients");
    if (k.size() != r) throw PreconditionError("controller needs r gains");
    for (int i = 0; i < r; ++i)
        if (k(i) <= 0.0) throw PreconditionError("controller gains must be positive");

    // Hurwitz test on the companion matrix of s^r + alpha_1 s^{r-1} + ... + alpha_r.
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(r, r);
    for (int i = 0; i + 1 < r; ++i) companion(i, i + 1) = 1.0;
    for (int j = 0; j < r; ++j) companion(r - 1, j) = -alpha(r - 1 - j);
    const auto eigs = companion.eigenvalues();
    for (int i = 0; i < eigs.size(); ++i)
        if (eigs(i).real() >= -1e-9)
            throw PreconditionError("alpha polynomial is not Hurwitz");
}

namespace {

double control_law(const ObserverConfig& obs, const Eigen::VectorXd& xi_hat, long* sat_counter) {
    std::span<const double> xs(xi_hat.data(), static_cast<std::size_t>(xi_hat.size()));
    const double phi0_val = obs.phi0.eval(xs);
    const double raw = -obs.k.dot(xi_hat);
    double u;
    if (phi0_val == 0.0) {
        u = raw == 0.0 ? 0.0 : std::copysign(obs.sat, raw);
        if (sat_counter && u != 0.0) ++*sat_counter;
        return u;
    }
    u = raw / phi0_val;
    if (u > obs.sat || u < -obs.sat) {
        u = std::clamp(u, -obs.sat, obs.sat);
        if (sat_counter) ++*sat_counter;
    }
    return u;
}

}  // namespace

Trajectory simulate_closed_loop(const ControlSystem& sys, const TargetSet& tset,
                                const std::vector<Expr>& xi_chain, const ObserverConfig& obs,
                                const Eigen::VectorXd& x_init, const Eigen::VectorXd& xi_hat_init,
                                double T, double out_stride, const OdeOptions& opts) {
    obs.validate();
    const int n = sys.n();
    const int r = obs.r;
    if (static_cast<int>(xi_chain.size()) != r)
        throw PreconditionError("xi chain length must equal the observer dimension");
    if (x_init.size() != n || xi_hat_init.size() != r)
        throw DimensionMismatchError("initial conditions have wrong dimensions");
    if (T <= 0.0 || out_stride <= 0.0)
        throw PreconditionError("T and the output stride must be positive");

    const VectorField f = sys.drift();
    const VectorField g = sys.input_field();

    Eigen::VectorXd hgains(r);
    for (int i = 0; i < r; ++i) hgains(i) = obs.alpha(i) / std::pow(obs.eps, i + 1);

    Trajectory traj;

    auto rhs = [&](const Eigen::VectorXd& z, Eigen::VectorXd& dz, double) {
        const Eigen::VectorXd x = z.head(n);
        const Eigen::VectorXd xi_hat = z.tail(r);
        std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
        std::span<const double> xis(xi_hat.data(), static_cast<std::size_t>(xi_hat.size()));

        const double u = control_law(obs, xi_hat, &traj.sat_events);
        const double measured = xi_chain[0].eval(xs);
        const double innovation = measured - xi_hat(0);
        const double phi0_val = obs.phi0.eval(xis);

        dz.head(n) = f.eval(x) + g.eval(x) * u;
        for (int i = 0; i < r - 1; ++i) dz(n + i) = xi_hat(i + 1) + hgains(i) * innovation;
        dz(n + r - 1) = phi0_val * u + hgains(r - 1) * innovation;
    };

    auto record = [&](double t, const Eigen::VectorXd& z) {
        const Eigen::VectorXd x = z.head(n);
        const Eigen::VectorXd xi_hat = z.tail(r);
        std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
        traj.t.push_back(t);
        traj.x.push_back(x);
        traj.xi_hat.push_back(xi_hat);
        traj.u.push_back(control_law(obs, xi_hat, nullptr));
        double tn = 0.0;
        for (const auto& xi : xi_chain) {
            const double v = xi.eval(xs);
            tn += v * v;
        }
        traj.transverse_norm.push_back(std::sqrt(tn));
        traj.gamma_norm.push_back(tset.gamma_eval(x).norm());
    };

    Eigen::VectorXd z(n + r);
    z << x_init, xi_hat_init;
    record(0.0, z);

    double t = 0.0;
    while (t < T) {
        const double t_next = std::min(t + out_stride, T);
        try {
            z = integrate_ode(rhs, z, t, t_next, opts);
        } catch (const IntegratorBlowupError& e) {
            traj.blowup = true;
            traj.blowup_reason = e.what();
            return traj;
        }
        t = t_next;
        record(t, z);
    }
    return traj;
}

void Trajectory::write_csv(std::ostream& os) const {
    const int n = x.empty() ? 0 : static_cast<int>(x.front().size());
    const int r = xi_hat.empty() ? 0 : static_cast<int>(xi_hat.front().size());
    os << "t";
    for (int i = 1; i <= n; ++i) os << ",x_" << i;
    for (int i = 1; i <= r; ++i) os << ",xihat_" << i;
    os << ",u,xnorm_transverse,gamma_resid\n";
    os << std::setprecision(17);
    for (std::size_t row = 0; row < t.size(); ++row) {
        os << t[row];
        for (int i = 0; i < n; ++i) os << "," << x[row](i);
        for (int i = 0; i < r; ++i) os << "," << xi_hat[row](i);
        os << "," << u[row] << "," << transverse_norm[row] << "," << gamma_norm[row] << "\n";
    }
}

nlohmann::json Trajectory::summary_json() const {
    nlohmann::json out{{"steps", t.size()},
                       {"blowup", blowup},
                       {"blowup_reason", blowup_reason},
                       {"sat_events", sat_events}};
    if (!t.empty()) {
        out["t_final"] = t.back();
        out["transverse_norm_final"] = transverse_norm.back();
        out["gamma_resid_final"] = gamma_norm.back();
        double peak = 0.0;
        for (double v : transverse_norm) peak = std::max(peak, v);
        out["transverse_norm_peak"] = peak;
    }
    return out;
}

}  // namespace tflpi
