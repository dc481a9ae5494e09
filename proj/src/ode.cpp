#include "tflpi/ode.hpp"

#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <vector>

#include "tflpi/errors.hpp"

namespace tflpi {

namespace odeint = boost::numeric::odeint;

Eigen::VectorXd integrate_ode(const OdeRhs& rhs, Eigen::VectorXd x, double t0, double t1,
                              const OdeOptions& opts) {
    if (t1 == t0) return x;

    using state_t = std::vector<double>;
    state_t state(x.data(), x.data() + x.size());
    Eigen::VectorXd dx(x.size());

    auto system = [&](const state_t& in, state_t& out, double t) {
        Eigen::Map<const Eigen::VectorXd> xin(in.data(), static_cast<Eigen::Index>(in.size()));
        rhs(xin, dx, t);
        Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) = dx;
    };

    long steps = 0;
    auto observer = [&](const state_t& st, double) {
        if (++steps > opts.max_steps)
            throw IntegratorBlowupError("step budget exhausted");
        double norm2 = 0.0;
        for (double v : st) {
            if (!std::isfinite(v)) throw IntegratorBlowupError("non-finite state");
            norm2 += v * v;
        }
        if (std::sqrt(norm2) > opts.blowup_norm)
            throw IntegratorBlowupError("state norm exceeded blowup threshold");
    };

    auto stepper =
        odeint::make_controlled<odeint::runge_kutta_dopri5<state_t>>(opts.abs_tol, opts.rel_tol);
    const double dt0 = (t1 - t0) / 100.0;
    try {
        odeint::integrate_adaptive(stepper, system, state, t0, t1, dt0, observer);
    } catch (const IntegratorBlowupError&) {
        throw;
    } catch (const std::overflow_error&) {
        // odeint's failed-step checker: the controlled step size underflowed
        throw IntegratorBlowupError("step size underflow");
    }
    return Eigen::Map<Eigen::VectorXd>(state.data(), static_cast<Eigen::Index>(state.size()));
}

}  // namespace tflpi
