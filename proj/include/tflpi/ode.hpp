#pragma once

#include <Eigen/Dense>
#include <functional>

namespace tflpi {

struct OdeOptions {
    double abs_tol = 1e-10;
    double rel_tol = 1e-8;
    double blowup_norm = 1e6;
    long max_steps = 1000000;
};

using OdeRhs = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& dxdt, double t)>;

// Adaptive Dormand-Prince integration of dx/dt = rhs from t0 to t1 (backwards
// when t1 < t0). Throws IntegratorBlowup on step underflow, step-count
// exhaustion, or when the state norm exceeds blowup_norm.
Eigen::VectorXd integrate_ode(const OdeRhs& rhs, Eigen::VectorXd x, double t0, double t1,
                              const OdeOptions& opts = {});

}  // namespace tflpi
