#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "tflpi/charts.hpp"
#include "tflpi/sysmodel.hpp"

namespace tflpi {

// High-gain observer and saturated control law for the transversal chain.
struct ObserverConfig {
    int r = 0;                  // transversal dimension n - nstar
    double eps = 0.01;          // high-gain parameter
    Eigen::VectorXd alpha;      // s^r + alpha_1 s^{r-1} + ... + alpha_r must be Hurwitz
    Eigen::VectorXd k;          // state-feedback gains, all positive
    Expr phi0;                  // nominal model of a2, over xi1..xir
    double sat = 20.0;          // input saturation bound

    // Throws PreconditionError when eps, k, sat, or the Hurwitz test fail.
    void validate() const;

    static VarTable xi_vars(int r);
};

struct Trajectory {
    std::vector<double> t;
    std::vector<Eigen::VectorXd> x;
    std::vector<Eigen::VectorXd> xi_hat;
    std::vector<double> u;
    std::vector<double> transverse_norm;  // |xi(x(t))|
    std::vector<double> gamma_norm;       // |gamma(x(t))|
    bool blowup = false;
    std::string blowup_reason;
    long sat_events = 0;  // control evaluations clipped by the saturation

    // CSV: t, x_1..x_n, xihat_1..xihat_r, u, xnorm_transverse, gamma_resid
    void write_csv(std::ostream& os) const;
    nlohmann::json summary_json() const;
};

// Closed loop of plant, high-gain observer, and saturated control law. The
// observer is fed the symbolic first chain coordinate xi_1(x) so chart
// inversion error cannot contaminate the control performance.
Trajectory simulate_closed_loop(const ControlSystem& sys, const TargetSet& tset,
                                const std::vector<Expr>& xi_chain, const ObserverConfig& obs,
                                const Eigen::VectorXd& x_init, const Eigen::VectorXd& xi_hat_init,
                                double T, double out_stride, const OdeOptions& opts = {});

}  // namespace tflpi
