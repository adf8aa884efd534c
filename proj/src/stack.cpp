#include "pcix/stack.hpp"

#include <cmath>

#include "pcix/stats.hpp"

namespace pcix {

IncidenceEstimate finish_estimate(const StackedEstimator& est, double level,
                                  const SolveOptions& opts) {
  SolveOptions local = opts;
  const double p_probe = est.init[est.p_index];
  const bool probe_valid = p_probe > 0.0 && p_probe < 1.0;
  // the cascade already solves the system; the full Newton is a polish
  local.compute_sandwich = probe_valid;
  SolvedSystem sol = solve(est.system, est.init, local);
  const double p = sol.theta[est.p_index];

  double se_theta = std::numeric_limits<double>::quiet_NaN();
  if (p > 0.0 && p < 1.0 && probe_valid) {
    const int k = est.p_index;
    DeltaResult d = delta_method(
        sol, [k](const Eigen::VectorXd& th) { return cloglog(th[k]); },
        [k](const Eigen::VectorXd& th) {
          Eigen::VectorXd g = Eigen::VectorXd::Zero(th.size());
          g[k] = cloglog_deriv(th[k]);
          return g;
        });
    se_theta = d.se;
  }
  IncidenceEstimate out = make_incidence_estimate(est.method, est.t, p,
                                                  se_theta, est.n0, est.n1,
                                                  level);
  out.diagnostics = est.diagnostics;
  out.diagnostics["solver_iterations"] = sol.iterations;
  out.diagnostics["moment_norm"] = sol.resid_norm;
  return out;
}

}  // namespace pcix
