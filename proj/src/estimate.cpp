#include "pcix/estimate.hpp"

#include <cmath>

#include "pcix/inference.hpp"
#include "pcix/stats.hpp"

namespace pcix {

IncidenceEstimate make_incidence_estimate(std::string method, double t,
                                          double p, double se_theta,
                                          Eigen::Index n0, Eigen::Index n1,
                                          double level) {
  IncidenceEstimate e;
  e.method = std::move(method);
  e.t = t;
  e.estimate = p;
  e.level = level;
  e.n0 = n0;
  e.n1 = n1;
  e.valid = p > 0.0 && p < 1.0 && std::isfinite(se_theta);
  if (e.valid) {
    e.theta = cloglog(p);
    e.se_theta = se_theta;
    const Interval ci = cloglog_ci(p, se_theta, level);
    e.ci_lo = ci.lo;
    e.ci_hi = ci.hi;
  } else {
    e.theta = e.se_theta = e.ci_lo = e.ci_hi =
        std::numeric_limits<double>::quiet_NaN();
  }
  return e;
}

nlohmann::json IncidenceEstimate::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["t"] = t;
  j["estimate"] = estimate;
  j["valid"] = valid;
  if (valid) {
    j["cloglog"] = theta;
    j["se_cloglog"] = se_theta;
    j["ci_prob"] = {ci_lo, ci_hi};
  } else {
    j["cloglog"] = nullptr;
    j["se_cloglog"] = nullptr;
    j["ci_prob"] = nullptr;
  }
  j["level"] = level;
  j["n0"] = n0;
  j["n1"] = n1;
  j["diagnostics"] = diagnostics;
  return j;
}

}  // namespace pcix
