#pragma once

#include <Eigen/Core>
#include <string>

#include "json.hpp"

namespace pcix {

// A cumulative-incidence estimate. CIs are formed on the log(-log p) scale
// and back-transformed; when the point estimate leaves (0,1) the transformed
// fields are absent and valid is false.
struct IncidenceEstimate {
  std::string method;
  double t = 0.0;
  double estimate = 0.0;  // probability scale
  bool valid = false;
  double theta = 0.0;     // log(-log estimate), when valid
  double se_theta = 0.0;  // SE on the transformed scale
  double ci_lo = 0.0, ci_hi = 0.0;  // probability scale, ascending
  double level = 0.95;
  Eigen::Index n0 = 0, n1 = 0;
  nlohmann::json diagnostics = nlohmann::json::object();

  nlohmann::json to_json() const;
};

IncidenceEstimate make_incidence_estimate(std::string method, double t,
                                          double p, double se_theta,
                                          Eigen::Index n0, Eigen::Index n1,
                                          double level = 0.95);

}  // namespace pcix
