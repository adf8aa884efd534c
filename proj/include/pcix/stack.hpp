#pragma once

#include <Eigen/Core>
#include <string>

#include "pcix/dataset.hpp"
#include "pcix/estimate.hpp"
#include "pcix/estimating.hpp"

namespace pcix {

// A placebo-incidence estimator expressed as a stacked moment system.
// `init` holds the sequentially-fitted (cascade) solution; the full stacked
// solve polishes it and is what the sandwich uses. `p_index` locates the
// incidence parameter inside theta.
struct StackedEstimator {
  MomentSystem system;
  Eigen::VectorXd init;
  int p_index = 0;
  std::string method;
  double t = 0.0;
  Eigen::Index n0 = 0, n1 = 0;
  nlohmann::json diagnostics = nlohmann::json::object();
};

// Full-stack solve + delta on the cloglog scale. Invalid point estimates
// (outside (0,1)) are returned with valid=false and no transformed fields.
IncidenceEstimate finish_estimate(const StackedEstimator& est,
                                  double level = 0.95,
                                  const SolveOptions& opts = {});

}  // namespace pcix
