#pragma once

#include <string>

#include "pcix/dataset.hpp"
#include "pcix/estimate.hpp"

namespace pcix {

struct Interval {
  double lo = 0.0, hi = 0.0;
};

// Wald interval on the log(-log p) scale mapped back to the probability
// scale. The transform is decreasing, so endpoints are swapped to keep the
// returned interval ascending.
Interval cloglog_ci(double p, double se_theta, double level = 0.95);

struct EfficacyResult {
  int arm = 0;
  std::string method;
  double arm_incidence = 0.0;
  double placebo_incidence = 0.0;
  double relative_efficacy = 0.0;  // 1 - p_a / p_0
  double absolute_efficacy = 0.0;  // p_0 - p_a
  double statistic = 0.0;          // Wald on the cloglog scale
  double pvalue = 1.0;

  nlohmann::json to_json() const;
};

// Pure arithmetic part, shared with the full test.
EfficacyResult efficacy_from_incidences(double p_arm, double p_placebo);

}  // namespace pcix

#include "pcix/bridge.hpp"
#include "pcix/twostage.hpp"

namespace pcix {

struct EfficacyOptions {
  std::string method = "ob";  // ob|tb|dr|ts1y|tsall|naive-x|naive-xzw|oracle
  double t = 365.0;
  double level = 0.95;
  IpcwOptions ipcw;
  TwoStageOptions twostage;
};

// Placebo-estimator stack dispatcher shared by the CLI and the simulation
// harness. ts1y truncates at t; method "km" has no moment form and is
// rejected here.
StackedEstimator build_placebo_stack(const DataView& v, double t,
                                     const std::string& method,
                                     const IpcwOptions& ipcw = {},
                                     const TwoStageOptions& ts = {});

// Wald test of arm vs counterfactual placebo on the cloglog scale. The arm
// incidence enters the stack as a one-parameter IPCW moment with an
// arm-specific exponential censoring model on X, jointly with every placebo
// moment, so the difference SE carries the cross-covariance.
EfficacyResult efficacy_test(const DataView& v, int arm,
                             const EfficacyOptions& opts);

}  // namespace pcix
