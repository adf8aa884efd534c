#pragma once

#include <Eigen/Core>
#include <optional>

#include "pcix/dataset.hpp"
#include "pcix/estimate.hpp"
#include "pcix/stack.hpp"

namespace pcix {

struct TwoStageOptions {
  double level = 0.95;
  bool stage1_rz_interaction = false;
  // when set, stage 2 administratively censors every record at t0
  std::optional<double> truncate_at;
};

// Log-linear mean model E(W | R, Z, X) = exp(eta (1, R, Z, X[, RZ])),
// fitted on the combined data by Poisson-type estimating equations.
struct StageOneFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd log_mean_r1;  // log What(1, Z, X) per record
  Eigen::VectorXd log_mean_r0;  // log What(0, Z, X) per record
  int over_one = 0;             // fitted means above 1 (observed R)
  bool interaction = false;
  double max_moment = 0.0;
};

StageOneFit fit_stage1(const DataView& v, const TwoStageOptions& opts = {});

// Exponential PH regression of the external observed times on
// (X, log What(1,Z,X)); constant baseline hazard.
struct StageTwoFit {
  Eigen::VectorXd coef;  // (gamma0, gamma_X..., gamma_W)
  bool truncated = false;
  double t0 = 0.0;
};

StageTwoFit fit_stage2(const DataView& v, const StageOneFit& s1,
                       const TwoStageOptions& opts = {});

StackedEstimator build_twostage_stack(const DataView& v, double t,
                                      const TwoStageOptions& opts = {});

// Counterfactual incidence at t for the primary study:
// per R=0 record, lambda = exp(g0 + gX X + gW log What(0,Z,X)),
// p_i = 1 - exp(-lambda t), averaged; SE via the full stacked sandwich.
IncidenceEstimate estimate_twostage(const DataView& v, double t,
                                    const TwoStageOptions& opts = {});

}  // namespace pcix
