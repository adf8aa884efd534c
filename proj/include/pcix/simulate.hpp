#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcix/dataset.hpp"

namespace pcix {

// One proxy-strength cell of the factorial design: coefficients of the
// W model (intercept, U_b slope) and the Z model (intercept, U_b slope).
struct DgpCell {
  std::string name;  // "medium,medium" etc.
  double bw0 = -4.0, bw = 3.0;
  double bz0 = -1.2, bz = 1.0;
};

DgpCell dgp_cell(const std::string& name);  // medium,medium | medium,high | ...

// Intercept offsets and the survival normalizing constant that pin the
// generated marginals to their reported anchors:
//   P(R=1)=0.33, P(W=1)=0.15, P(Z=1)=0.50, P(T0 <= 365 | R=0)=0.035.
// Solved by bisection against Gauss-Legendre quadrature over U.
struct DgpCalibration {
  double d_r = 0.0, d_w = 0.0, d_z = 0.0;
  double c_surv = 1.0;
  double truth = 0.035;      // placebo incidence at one year among R=0
  double arm_truth = 0.0;    // active-arm incidence at one year among R=0
};

struct DgpConfig {
  DgpCell cell;
  long n = 6500;
  std::uint64_t seed = 1;
  double censor_scale = 3.0;  // scale on the (30, 50)-day censoring means
  double horizon = 365.0;
  DgpCalibration cal;  // filled by make_dgp_config
};

DgpConfig make_dgp_config(const DgpCell& cell, long n, std::uint64_t seed,
                          double censor_scale = 3.0);

// Quadrature oracles used for calibration and by tests.
double dgp_marginal_r1(const DgpConfig& cfg);
double dgp_marginal_w1(const DgpConfig& cfg);
double dgp_marginal_z1(const DgpConfig& cfg);
double dgp_truth_incidence(const DgpConfig& cfg);
// E(W | R=r, Z=z, X) by exact enumeration over the U_b cells.
double dgp_mean_w(const DgpConfig& cfg, int r, int z, int x1, int x2);

// Draws the dataset. The primary study observes the active-arm outcome
// (arm = 1); latent columns u, t0, t1, cp are retained so the oracle
// estimator and the null-arm view can be derived.
StudyDataset generate(const DgpConfig& cfg);

// View with the primary study's observed outcome replaced by the placebo
// draw censored at the primary censoring time (the null configuration).
DataView null_arm_view(const DataView& v);

struct DgpMarginals {
  double p_r1 = 0, p_w1 = 0, p_z1 = 0;
  double incidence_r0 = 0;      // latent placebo draws, R=0 records
  double arm_incidence_r0 = 0;  // latent active draws
  long n = 0;
};

// Streaming tally of the anchor marginals; does not materialize records.
DgpMarginals stream_marginals(const DgpConfig& cfg, long n);

// Warns loudly (stderr + returned note) when an anchor misses its target by
// more than `band`; never throws.
std::string calibration_check(const DgpConfig& cfg, long n, double band = 0.01);

struct SimScenario {
  std::string cell = "medium,medium";
  long n = 6500;
  int replicates = 500;
  std::vector<std::string> methods = {"oracle", "naive-x", "naive-xzw",
                                      "ob",     "tb",      "dr",
                                      "tsall"};
  double censor_scale = 3.0;
  double horizon = 365.0;
  bool efficacy = true;  // run null/alternative Wald tests per method
};

struct SimMetrics {
  std::string method;
  int replicates = 0;
  int valid = 0;       // usable point estimates
  int failed = 0;      // estimator errors
  double mean_theta = 0, est_incidence = 0, sd_theta = 0, med_se = 0;
  double coverage = 0;
  double power = 0, type1 = 0;
  int power_tests = 0, type1_tests = 0;
  double prop_excluded = 0;
  bool sd_defined = false;
};

struct SimReport {
  SimScenario scenario;
  std::uint64_t seed = 0;
  double truth = 0;
  std::vector<SimMetrics> metrics;
};

SimReport run_scenario(const SimScenario& sc, std::uint64_t seed);

std::string report_csv(const std::vector<SimReport>& reports);
std::string report_metadata(const std::vector<SimReport>& reports);

}  // namespace pcix
