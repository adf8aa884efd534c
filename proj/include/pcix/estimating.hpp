#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "pcix/dataset.hpp"
#include "pcix/errors.hpp"

namespace pcix {

// A stacked estimating-equation system: solve mean_i psi(i, theta) = 0.
// psi writes a length-`dim` vector for record i; blocks name parameter
// sub-vectors for diagnostics. psi must be safe to call concurrently.
using MomentFn = std::function<void(
    std::size_t, Eigen::Ref<const Eigen::VectorXd>, Eigen::Ref<Eigen::VectorXd>)>;

struct MomentSystem {
  int dim = 0;
  std::size_t n = 0;
  MomentFn psi;
  std::vector<std::pair<std::string, int>> blocks;
};

struct SolveOptions {
  double tol = 1e-8;        // on the max-abs mean moment
  int max_iter = 100;
  double jac_step = 1e-6;   // central-difference step scale
  bool compute_sandwich = true;
  double divergence_norm = 100.0;  // iterate sup-norm guard
};

struct SolvedSystem {
  Eigen::VectorXd theta;
  Eigen::MatrixXd A;         // mean Jacobian of psi at theta
  Eigen::MatrixXd B;         // mean outer product of psi at theta
  Eigen::MatrixXd sandwich;  // A^-1 B A^-T / n
  int iterations = 0;
  double resid_norm = 0.0;
  std::size_t n = 0;
};

// Non-convergence carrying the best iterate found.
struct SolveFailure : ConvergenceError {
  SolveFailure(const std::string& what, double resid, int iters,
               Eigen::VectorXd best)
      : ConvergenceError(what, resid, iters), best_theta(std::move(best)) {}
  Eigen::VectorXd best_theta;
};

Eigen::VectorXd mean_moment(const MomentSystem& sys,
                            const Eigen::VectorXd& theta);
Eigen::MatrixXd mean_jacobian(const MomentSystem& sys,
                              const Eigen::VectorXd& theta, double step_scale);

SolvedSystem solve(const MomentSystem& sys, const Eigen::VectorXd& init,
                   const SolveOptions& opts = {});

// Fills A, B, sandwich for a solution obtained elsewhere.
void attach_sandwich(const MomentSystem& sys, SolvedSystem& sol,
                     double step_scale = 1e-6);

struct DeltaResult {
  double value = 0.0;
  double se = 0.0;
  Eigen::VectorXd gradient;
};

DeltaResult delta_method(
    const SolvedSystem& sol, const std::function<double(const Eigen::VectorXd&)>& g,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad = nullptr);

struct BootstrapResult {
  double se = 0.0;
  double lo = 0.0, hi = 0.0;  // percentile interval
  int reps = 0;
  int failed = 0;
};

// Nonparametric bootstrap resampling records with replacement within study
// strata; replicate streams are derived from (seed, replicate) so the result
// is independent of worker count.
BootstrapResult bootstrap(
    const std::function<double(const StudyDataset&)>& estimator,
    const StudyDataset& ds, int reps, std::uint64_t seed, double level = 0.95);

}  // namespace pcix
