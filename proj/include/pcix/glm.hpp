#pragma once

#include <Eigen/Core>

namespace pcix {

struct GlmFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd model_cov;     // inverse observed information
  Eigen::MatrixXd sandwich_cov;  // A^-1 B A^-T
  int iterations = 0;
  double max_score = 0.0;
};

// Exponential proportional hazards: loglik = sum D*eta - T*exp(eta),
// eta = V theta, V carries the intercept column (log baseline rate).
struct ExpPhModel {
  Eigen::VectorXd time;   // observed follow-up
  Eigen::VectorXd event;  // 0/1
  Eigen::MatrixXd design;

  double loglik(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd score(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const;
};

struct LogisticModel {
  Eigen::VectorXd y;  // 0/1
  Eigen::MatrixXd design;

  double loglik(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd score(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const;
};

// Log-link mean model for a nonnegative outcome (Poisson-type equations).
struct PoissonModel {
  Eigen::VectorXd y;
  Eigen::MatrixXd design;

  double loglik(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd score(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const;
};

GlmFit fit_exp_ph(const ExpPhModel& m);
GlmFit fit_logistic(const LogisticModel& m);
GlmFit fit_poisson(const PoissonModel& m);

// Shared Newton loop with step halving; throws SingularError or
// ConvergenceError with diagnostics. max_coef is the divergence guard on the
// fitted scale (log-odds saturate numerically well below log-rate ranges).
template <class Model>
GlmFit newton_fit(const Model& m, Eigen::VectorXd theta, double tol = 1e-9,
                  int max_iter = 50, double max_coef = 30.0);

}  // namespace pcix
