#pragma once

#include <Eigen/Core>
#include <vector>

#include "pcix/estimate.hpp"
#include "pcix/glm.hpp"

namespace pcix {

// Exponential PH fit over a design matrix whose first column is the
// intercept (log baseline rate).
struct ExpPhFit {
  GlmFit glm;
  std::vector<std::string> colnames;

  // P(C > t | x) = exp(-t * exp(eta)); also the event-survival form.
  double survival(double t, const Eigen::RowVectorXd& x) const;
};

ExpPhFit fit_exponential(const Eigen::VectorXd& time,
                         const Eigen::VectorXd& event,
                         const Eigen::MatrixXd& design,
                         std::vector<std::string> colnames = {});

// Cox partial likelihood with Breslow tie handling and Breslow baseline.
struct CoxFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;             // inverse information
  std::vector<double> step_times;  // ascending distinct event times
  std::vector<double> cum_hazard;  // baseline H0 at those times
  int iterations = 0;
  double max_score = 0.0;

  // H0(t); sets beyond=true when t exceeds the last step (value carried).
  double baseline_cum_hazard(double t, bool* beyond = nullptr) const;
  double survival(double t, const Eigen::RowVectorXd& x,
                  bool* beyond = nullptr) const;
};

enum class CoxOutcome { EventOfInterest, CensoringAsEvent };

CoxFit fit_cox(const Eigen::VectorXd& time, const Eigen::VectorXd& event,
               const Eigen::MatrixXd& design,
               CoxOutcome outcome = CoxOutcome::EventOfInterest,
               int max_iter = 50, double tol = 1e-9);

// Breslow-ties partial likelihood and its score, for validation.
double cox_partial_loglik(const Eigen::VectorXd& time,
                          const Eigen::VectorXd& event,
                          const Eigen::MatrixXd& design,
                          const Eigen::VectorXd& beta);
Eigen::VectorXd cox_partial_score(const Eigen::VectorXd& time,
                                  const Eigen::VectorXd& event,
                                  const Eigen::MatrixXd& design,
                                  const Eigen::VectorXd& beta);

struct KmCurve {
  std::vector<double> times;      // distinct event times, ascending
  std::vector<double> survival;   // S(t) just after each time
  std::vector<double> greenwood;  // Var(S(t))

  double survival_at(double t) const;
  double variance_at(double t) const;
};

KmCurve km_curve(const Eigen::VectorXd& time, const Eigen::VectorXd& event);

// 1 - KM(t) with Greenwood SE mapped through the cloglog transform.
IncidenceEstimate km_incidence(const Eigen::VectorXd& time,
                               const Eigen::VectorXd& event, double t,
                               double level = 0.95);

}  // namespace pcix
