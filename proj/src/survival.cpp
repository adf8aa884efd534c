#include "pcix/survival.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pcix/errors.hpp"
#include "pcix/stats.hpp"

namespace pcix {

double ExpPhFit::survival(double t, const Eigen::RowVectorXd& x) const {
  return std::exp(-t * std::exp(x * glm.coef));
}

ExpPhFit fit_exponential(const Eigen::VectorXd& time,
                         const Eigen::VectorXd& event,
                         const Eigen::MatrixXd& design,
                         std::vector<std::string> colnames) {
  ExpPhFit fit;
  fit.glm = fit_exp_ph(ExpPhModel{time, event, design});
  fit.colnames = std::move(colnames);
  return fit;
}

namespace {

struct CoxData {
  // records sorted by descending time; tie groups share risk sets
  Eigen::VectorXd time, event;
  Eigen::MatrixXd x;
};

double cox_loglik(const CoxData& d, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = d.x * beta;
  double ll = 0.0, s0 = 0.0;
  Eigen::Index i = 0;
  const Eigen::Index n = d.time.size();
  while (i < n) {
    Eigen::Index j = i;
    while (j < n && d.time[j] == d.time[i]) ++j;
    for (Eigen::Index k = i; k < j; ++k) s0 += std::exp(eta[k]);
    double d_events = 0.0;
    for (Eigen::Index k = i; k < j; ++k)
      if (d.event[k] > 0.5) {
        ll += eta[k];
        d_events += 1.0;
      }
    if (d_events > 0.0) ll -= d_events * std::log(s0);
    i = j;
  }
  return ll;
}

void cox_derivs(const CoxData& d, const Eigen::VectorXd& beta,
                Eigen::VectorXd& score, Eigen::MatrixXd& hess) {
  const Eigen::Index n = d.time.size();
  const Eigen::Index p = d.x.cols();
  const Eigen::VectorXd eta = d.x * beta;
  score.setZero(p);
  hess.setZero(p, p);
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j < n && d.time[j] == d.time[i]) ++j;
    for (Eigen::Index k = i; k < j; ++k) {
      const double w = std::exp(eta[k]);
      s0 += w;
      s1.noalias() += w * d.x.row(k).transpose();
      s2.noalias() += w * (d.x.row(k).transpose() * d.x.row(k));
    }
    double d_events = 0.0;
    for (Eigen::Index k = i; k < j; ++k)
      if (d.event[k] > 0.5) {
        score.noalias() += d.x.row(k).transpose();
        d_events += 1.0;
      }
    if (d_events > 0.0) {
      const Eigen::VectorXd mu = s1 / s0;
      score.noalias() -= d_events * mu;
      hess.noalias() -= d_events * (s2 / s0 - mu * mu.transpose());
    }
    i = j;
  }
}

CoxData sorted_cox_data(const Eigen::VectorXd& time,
                        const Eigen::VectorXd& event,
                        const Eigen::MatrixXd& design) {
  const Eigen::Index n = time.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return time[a] > time[b]; });
  CoxData d;
  d.time.resize(n);
  d.event.resize(n);
  d.x.resize(n, design.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    d.time[i] = time[order[static_cast<std::size_t>(i)]];
    d.event[i] = event[order[static_cast<std::size_t>(i)]];
    d.x.row(i) = design.row(order[static_cast<std::size_t>(i)]);
  }
  return d;
}

}  // namespace

double cox_partial_loglik(const Eigen::VectorXd& time,
                          const Eigen::VectorXd& event,
                          const Eigen::MatrixXd& design,
                          const Eigen::VectorXd& beta) {
  return cox_loglik(sorted_cox_data(time, event, design), beta);
}

Eigen::VectorXd cox_partial_score(const Eigen::VectorXd& time,
                                  const Eigen::VectorXd& event,
                                  const Eigen::MatrixXd& design,
                                  const Eigen::VectorXd& beta) {
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  cox_derivs(sorted_cox_data(time, event, design), beta, g, h);
  return g;
}

CoxFit fit_cox(const Eigen::VectorXd& time, const Eigen::VectorXd& event,
               const Eigen::MatrixXd& design, CoxOutcome outcome, int max_iter,
               double tol) {
  const Eigen::Index n = time.size();
  Eigen::VectorXd ev = event;
  if (outcome == CoxOutcome::CensoringAsEvent)
    ev = Eigen::VectorXd::Ones(n) - event;
  if (ev.sum() < 1.0)
    throw DegenerateError("Cox fit requires at least one event");

  const CoxData d = sorted_cox_data(time, ev, design);

  CoxFit fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(design.cols());
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  double ll = cox_loglik(d, beta);
  for (int it = 1; it <= max_iter; ++it) {
    cox_derivs(d, beta, g, H);
    fit.max_score = g.cwiseAbs().maxCoeff();
    fit.iterations = it;
    if (fit.max_score < tol * static_cast<double>(n)) break;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
    if (!lu.isInvertible())
      throw SingularError(
          "singular partial-likelihood information (constant or collinear "
          "covariate)");
    Eigen::VectorXd step = lu.solve(-g);
    const double slack = 1e-11 * (1.0 + std::fabs(ll));
    double t = 1.0;
    Eigen::VectorXd cand = beta + step;
    double llc = cox_loglik(d, cand);
    int halvings = 0;
    while ((!std::isfinite(llc) || llc < ll - slack) && halvings < 30) {
      t *= 0.5;
      cand = beta + t * step;
      llc = cox_loglik(d, cand);
      ++halvings;
    }
    beta = cand;
    ll = llc;
    if (it == max_iter) {
      cox_derivs(d, beta, g, H);
      const double resid = g.cwiseAbs().maxCoeff();
      if (resid >= tol * static_cast<double>(n)) {
        std::ostringstream msg;
        msg << "Cox Newton did not converge in " << max_iter
            << " iterations (max |score| = " << resid << ", |beta| = "
            << beta.norm() << "); possible monotone likelihood";
        throw ConvergenceError(msg.str(), resid, max_iter);
      }
    }
  }
  fit.beta = beta;
  cox_derivs(d, beta, g, H);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(-H);
  if (!lu.isInvertible())
    throw SingularError("singular information at the Cox optimum");
  fit.cov = lu.inverse();

  // Breslow baseline: sweep ascending over event times; risk sets shrink.
  const Eigen::VectorXd eta = d.x * beta;
  double s0 = 0.0;
  std::vector<std::pair<double, double>> steps;  // (time, d/S0), descending
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j < n && d.time[j] == d.time[i]) ++j;
    for (Eigen::Index k = i; k < j; ++k) s0 += std::exp(eta[k]);
    double d_events = 0.0;
    for (Eigen::Index k = i; k < j; ++k) d_events += d.event[k] > 0.5 ? 1.0 : 0.0;
    if (d_events > 0.0) steps.push_back({d.time[i], d_events / s0});
    i = j;
  }
  std::reverse(steps.begin(), steps.end());
  double h = 0.0;
  for (const auto& [t_ev, inc] : steps) {
    h += inc;
    fit.step_times.push_back(t_ev);
    fit.cum_hazard.push_back(h);
  }
  return fit;
}

double CoxFit::baseline_cum_hazard(double t, bool* beyond) const {
  if (beyond) *beyond = !step_times.empty() && t > step_times.back();
  auto it = std::upper_bound(step_times.begin(), step_times.end(), t);
  if (it == step_times.begin()) return 0.0;
  return cum_hazard[static_cast<std::size_t>(it - step_times.begin()) - 1];
}

double CoxFit::survival(double t, const Eigen::RowVectorXd& x,
                        bool* beyond) const {
  const double h0 = baseline_cum_hazard(t, beyond);
  return std::exp(-h0 * std::exp(x * beta));
}

KmCurve km_curve(const Eigen::VectorXd& time, const Eigen::VectorXd& event) {
  const Eigen::Index n = time.size();
  if (n == 0) throw DataError("empty sample for Kaplan-Meier");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return time[a] < time[b]; });

  KmCurve km;
  double s = 1.0, gw = 0.0;
  std::size_t i = 0;
  double at_risk = static_cast<double>(n);
  while (i < order.size()) {
    std::size_t j = i;
    double d_events = 0.0;
    while (j < order.size() && time[order[j]] == time[order[i]]) {
      if (event[order[j]] > 0.5) d_events += 1.0;
      ++j;
    }
    if (d_events > 0.0) {
      s *= 1.0 - d_events / at_risk;
      if (at_risk > d_events)
        gw += d_events / (at_risk * (at_risk - d_events));
      km.times.push_back(time[order[i]]);
      km.survival.push_back(s);
      km.greenwood.push_back(s * s * gw);
    }
    at_risk -= static_cast<double>(j - i);
    i = j;
  }
  return km;
}

double KmCurve::survival_at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

double KmCurve::variance_at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return greenwood[static_cast<std::size_t>(it - times.begin()) - 1];
}

IncidenceEstimate km_incidence(const Eigen::VectorXd& time,
                               const Eigen::VectorXd& event, double t,
                               double level) {
  const KmCurve km = km_curve(time, event);
  const double p = 1.0 - km.survival_at(t);
  const double var_s = km.variance_at(t);
  double se_theta = std::numeric_limits<double>::quiet_NaN();
  if (p > 0.0 && p < 1.0)
    se_theta = std::sqrt(var_s) * std::fabs(cloglog_deriv(p));
  const Eigen::Index n = time.size();
  auto est = make_incidence_estimate("km", t, p, se_theta, n, 0, level);
  est.diagnostics["events_by_t"] =
      [&] {
        int k = 0;
        for (Eigen::Index i = 0; i < n; ++i)
          if (event[i] > 0.5 && time[i] <= t) ++k;
        return k;
      }();
  return est;
}

}  // namespace pcix
