#include "pcix/twostage.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>

#include "pcix/errors.hpp"
#include "pcix/glm.hpp"

namespace pcix {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw DataError(what);
}

Eigen::MatrixXd stage1_design(const Eigen::VectorXd& study,
                              const Eigen::VectorXd& z,
                              const Eigen::MatrixXd& x, bool interaction) {
  const Eigen::Index n = study.size();
  Eigen::MatrixXd d(n, 3 + x.cols() + (interaction ? 1 : 0));
  d.col(0).setOnes();
  d.col(1) = study;
  d.col(2) = z;
  d.middleCols(3, x.cols()) = x;
  if (interaction) d.col(3 + x.cols()) = study.cwiseProduct(z);
  return d;
}

}  // namespace

StageOneFit fit_stage1(const DataView& v, const TwoStageOptions& opts) {
  require(v.has_w(), "two-stage requires an NCO column");
  require(v.has_z(), "two-stage requires an NCE column");
  for (Eigen::Index i = 0; i < v.n(); ++i) {
    if (std::isnan(v.w[i]) || std::isnan(v.z[i]))
      throw DataError("two-stage stage 1 needs complete W and Z on all records");
    for (Eigen::Index j = 0; j < v.x.cols(); ++j)
      if (std::isnan(v.x(i, j)))
        throw DataError("two-stage stage 1 needs complete covariates");
  }

  const Eigen::MatrixXd d =
      stage1_design(v.study, v.z, v.x, opts.stage1_rz_interaction);
  GlmFit glm = fit_poisson(PoissonModel{v.w, d});

  StageOneFit fit;
  fit.coef = glm.coef;
  fit.interaction = opts.stage1_rz_interaction;
  fit.max_moment =
      glm.max_score / static_cast<double>(v.n());

  const Eigen::Index n = v.n();
  fit.log_mean_r1.resize(n);
  fit.log_mean_r0.resize(n);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::MatrixXd d1 = stage1_design(ones, v.z, v.x, fit.interaction);
  const Eigen::MatrixXd d0 =
      stage1_design(Eigen::VectorXd::Zero(n), v.z, v.x, fit.interaction);
  fit.log_mean_r1 = d1 * glm.coef;
  fit.log_mean_r0 = d0 * glm.coef;
  const Eigen::VectorXd eta_obs = d * glm.coef;
  for (Eigen::Index i = 0; i < n; ++i)
    if (eta_obs[i] > 0.0) ++fit.over_one;
  return fit;
}

StageTwoFit fit_stage2(const DataView& v, const StageOneFit& s1,
                       const TwoStageOptions& opts) {
  const Eigen::Index n = v.n();
  // collinearity guard: log What must vary with Z within the external study
  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (v.study[i] != 1.0) continue;
    mn = std::min(mn, s1.log_mean_r1[i]);
    mx = std::max(mx, s1.log_mean_r1[i]);
  }
  if (!(mx - mn > 1e-10))
    throw SingularError(
        "stage-2 regressor log E(W|1,Z,X) is constant on the external study; "
        "the NCE is non-informative");

  Eigen::Index n1 = 0;
  for (Eigen::Index i = 0; i < n; ++i) n1 += v.study[i] == 1.0;
  Eigen::MatrixXd d(n1, 2 + v.x.cols());
  Eigen::VectorXd time(n1), event(n1);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (v.study[i] != 1.0) continue;
    double ti = v.time[i];
    double ei = v.event[i];
    if (opts.truncate_at) {
      if (ti > *opts.truncate_at) {
        ti = *opts.truncate_at;
        ei = 0.0;
      }
    }
    time[k] = ti;
    event[k] = ei;
    d(k, 0) = 1.0;
    d.block(k, 1, 1, v.x.cols()) = v.x.row(i);
    d(k, 1 + v.x.cols()) = s1.log_mean_r1[i];
    ++k;
  }
  GlmFit glm = fit_exp_ph(ExpPhModel{time, event, d});
  StageTwoFit fit;
  fit.coef = glm.coef;
  fit.truncated = opts.truncate_at.has_value();
  fit.t0 = opts.truncate_at.value_or(0.0);
  return fit;
}

namespace {

struct TsCtx {
  double t = 0.0;
  std::optional<double> truncate_at;
  Eigen::VectorXd time, event, study;
  Eigen::MatrixXd d1obs;  // stage-1 design at observed R
  Eigen::MatrixXd x;
  Eigen::VectorXd z;
  bool interaction = false;
  Eigen::VectorXd w;
  int o1 = -1, o2 = -1, op = -1;
  int p1 = 0, p2 = 0, dim = 0;

  double log_mean(std::size_t i, Eigen::Ref<const Eigen::VectorXd> th,
                  double r) const {
    const auto ii = static_cast<Eigen::Index>(i);
    double eta = th[o1] + th[o1 + 1] * r + th[o1 + 2] * z[ii];
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      eta += th[o1 + 3 + j] * x(ii, j);
    if (interaction) eta += th[o1 + 3 + x.cols()] * r * z[ii];
    return eta;
  }

  void psi(std::size_t i, Eigen::Ref<const Eigen::VectorXd> th,
           Eigen::Ref<Eigen::VectorXd> out) const {
    out.setZero();
    const auto ii = static_cast<Eigen::Index>(i);
    const double r = study[ii];
    // stage 1: Poisson-type score at the observed R
    {
      const double mu = std::exp(d1obs.row(ii).dot(th.segment(o1, p1)));
      out.segment(o1, p1) = d1obs.row(ii).transpose() * (w[ii] - mu);
    }
    // stage 2 on R=1, possibly window-truncated
    if (r == 1.0) {
      double ti = time[ii], ei = event[ii];
      if (truncate_at && ti > *truncate_at) {
        ti = *truncate_at;
        ei = 0.0;
      }
      double eta = th[o2];
      for (Eigen::Index j = 0; j < x.cols(); ++j) eta += th[o2 + 1 + j] * x(ii, j);
      eta += th[o2 + 1 + x.cols()] * log_mean(i, th, 1.0);
      const double resid = ei - ti * std::exp(eta);
      out[o2] = resid;
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        out[o2 + 1 + j] = x(ii, j) * resid;
      out[o2 + 1 + x.cols()] = log_mean(i, th, 1.0) * resid;
    }
    // functional over R=0
    if (r == 0.0) {
      double eta = th[o2];
      for (Eigen::Index j = 0; j < x.cols(); ++j) eta += th[o2 + 1 + j] * x(ii, j);
      eta += th[o2 + 1 + x.cols()] * log_mean(i, th, 0.0);
      const double pi_rec = 1.0 - std::exp(-std::exp(eta) * t);
      out[op] = pi_rec - th[op];
    }
  }
};

}  // namespace

StackedEstimator build_twostage_stack(const DataView& v, double t,
                                      const TwoStageOptions& opts) {
  if (opts.truncate_at && t > *opts.truncate_at)
    throw Error("two-stage: horizon t exceeds the truncation window t0");
  const StageOneFit s1 = fit_stage1(v, opts);
  const StageTwoFit s2 = fit_stage2(v, s1, opts);

  auto ctx = std::make_shared<TsCtx>();
  ctx->t = t;
  ctx->truncate_at = opts.truncate_at;
  ctx->time = v.time;
  ctx->event = v.event;
  ctx->study = v.study;
  ctx->x = v.x;
  ctx->z = v.z;
  ctx->w = v.w;
  ctx->interaction = opts.stage1_rz_interaction;
  ctx->d1obs = stage1_design(v.study, v.z, v.x, opts.stage1_rz_interaction);
  ctx->p1 = static_cast<int>(s1.coef.size());
  ctx->p2 = static_cast<int>(s2.coef.size());
  ctx->o1 = 0;
  ctx->o2 = ctx->p1;
  ctx->op = ctx->p1 + ctx->p2;
  ctx->dim = ctx->op + 1;

  Eigen::Index n0 = 0;
  double p = 0.0;
  for (Eigen::Index i = 0; i < v.n(); ++i) {
    if (v.study[i] != 0.0) continue;
    ++n0;
    double eta = s2.coef[0];
    for (Eigen::Index j = 0; j < v.x.cols(); ++j)
      eta += s2.coef[1 + j] * v.x(i, j);
    eta += s2.coef[1 + v.x.cols()] * s1.log_mean_r0[i];
    if (!std::isfinite(eta))
      throw Error("two-stage: non-finite predicted hazard");
    p += 1.0 - std::exp(-std::exp(eta) * t);
  }
  require(n0 > 0, "no primary-study (R=0) records");
  p /= static_cast<double>(n0);

  StackedEstimator est;
  est.method = opts.truncate_at ? "ts1y" : "tsall";
  est.t = t;
  est.n0 = n0;
  est.n1 = v.n() - n0;
  est.p_index = ctx->dim - 1;
  est.init.resize(ctx->dim);
  est.init.segment(0, ctx->p1) = s1.coef;
  est.init.segment(ctx->p1, ctx->p2) = s2.coef;
  est.init[est.p_index] = p;
  est.system.dim = ctx->dim;
  est.system.n = static_cast<std::size_t>(v.n());
  est.system.blocks = {{"stage1", ctx->p1},
                       {"stage2", ctx->p2},
                       {"functional", 1}};
  est.system.psi = [ctx](std::size_t i, Eigen::Ref<const Eigen::VectorXd> th,
                         Eigen::Ref<Eigen::VectorXd> out) {
    ctx->psi(i, th, out);
  };
  est.diagnostics["window"] =
      opts.truncate_at ? nlohmann::json(*opts.truncate_at) : nlohmann::json("all");
  est.diagnostics["stage1_fitted_over_one"] = s1.over_one;
  if (s1.over_one * 20 > static_cast<int>(v.n()))
    est.diagnostics["log_binomial_violation"] = true;
  return est;
}

IncidenceEstimate estimate_twostage(const DataView& v, double t,
                                    const TwoStageOptions& opts) {
  StackedEstimator est = build_twostage_stack(v, t, opts);
  return finish_estimate(est, opts.level);
}

}  // namespace pcix
