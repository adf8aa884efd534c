#include "pcix/bridge.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <sstream>

#include "pcix/errors.hpp"
#include "pcix/glm.hpp"
#include "pcix/rng.hpp"
#include "pcix/stats.hpp"

namespace pcix {

namespace {

void require_complete(const Eigen::VectorXd& col, const Eigen::VectorXd& study,
                      int which_study, const char* what) {
  if (col.size() == 0) throw DataError(std::string("missing column: ") + what);
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    if (which_study >= 0 && study[i] != which_study) continue;
    if (std::isnan(col[i]))
      throw DataError(std::string(what) +
                      " has missing values on the records this estimator uses; "
                      "apply complete-case filtering first");
  }
}

void require_complete_x(const DataView& v) {
  for (Eigen::Index i = 0; i < v.n(); ++i)
    for (Eigen::Index j = 0; j < v.x.cols(); ++j)
      if (std::isnan(v.x(i, j)))
        throw DataError("covariates have missing values; apply complete-case "
                        "filtering first");
}

// (1, key, X...) or the full tensor expansion over {key, X...}.
Eigen::MatrixXd bridge_design(const Eigen::VectorXd& key,
                              const Eigen::MatrixXd& x, bool saturated,
                              std::vector<std::string>* names,
                              const std::string& key_name,
                              const std::vector<std::string>& xnames) {
  const Eigen::Index n = key.size();
  std::vector<Eigen::VectorXd> vars;
  std::vector<std::string> vnames;
  vars.push_back(key);
  vnames.push_back(key_name);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    vars.push_back(x.col(j));
    vnames.push_back(xnames[static_cast<std::size_t>(j)]);
  }
  if (!saturated) {
    Eigen::MatrixXd d(n, 1 + static_cast<Eigen::Index>(vars.size()));
    d.col(0).setOnes();
    if (names) names->assign(1, "1");
    for (std::size_t j = 0; j < vars.size(); ++j) {
      d.col(1 + static_cast<Eigen::Index>(j)) = vars[j];
      if (names) names->push_back(vnames[j]);
    }
    return d;
  }
  const std::size_t k = vars.size();
  const std::size_t cols = std::size_t{1} << k;
  Eigen::MatrixXd d(n, static_cast<Eigen::Index>(cols));
  if (names) names->clear();
  for (std::size_t mask = 0; mask < cols; ++mask) {
    Eigen::VectorXd c = Eigen::VectorXd::Ones(n);
    std::string nm;
    for (std::size_t j = 0; j < k; ++j) {
      if (mask & (std::size_t{1} << j)) {
        c = c.cwiseProduct(vars[j]);
        nm += (nm.empty() ? "" : ":") + vnames[j];
      }
    }
    d.col(static_cast<Eigen::Index>(mask)) = c;
    if (names) names->push_back(nm.empty() ? "1" : nm);
  }
  return d;
}

Eigen::MatrixXd rows_where(const Eigen::MatrixXd& m,
                           const Eigen::VectorXd& study, int s) {
  Eigen::Index cnt = 0;
  for (Eigen::Index i = 0; i < study.size(); ++i) cnt += (study[i] == s);
  Eigen::MatrixXd out(cnt, m.cols());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < study.size(); ++i)
    if (study[i] == s) out.row(k++) = m.row(i);
  return out;
}

Eigen::VectorXd vec_where(const Eigen::VectorXd& v,
                          const Eigen::VectorXd& study, int s) {
  Eigen::Index cnt = 0;
  for (Eigen::Index i = 0; i < study.size(); ++i) cnt += (study[i] == s);
  Eigen::VectorXd out(cnt);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < study.size(); ++i)
    if (study[i] == s) out[k++] = v[i];
  return out;
}

// Solves mean[g (y - x b)] = 0 over masked records; rcond from SVD.
Eigen::VectorXd cross_moment_solve(const Eigen::MatrixXd& g,
                                   const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& mask, double* rcond) {
  const Eigen::Index p = x.cols();
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  double m = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (mask[i] == 0.0) continue;
    cross.noalias() += g.row(i).transpose() * x.row(i);
    rhs.noalias() += g.row(i).transpose() * y[i];
    m += 1.0;
  }
  if (m == 0.0) throw DataError("no records available for the bridge fit");
  cross /= m;
  rhs /= m;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smax = svd.singularValues()[0];
  const double smin = svd.singularValues()[p - 1];
  *rcond = smax > 0 ? smin / smax : 0.0;
  if (*rcond < 1e-12)
    throw SingularError(
        "weak proxy: instrument-regressor cross-moment is singular; check the "
        "Z-W conditional association with the proxy-strength diagnostic",
        *rcond);
  return svd.solve(rhs);
}

}  // namespace

CensorFit fit_censoring(const DataView& v, const IpcwOptions& opts) {
  require_complete(v.z, v.study, 1, "nce (Z)");
  require_complete_x(v);
  const Eigen::Index n = v.n();
  Eigen::MatrixXd design(n, 2 + v.x.cols());
  design.col(0).setOnes();
  design.col(1) = v.z.array().isNaN().select(0.0, v.z);  // NaN only on R=0
  design.rightCols(v.x.cols()) = v.x;

  const Eigen::VectorXd t1 = vec_where(v.time, v.study, 1);
  const Eigen::VectorXd e1 = vec_where(v.event, v.study, 1);
  const Eigen::MatrixXd d1 = rows_where(design, v.study, 1);

  CensorFit fit;
  fit.kind = opts.censor_model;
  fit.surv_at_t = Eigen::VectorXd::Ones(n);
  if (opts.censor_model == CensorModelKind::Exponential) {
    Eigen::VectorXd cens_event = Eigen::VectorXd::Ones(t1.size()) - e1;
    fit.exponential = fit_exponential(t1, cens_event, d1);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (v.study[i] != 1) continue;
      fit.surv_at_t[i] = fit.exponential->survival(v.time[i], design.row(i));
    }
  } else {
    Eigen::MatrixXd d1nc = d1.rightCols(d1.cols() - 1);  // Cox: no intercept
    fit.cox = fit_cox(t1, e1, d1nc, CoxOutcome::CensoringAsEvent);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (v.study[i] != 1) continue;
      bool beyond = false;
      fit.surv_at_t[i] =
          fit.cox->survival(v.time[i], design.row(i).tail(design.cols() - 1),
                            &beyond);
      fit.beyond_last += beyond;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (v.study[i] == 1 && fit.surv_at_t[i] < opts.floor) ++fit.floored;
  return fit;
}

namespace {

Eigen::VectorXd weighted_outcome(const DataView& v, double t,
                                 const CensorFit* censor, double floor) {
  const Eigen::Index n = v.n();
  Eigen::VectorXd yw = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (v.event[i] > 0.5 && v.time[i] <= t) {
      const double sc = censor ? std::max(censor->surv_at_t[i], floor) : 1.0;
      yw[i] = 1.0 / sc;
    }
  }
  return yw;
}

}  // namespace

BridgeFit fit_h(const DataView& v, double t, const CensorFit* censor,
                const IpcwOptions& opts) {
  require_complete(v.w, v.study, -1, "nco (W)");
  require_complete(v.z, v.study, 1, "nce (Z)");
  require_complete_x(v);

  BridgeFit fit;
  fit.spec.kind = BridgeSpec::OutcomeH;
  fit.spec.saturated = opts.saturated;
  const Eigen::VectorXd w = v.w.array().isNaN().select(0.0, v.w);
  const Eigen::VectorXd z = v.z.array().isNaN().select(0.0, v.z);
  const Eigen::MatrixXd xh = bridge_design(w, v.x, opts.saturated,
                                           &fit.spec.regressors, "W", v.xnames);
  const Eigen::MatrixXd gh = bridge_design(z, v.x, opts.saturated,
                                           &fit.spec.instruments, "Z", v.xnames);
  const Eigen::VectorXd yw = weighted_outcome(v, t, censor, opts.floor);
  fit.coef = cross_moment_solve(gh, xh, yw, v.study, &fit.cross_rcond);
  fit.fitted = xh * fit.coef;

  Eigen::VectorXd moment = Eigen::VectorXd::Zero(gh.cols());
  double m = 0.0;
  for (Eigen::Index i = 0; i < v.n(); ++i) {
    if (v.study[i] != 1) continue;
    moment.noalias() += gh.row(i).transpose() * (yw[i] - fit.fitted[i]);
    m += 1.0;
  }
  fit.max_moment = (moment / m).cwiseAbs().maxCoeff();
  fit.diagnostics["cross_rcond"] = fit.cross_rcond;
  if (fit.cross_rcond < 1e-6) fit.diagnostics["near_singular"] = true;
  return fit;
}

BridgeFit fit_q(const DataView& v, const IpcwOptions& opts) {
  require_complete(v.w, v.study, -1, "nco (W)");
  require_complete(v.z, v.study, 1, "nce (Z)");
  require_complete_x(v);

  BridgeFit fit;
  fit.spec.kind = BridgeSpec::TreatmentQ;
  fit.spec.saturated = opts.saturated;
  const Eigen::VectorXd w = v.w.array().isNaN().select(0.0, v.w);
  const Eigen::VectorXd z = v.z.array().isNaN().select(0.0, v.z);
  const Eigen::MatrixXd xq = bridge_design(z, v.x, opts.saturated,
                                           &fit.spec.regressors, "Z", v.xnames);
  const Eigen::MatrixXd gq = bridge_design(w, v.x, opts.saturated,
                                           &fit.spec.instruments, "W", v.xnames);

  if (opts.q_moment == QMomentForm::External) {
    Eigen::MatrixXd va = bridge_design(w, v.x, false, nullptr, "W", v.xnames);
    GlmFit logit = fit_logistic(LogisticModel{v.study, va});
    Eigen::VectorXd odds(v.n());
    int positivity = 0;
    for (Eigen::Index i = 0; i < v.n(); ++i) {
      const double pr = 1.0 / (1.0 + std::exp(-va.row(i).dot(logit.coef)));
      if (v.study[i] == 1 && pr < opts.floor) ++positivity;
      odds[i] = (1.0 - pr) / std::max(pr, opts.floor);
    }
    if (positivity > 0)
      fit.diagnostics["positivity_warning_records"] = positivity;
    fit.coef = cross_moment_solve(gq, xq, odds, v.study, &fit.cross_rcond);
    fit.diagnostics["logit_coef"] = std::vector<double>(
        logit.coef.data(), logit.coef.data() + logit.coef.size());

    Eigen::VectorXd moment = Eigen::VectorXd::Zero(gq.cols());
    double m = 0.0;
    fit.fitted = xq * fit.coef;
    for (Eigen::Index i = 0; i < v.n(); ++i) {
      if (v.study[i] != 1) continue;
      moment.noalias() += gq.row(i).transpose() * (fit.fitted[i] - odds[i]);
      m += 1.0;
    }
    fit.max_moment = (moment / m).cwiseAbs().maxCoeff();
  } else {
    // mean[ g_q (R q - (1-R)) ] = 0 over the combined data
    const Eigen::Index p = xq.cols();
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < v.n(); ++i) {
      if (v.study[i] == 1)
        cross.noalias() += gq.row(i).transpose() * xq.row(i);
      else
        rhs.noalias() += gq.row(i).transpose() * 1.0;
    }
    const double n = static_cast<double>(v.n());
    cross /= n;
    rhs /= n;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(
        cross, Eigen::ComputeThinU | Eigen::ComputeThinV);
    fit.cross_rcond = svd.singularValues()[p - 1] / svd.singularValues()[0];
    if (fit.cross_rcond < 1e-12)
      throw SingularError("weak proxy: all-data q cross-moment is singular",
                          fit.cross_rcond);
    fit.coef = svd.solve(rhs);
    fit.fitted = xq * fit.coef;
    Eigen::VectorXd moment = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < v.n(); ++i) {
      const double resid =
          v.study[i] == 1 ? fit.fitted[i] : -1.0;
      moment.noalias() += gq.row(i).transpose() * resid;
    }
    fit.max_moment = (moment / n).cwiseAbs().maxCoeff();
  }
  fit.diagnostics["cross_rcond"] = fit.cross_rcond;
  if (fit.cross_rcond < 1e-6) fit.diagnostics["near_singular"] = true;
  return fit;
}

namespace {

struct IpcwCtx {
  double t = 0.0, floor = 1e-6;
  Eigen::VectorXd time, event, study;
  Eigen::MatrixXd vc, xh, gh, va, xq, gq;
  bool use_censoring = false, use_h = false, use_logistic = false,
       use_q = false, use_pi = false, alldata_q = false;
  std::string method;
  int oc = -1, oh = -1, ol = -1, oq = -1, opi = -1, op = -1;
  int dim = 0;

  double yw(std::size_t i, Eigen::Ref<const Eigen::VectorXd> th) const {
    if (!(event[static_cast<Eigen::Index>(i)] > 0.5 &&
          time[static_cast<Eigen::Index>(i)] <= t))
      return 0.0;
    if (!use_censoring) return 1.0;
    const auto ii = static_cast<Eigen::Index>(i);
    const double eta = vc.row(ii).dot(th.segment(oc, vc.cols()));
    const double sc = std::exp(-time[ii] * std::exp(eta));
    return 1.0 / std::max(sc, floor);
  }

  void psi(std::size_t i, Eigen::Ref<const Eigen::VectorXd> th,
           Eigen::Ref<Eigen::VectorXd> out) const {
    out.setZero();
    const auto ii = static_cast<Eigen::Index>(i);
    const double r = study[ii];
    double ywi = 0.0;
    if (use_censoring) {
      if (r == 1.0) {
        const double eta = vc.row(ii).dot(th.segment(oc, vc.cols()));
        const double resid = (1.0 - event[ii]) - time[ii] * std::exp(eta);
        out.segment(oc, vc.cols()) = vc.row(ii).transpose() * resid;
      }
      ywi = yw(i, th);
    } else {
      ywi = yw(i, th);
    }
    double hi = 0.0;
    if (use_h) {
      hi = xh.row(ii).dot(th.segment(oh, xh.cols()));
      if (r == 1.0)
        out.segment(oh, gh.cols()) = gh.row(ii).transpose() * (ywi - hi);
    }
    double pr = 0.0;
    if (use_logistic) {
      pr = 1.0 / (1.0 + std::exp(-va.row(ii).dot(th.segment(ol, va.cols()))));
      out.segment(ol, va.cols()) = va.row(ii).transpose() * (r - pr);
    }
    double qi = 0.0;
    if (use_q) {
      qi = xq.row(ii).dot(th.segment(oq, xq.cols()));
      if (alldata_q) {
        const double resid = r == 1.0 ? qi : -1.0;
        out.segment(oq, gq.cols()) = gq.row(ii).transpose() * resid;
      } else if (r == 1.0) {
        const double odds = (1.0 - pr) / std::max(pr, floor);
        out.segment(oq, gq.cols()) = gq.row(ii).transpose() * (qi - odds);
      }
    }
    double pi = 0.0;
    if (use_pi) {
      pi = th[opi];
      out[opi] = (1.0 - r) - pi;
    }
    const double p = th[op];
    if (method == "ob") {
      out[op] = (1.0 - r) * (hi - p);
    } else if (method == "tb") {
      out[op] = r * qi * ywi - p * pi;
    } else {  // dr
      out[op] = r * qi * (ywi - hi) + (1.0 - r) * hi - p * pi;
    }
  }
};

}  // namespace

StackedEstimator build_ipcw_stack(const DataView& v, double t,
                                  const std::string& method,
                                  const IpcwOptions& opts) {
  if (opts.censor_model != CensorModelKind::Exponential)
    throw Error(
        "stacked sandwich inference requires the exponential censoring model; "
        "use bootstrap inference with the Cox censoring model");
  auto ctx = std::make_shared<IpcwCtx>();
  ctx->t = t;
  ctx->floor = opts.floor;
  ctx->time = v.time;
  ctx->event = v.event;
  ctx->study = v.study;
  ctx->method = method;

  const Eigen::Index n0 = (v.study.array() == 0.0).count();
  const Eigen::Index n1 = v.n() - n0;
  if (n0 == 0) throw DataError("no primary-study (R=0) records");
  if (n1 == 0) throw DataError("no external-study (R=1) records");

  const CensorFit censor = fit_censoring(v, opts);
  ctx->use_censoring = true;
  const Eigen::VectorXd z = v.z.array().isNaN().select(0.0, v.z);
  ctx->vc.resize(v.n(), 2 + v.x.cols());
  ctx->vc.col(0).setOnes();
  ctx->vc.col(1) = z;
  ctx->vc.rightCols(v.x.cols()) = v.x;

  StackedEstimator est;
  est.method = method;
  est.t = t;
  est.n0 = n0;
  est.n1 = n1;

  std::vector<double> init;
  auto push_block = [&](const std::string& label, const Eigen::VectorXd& coefs,
                        int& offset) {
    offset = static_cast<int>(init.size());
    for (Eigen::Index j = 0; j < coefs.size(); ++j) init.push_back(coefs[j]);
    est.system.blocks.push_back({label, static_cast<int>(coefs.size())});
  };

  push_block("censoring", censor.exponential->glm.coef, ctx->oc);
  est.diagnostics["floored_weights"] = censor.floored;

  BridgeFit hfit, qfit;
  const bool need_h = method == "ob" || method == "dr";
  const bool need_q = method == "tb" || method == "dr";
  if (need_h) {
    hfit = fit_h(v, t, &censor, opts);
    const Eigen::VectorXd w = v.w.array().isNaN().select(0.0, v.w);
    ctx->xh = bridge_design(w, v.x, opts.saturated, nullptr, "W", v.xnames);
    ctx->gh = bridge_design(z, v.x, opts.saturated, nullptr, "Z", v.xnames);
    ctx->use_h = true;
    push_block("h-bridge", hfit.coef, ctx->oh);
    est.diagnostics["h_cross_rcond"] = hfit.cross_rcond;
  }
  if (need_q) {
    IpcwOptions qopts = opts;
    qfit = fit_q(v, qopts);
    const Eigen::VectorXd w = v.w.array().isNaN().select(0.0, v.w);
    ctx->xq = bridge_design(z, v.x, opts.saturated, nullptr, "Z", v.xnames);
    ctx->gq = bridge_design(w, v.x, opts.saturated, nullptr, "W", v.xnames);
    ctx->alldata_q = opts.q_moment == QMomentForm::AllData;
    if (!ctx->alldata_q) {
      ctx->va = bridge_design(w, v.x, false, nullptr, "W", v.xnames);
      ctx->use_logistic = true;
      std::vector<double> lc = qfit.diagnostics["logit_coef"];
      Eigen::VectorXd lcv =
          Eigen::Map<Eigen::VectorXd>(lc.data(), static_cast<Eigen::Index>(lc.size()));
      push_block("study-logistic", lcv, ctx->ol);
    }
    ctx->use_q = true;
    push_block("q-bridge", qfit.coef, ctx->oq);
    est.diagnostics["q_cross_rcond"] = qfit.cross_rcond;
    if (qfit.diagnostics.contains("positivity_warning_records"))
      est.diagnostics["positivity_warning_records"] =
          qfit.diagnostics["positivity_warning_records"];
  }
  if (method == "tb" || method == "dr") {
    ctx->use_pi = true;
    Eigen::VectorXd pi(1);
    pi[0] = static_cast<double>(n0) / static_cast<double>(v.n());
    push_block("study-share", pi, ctx->opi);
  }

  // cascade value of the functional
  double p = 0.0;
  const double pi0 = static_cast<double>(n0) / static_cast<double>(v.n());
  Eigen::VectorXd yw = weighted_outcome(v, t, &censor, opts.floor);
  if (method == "ob") {
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.n(); ++i)
      if (v.study[i] == 0.0) s += hfit.fitted[i];
    p = s / static_cast<double>(n0);
  } else if (method == "tb") {
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.n(); ++i)
      if (v.study[i] == 1.0) s += qfit.fitted[i] * yw[i];
    p = s / static_cast<double>(v.n()) / pi0;
  } else {
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.n(); ++i) {
      if (v.study[i] == 1.0)
        s += qfit.fitted[i] * (yw[i] - hfit.fitted[i]);
      else
        s += hfit.fitted[i];
    }
    p = s / static_cast<double>(v.n()) / pi0;
  }
  Eigen::VectorXd pv(1);
  pv[0] = p;
  push_block("functional", pv, ctx->op);

  ctx->dim = static_cast<int>(init.size());
  est.p_index = ctx->dim - 1;
  est.init = Eigen::Map<Eigen::VectorXd>(init.data(),
                                         static_cast<Eigen::Index>(init.size()));
  est.system.dim = ctx->dim;
  est.system.n = static_cast<std::size_t>(v.n());
  est.system.psi = [ctx](std::size_t i, Eigen::Ref<const Eigen::VectorXd> th,
                         Eigen::Ref<Eigen::VectorXd> out) {
    ctx->psi(i, th, out);
  };
  return est;
}

namespace {

// Plug-in estimate with a Cox censoring model; inference by stratified
// bootstrap on the cloglog scale.
IncidenceEstimate cox_censoring_estimate(const DataView& v, double t,
                                         const std::string& method,
                                         const IpcwOptions& opts) {
  auto point = [&](const DataView& view) -> double {
    const CensorFit censor = fit_censoring(view, opts);
    const Eigen::VectorXd yw = weighted_outcome(view, t, &censor, opts.floor);
    const Eigen::Index n = view.n();
    Eigen::Index n0 = 0;
    for (Eigen::Index i = 0; i < n; ++i) n0 += view.study[i] == 0.0;
    const double pi0 = static_cast<double>(n0) / static_cast<double>(n);
    double s = 0.0;
    if (method == "ob") {
      const BridgeFit h = fit_h(view, t, &censor, opts);
      for (Eigen::Index i = 0; i < n; ++i)
        if (view.study[i] == 0.0) s += h.fitted[i];
      return s / static_cast<double>(n0);
    }
    if (method == "tb") {
      const BridgeFit q = fit_q(view, opts);
      for (Eigen::Index i = 0; i < n; ++i)
        if (view.study[i] == 1.0) s += q.fitted[i] * yw[i];
      return s / static_cast<double>(n) / pi0;
    }
    const BridgeFit h = fit_h(view, t, &censor, opts);
    const BridgeFit q = fit_q(view, opts);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (view.study[i] == 1.0)
        s += q.fitted[i] * (yw[i] - h.fitted[i]);
      else
        s += h.fitted[i];
    }
    return s / static_cast<double>(n) / pi0;
  };

  const double p = point(v);
  Eigen::Index n0 = 0;
  for (Eigen::Index i = 0; i < v.n(); ++i) n0 += v.study[i] == 0.0;

  double se_theta = std::numeric_limits<double>::quiet_NaN();
  int failed = 0;
  if (p > 0.0 && p < 1.0 && opts.bootstrap_reps >= 2) {
    std::vector<Eigen::Index> idx0, idx1;
    for (Eigen::Index i = 0; i < v.n(); ++i)
      (v.study[i] == 1.0 ? idx1 : idx0).push_back(i);
    std::vector<double> thetas;
    for (int r = 0; r < opts.bootstrap_reps; ++r) {
      Prng rng(derive_seed(opts.bootstrap_seed,
                           {hash_label("ipcw-cox-bootstrap"),
                            static_cast<std::uint64_t>(r)}));
      DataView bs;
      const Eigen::Index n = v.n();
      bs.time.resize(n);
      bs.event.resize(n);
      bs.study.resize(n);
      bs.arm.resize(n);
      bs.x.resize(n, v.x.cols());
      bs.xnames = v.xnames;
      bs.z.resize(v.z.size());
      bs.w.resize(v.w.size());
      Eigen::Index k = 0;
      auto take = [&](const std::vector<Eigen::Index>& pool) {
        for (std::size_t c = 0; c < pool.size(); ++c) {
          const auto j =
              pool[std::min(static_cast<std::size_t>(rng.u01() * double(pool.size())),
                            pool.size() - 1)];
          bs.time[k] = v.time[j];
          bs.event[k] = v.event[j];
          bs.study[k] = v.study[j];
          bs.arm[k] = v.arm[j];
          bs.x.row(k) = v.x.row(j);
          if (v.z.size() > 0) bs.z[k] = v.z[j];
          if (v.w.size() > 0) bs.w[k] = v.w[j];
          ++k;
        }
      };
      take(idx0);
      take(idx1);
      try {
        const double pb = point(bs);
        if (pb > 0.0 && pb < 1.0)
          thetas.push_back(cloglog(pb));
        else
          ++failed;
      } catch (const std::exception&) {
        ++failed;
      }
    }
    if (thetas.size() >= 2 &&
        thetas.size() * 2 >= static_cast<std::size_t>(opts.bootstrap_reps)) {
      const double nn = static_cast<double>(thetas.size());
      double mean = 0.0;
      for (double x : thetas) mean += x;
      mean /= nn;
      double ss = 0.0;
      for (double x : thetas) ss += (x - mean) * (x - mean);
      se_theta = std::sqrt(ss / (nn - 1.0));
    }
  }
  auto est = make_incidence_estimate(method, t, p, se_theta, n0, v.n() - n0,
                                     opts.level);
  est.diagnostics["censor_model"] = "cox-breslow";
  est.diagnostics["bootstrap_reps"] = opts.bootstrap_reps;
  est.diagnostics["bootstrap_failed"] = failed;
  return est;
}

IncidenceEstimate run_ipcw(const DataView& v, double t,
                           const std::string& method,
                           const IpcwOptions& opts) {
  if (opts.censor_model == CensorModelKind::CoxBreslow)
    return cox_censoring_estimate(v, t, method, opts);
  StackedEstimator est = build_ipcw_stack(v, t, method, opts);
  return finish_estimate(est, opts.level);
}

}  // namespace

IncidenceEstimate estimate_outcome_bridge(const DataView& v, double t,
                                          const IpcwOptions& opts) {
  return run_ipcw(v, t, "ob", opts);
}

IncidenceEstimate estimate_treatment_bridge(const DataView& v, double t,
                                            const IpcwOptions& opts) {
  return run_ipcw(v, t, "tb", opts);
}

IncidenceEstimate estimate_doubly_robust(const DataView& v, double t,
                                         const IpcwOptions& opts) {
  return run_ipcw(v, t, "dr", opts);
}

}  // namespace pcix
