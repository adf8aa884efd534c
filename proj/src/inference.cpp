#include "pcix/inference.hpp"

#include <cmath>
#include <memory>

#include "pcix/errors.hpp"
#include "pcix/glm.hpp"
#include "pcix/naive.hpp"
#include "pcix/stats.hpp"

namespace pcix {

Interval cloglog_ci(double p, double se_theta, double level) {
  if (!(p > 0.0 && p < 1.0))
    throw Error("cloglog interval undefined for an estimate outside (0,1)");
  const double z = normal_quantile(0.5 + level / 2.0);
  const double theta = cloglog(p);
  // decreasing transform: upper theta gives the lower probability bound
  Interval out;
  out.lo = inv_cloglog(theta + z * se_theta);
  out.hi = inv_cloglog(theta - z * se_theta);
  return out;
}

EfficacyResult efficacy_from_incidences(double p_arm, double p_placebo) {
  EfficacyResult r;
  r.arm_incidence = p_arm;
  r.placebo_incidence = p_placebo;
  r.relative_efficacy = 1.0 - p_arm / p_placebo;
  r.absolute_efficacy = p_placebo - p_arm;
  return r;
}

nlohmann::json EfficacyResult::to_json() const {
  return {{"arm", arm},
          {"method", method},
          {"arm_incidence", arm_incidence},
          {"placebo_incidence", placebo_incidence},
          {"rel_eff", relative_efficacy},
          {"abs_eff", absolute_efficacy},
          {"stat", statistic},
          {"pvalue", pvalue}};
}

StackedEstimator build_placebo_stack(const DataView& v, double t,
                                     const std::string& method,
                                     const IpcwOptions& ipcw,
                                     const TwoStageOptions& ts) {
  if (method == "ob" || method == "tb" || method == "dr")
    return build_ipcw_stack(v, t, method, ipcw);
  if (method == "ts1y" || method == "tsall") {
    TwoStageOptions opts = ts;
    if (method == "ts1y")
      opts.truncate_at = t;
    else
      opts.truncate_at.reset();
    return build_twostage_stack(v, t, opts);
  }
  if (method == "naive-x")
    return build_transport_stack(v, t, v.xnames, "naive-x");
  if (method == "naive-xzw") {
    auto adj = v.xnames;
    adj.push_back("nce");
    adj.push_back("nco");
    return build_transport_stack(v, t, adj, "naive-xzw");
  }
  if (method == "oracle") {
    auto adj = v.xnames;
    adj.push_back("u");
    return build_transport_stack(v, t, adj, "oracle");
  }
  throw Error("method '" + method + "' has no stacked-moment form");
}

namespace {

struct JointCtx {
  MomentSystem placebo;
  int pdim = 0;
  double t = 0.0, floor = 1e-6;
  Eigen::VectorXd time, event, mask;  // mask = 1 on the tested arm
  Eigen::MatrixXd va;                 // (1, X)
  int oc = 0, oa = 0;

  void psi(std::size_t i, Eigen::Ref<const Eigen::VectorXd> th,
           Eigen::Ref<Eigen::VectorXd> out) const {
    out.tail(out.size() - pdim).setZero();
    placebo.psi(i, th.head(pdim), out.head(pdim));
    const auto ii = static_cast<Eigen::Index>(i);
    if (mask[ii] == 1.0) {
      const double eta = va.row(ii).dot(th.segment(oc, va.cols()));
      const double resid = (1.0 - event[ii]) - time[ii] * std::exp(eta);
      out.segment(oc, va.cols()) = va.row(ii).transpose() * resid;
      double ya = 0.0;
      if (event[ii] > 0.5 && time[ii] <= t) {
        const double sc = std::exp(-time[ii] * std::exp(eta));
        ya = 1.0 / std::max(sc, floor);
      }
      out[oa] = ya - th[oa];
    }
  }
};

}  // namespace

EfficacyResult efficacy_test(const DataView& v, int arm,
                             const EfficacyOptions& opts) {
  bool arm_present = false;
  int arm_events = 0;
  for (Eigen::Index i = 0; i < v.n(); ++i) {
    if (v.study[i] == 0.0 && v.arm[i] == arm) {
      arm_present = true;
      if (v.event[i] > 0.5 && v.time[i] <= opts.t) ++arm_events;
    }
  }
  if (!arm_present) throw DataError("arm not present in the primary study");
  if (arm_events == 0)
    throw DegenerateError("zero arm events by the horizon; efficacy test is "
                          "degenerate");

  StackedEstimator placebo =
      build_placebo_stack(v, opts.t, opts.method, opts.ipcw, opts.twostage);

  auto ctx = std::make_shared<JointCtx>();
  ctx->placebo = placebo.system;
  ctx->pdim = placebo.system.dim;
  ctx->t = opts.t;
  ctx->floor = opts.ipcw.floor;
  ctx->time = v.time;
  ctx->event = v.event;
  ctx->mask.resize(v.n());
  for (Eigen::Index i = 0; i < v.n(); ++i)
    ctx->mask[i] = (v.study[i] == 0.0 && v.arm[i] == arm) ? 1.0 : 0.0;
  ctx->va.resize(v.n(), 1 + v.x.cols());
  ctx->va.col(0).setOnes();
  ctx->va.rightCols(v.x.cols()) = v.x;
  ctx->oc = ctx->pdim;
  ctx->oa = ctx->pdim + static_cast<int>(ctx->va.cols());

  // arm censoring fit + arm incidence moment, as the cascade init
  Eigen::Index na = 0;
  for (Eigen::Index i = 0; i < v.n(); ++i) na += ctx->mask[i] == 1.0;
  Eigen::VectorXd ta(na), ea(na);
  Eigen::MatrixXd da(na, ctx->va.cols());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < v.n(); ++i) {
    if (ctx->mask[i] != 1.0) continue;
    ta[k] = v.time[i];
    ea[k] = v.event[i];
    da.row(k) = ctx->va.row(i);
    ++k;
  }
  Eigen::VectorXd cens_event = Eigen::VectorXd::Ones(na) - ea;
  GlmFit cens = fit_exp_ph(ExpPhModel{ta, cens_event, da});
  double pa = 0.0;
  for (Eigen::Index i = 0; i < na; ++i) {
    if (ea[i] > 0.5 && ta[i] <= opts.t) {
      const double sc = std::exp(-ta[i] * std::exp(da.row(i).dot(cens.coef)));
      pa += 1.0 / std::max(sc, opts.ipcw.floor);
    }
  }
  pa /= static_cast<double>(na);

  const int dim = ctx->oa + 1;
  MomentSystem joint;
  joint.dim = dim;
  joint.n = placebo.system.n;
  joint.blocks = placebo.system.blocks;
  joint.blocks.push_back({"arm-censoring", static_cast<int>(ctx->va.cols())});
  joint.blocks.push_back({"arm-incidence", 1});
  joint.psi = [ctx](std::size_t i, Eigen::Ref<const Eigen::VectorXd> th,
                    Eigen::Ref<Eigen::VectorXd> out) { ctx->psi(i, th, out); };

  Eigen::VectorXd init(dim);
  init.head(ctx->pdim) = placebo.init;
  init.segment(ctx->oc, ctx->va.cols()) = cens.coef;
  init[ctx->oa] = pa;

  SolvedSystem sol = solve(joint, init);
  const double p0 = sol.theta[placebo.p_index];
  const double pa_hat = sol.theta[ctx->oa];
  if (!(p0 > 0.0 && p0 < 1.0))
    throw Error("placebo estimate outside (0,1); efficacy test unavailable");
  if (!(pa_hat > 0.0 && pa_hat < 1.0))
    throw Error("arm estimate outside (0,1); efficacy test unavailable");

  const int i0 = placebo.p_index;
  const int ia = ctx->oa;
  DeltaResult d = delta_method(
      sol,
      [i0, ia](const Eigen::VectorXd& th) {
        return cloglog(th[ia]) - cloglog(th[i0]);
      },
      [i0, ia](const Eigen::VectorXd& th) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(th.size());
        g[ia] = cloglog_deriv(th[ia]);
        g[i0] = -cloglog_deriv(th[i0]);
        return g;
      });

  EfficacyResult res = efficacy_from_incidences(pa_hat, p0);
  res.arm = arm;
  res.method = opts.method;
  res.statistic = d.se > 0.0 ? d.value / d.se : 0.0;
  res.pvalue = d.se > 0.0 ? two_sided_pvalue(res.statistic) : 1.0;
  return res;
}

}  // namespace pcix
