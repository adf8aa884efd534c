#include "pcix/naive.hpp"

#include <cmath>
#include <memory>

#include "pcix/errors.hpp"
#include "pcix/glm.hpp"

namespace pcix {

namespace {

struct TransportCtx {
  double t = 0.0;
  Eigen::VectorXd time, event, study;
  Eigen::MatrixXd d;  // (1, adjusters), all records
  int pm = 0, op = 0;

  void psi(std::size_t i, Eigen::Ref<const Eigen::VectorXd> th,
           Eigen::Ref<Eigen::VectorXd> out) const {
    out.setZero();
    const auto ii = static_cast<Eigen::Index>(i);
    const double eta = d.row(ii).dot(th.segment(0, pm));
    if (study[ii] == 1.0) {
      const double resid = event[ii] - time[ii] * std::exp(eta);
      out.segment(0, pm) = d.row(ii).transpose() * resid;
    } else {
      out[op] = (1.0 - std::exp(-std::exp(eta) * t)) - th[op];
    }
  }
};

// resolves adjuster names against covariates, "nce", "nco", latent columns
Eigen::VectorXd adjuster_column(const DataView& v, const std::string& name) {
  for (std::size_t j = 0; j < v.xnames.size(); ++j)
    if (v.xnames[j] == name) return v.x.col(static_cast<Eigen::Index>(j));
  if (name == "nce") {
    if (!v.has_z()) throw DataError("dataset has no NCE column");
    return v.z;
  }
  if (name == "nco") {
    if (!v.has_w()) throw DataError("dataset has no NCO column");
    return v.w;
  }
  auto it = v.latent.find(name);
  if (it != v.latent.end()) return it->second;
  throw DataError("unknown adjuster '" + name + "'");
}

}  // namespace

StackedEstimator build_transport_stack(const DataView& v, double t,
                                       const std::vector<std::string>& adjusters,
                                       const std::string& method) {
  auto ctx = std::make_shared<TransportCtx>();
  ctx->t = t;
  ctx->time = v.time;
  ctx->event = v.event;
  ctx->study = v.study;
  const Eigen::Index n = v.n();
  ctx->d.resize(n, 1 + static_cast<Eigen::Index>(adjusters.size()));
  ctx->d.col(0).setOnes();
  for (std::size_t j = 0; j < adjusters.size(); ++j) {
    const Eigen::VectorXd col = adjuster_column(v, adjusters[j]);
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::isnan(col[i]))
        throw DataError("adjuster '" + adjusters[j] + "' has missing values");
    ctx->d.col(1 + static_cast<Eigen::Index>(j)) = col;
  }
  ctx->pm = static_cast<int>(ctx->d.cols());
  ctx->op = ctx->pm;

  Eigen::Index n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < n; ++i) (v.study[i] == 1.0 ? n1 : n0)++;
  if (n1 == 0) throw DataError("no external-study (R=1) records");
  if (n0 == 0) throw DataError("no primary-study (R=0) records");

  Eigen::VectorXd t1(n1), e1(n1);
  Eigen::MatrixXd d1(n1, ctx->d.cols());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (v.study[i] != 1.0) continue;
    t1[k] = v.time[i];
    e1[k] = v.event[i];
    d1.row(k) = ctx->d.row(i);
    ++k;
  }
  GlmFit glm = fit_exp_ph(ExpPhModel{t1, e1, d1});

  double p = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (v.study[i] != 0.0) continue;
    p += 1.0 - std::exp(-std::exp(ctx->d.row(i).dot(glm.coef)) * t);
  }
  p /= static_cast<double>(n0);

  StackedEstimator est;
  est.method = method;
  est.t = t;
  est.n0 = n0;
  est.n1 = n1;
  est.p_index = ctx->pm;
  est.init.resize(ctx->pm + 1);
  est.init.segment(0, ctx->pm) = glm.coef;
  est.init[ctx->pm] = p;
  est.system.dim = ctx->pm + 1;
  est.system.n = static_cast<std::size_t>(n);
  est.system.blocks = {{"outcome-model", ctx->pm}, {"functional", 1}};
  est.system.psi = [ctx](std::size_t i, Eigen::Ref<const Eigen::VectorXd> th,
                         Eigen::Ref<Eigen::VectorXd> out) {
    ctx->psi(i, th, out);
  };
  return est;
}

IncidenceEstimate estimate_naive(const DataView& v, double t,
                                 NaiveAdjust adjust, double level) {
  std::vector<std::string> adjusters = v.xnames;
  std::string method = "naive-x";
  if (adjust == NaiveAdjust::XZW) {
    adjusters.push_back("nce");
    adjusters.push_back("nco");
    method = "naive-xzw";
  }
  StackedEstimator est = build_transport_stack(v, t, adjusters, method);
  return finish_estimate(est, level);
}

IncidenceEstimate estimate_oracle(const DataView& v, double t,
                                  const std::string& latent_u, double level) {
  if (v.latent.find(latent_u) == v.latent.end())
    throw DataError("oracle estimator requires the latent column '" + latent_u +
                    "'");
  std::vector<std::string> adjusters = v.xnames;
  adjusters.push_back(latent_u);
  StackedEstimator est = build_transport_stack(v, t, adjusters, "oracle");
  return finish_estimate(est, level);
}

}  // namespace pcix
