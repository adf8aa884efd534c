#include "pcix/sensitivity.hpp"

#include <cmath>

#include "pcix/errors.hpp"
#include "pcix/glm.hpp"
#include "pcix/stats.hpp"

namespace pcix {

std::vector<GammaBound> gamma_bounds(const IncidenceEstimate& point,
                                     const std::vector<double>& gammas) {
  if (!point.valid)
    throw Error("gamma bounds require a valid point estimate in (0,1)");
  std::vector<GammaBound> out;
  out.reserve(gammas.size());
  for (double g : gammas) {
    if (g < 1.0) throw Error("gamma must be at least 1");
    GammaBound b;
    b.gamma = g;
    b.lower = point.estimate / (g * g);
    b.upper = point.estimate * g * g;
    if (b.upper > 1.0) {
      b.upper = 1.0;
      b.capped = true;
    }
    // log(-log p) decreases in p: endpoints swap on the transformed scale
    b.lower_cloglog = b.upper < 1.0 ? cloglog(b.upper)
                                    : -std::numeric_limits<double>::infinity();
    b.upper_cloglog = cloglog(b.lower);
    out.push_back(b);
  }
  return out;
}

ProxyStrength proxy_strength(const DataView& v, ProxyScope scope) {
  if (!v.has_z() || !v.has_w())
    throw DataError("proxy strength needs both NCE and NCO columns");
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < v.n(); ++i) {
    if (scope == ProxyScope::External && v.study[i] != 1.0) continue;
    if (std::isnan(v.z[i]) || std::isnan(v.w[i])) continue;
    bool ok = true;
    for (Eigen::Index j = 0; j < v.x.cols(); ++j)
      if (std::isnan(v.x(i, j))) ok = false;
    if (ok) rows.push_back(i);
  }
  if (rows.size() < 4) throw DataError("too few complete records for the screen");

  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd y(m);
  Eigen::MatrixXd d(m, 2 + v.x.cols());
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = rows[static_cast<std::size_t>(k)];
    y[k] = v.w[i];
    d(k, 0) = 1.0;
    d(k, 1) = v.z[i];
    d.block(k, 2, 1, v.x.cols()) = v.x.row(i);
  }
  GlmFit fit = fit_logistic(LogisticModel{y, d});

  ProxyStrength res;
  res.n_used = m;
  res.odds_ratio = std::exp(fit.coef[1]);
  const double se = std::sqrt(fit.model_cov(1, 1));
  res.pvalue = se > 0.0 ? two_sided_pvalue(fit.coef[1] / se) : 1.0;
  res.weak = res.pvalue >= 0.05;
  return res;
}

}  // namespace pcix
