#pragma once

#include <vector>

#include "pcix/dataset.hpp"
#include "pcix/estimate.hpp"

namespace pcix {

// Multiplicative sensitivity bound on the identified incidence under a
// bounded odds-ratio violation of the coarsened-confounder assumption.
struct GammaBound {
  double gamma = 1.0;
  double lower = 0.0, upper = 0.0;          // probability scale
  double lower_cloglog = 0.0, upper_cloglog = 0.0;
  bool capped = false;                      // upper hit 1
};

// outcome / treatment methods scale by gamma^2 of their own bound constant;
// the doubly robust display uses min(Gamma1, Gamma2)^2, which for a shared
// gamma grid is gamma^2 as well.
std::vector<GammaBound> gamma_bounds(const IncidenceEstimate& point,
                                     const std::vector<double>& gammas);

enum class ProxyScope { External, Combined };

struct ProxyStrength {
  double odds_ratio = 1.0;  // association of Z with W given X
  double pvalue = 1.0;
  bool weak = false;  // p >= 0.05
  Eigen::Index n_used = 0;
};

// Logistic regression of W on (Z, X); the recommended pre-analysis screen.
ProxyStrength proxy_strength(const DataView& v,
                             ProxyScope scope = ProxyScope::External);

}  // namespace pcix
