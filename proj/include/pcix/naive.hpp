#pragma once

#include "pcix/dataset.hpp"
#include "pcix/estimate.hpp"
#include "pcix/stack.hpp"

namespace pcix {

enum class NaiveAdjust { XOnly, XZW };

// Baseline transport estimators assuming no unmeasured confounding:
// exponential PH fit on the external study with the chosen adjusters,
// averaged predicted incidence over the primary study.
StackedEstimator build_transport_stack(const DataView& v, double t,
                                       const std::vector<std::string>& adjusters,
                                       const std::string& method);

IncidenceEstimate estimate_naive(const DataView& v, double t,
                                 NaiveAdjust adjust = NaiveAdjust::XOnly,
                                 double level = 0.95);

// Simulation gold standard: adjusts for (X, U); requires the latent column.
IncidenceEstimate estimate_oracle(const DataView& v, double t,
                                  const std::string& latent_u = "u",
                                  double level = 0.95);

}  // namespace pcix
