#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>

#include "pcix/dataset.hpp"
#include "pcix/estimate.hpp"
#include "pcix/stack.hpp"
#include "pcix/survival.hpp"

namespace pcix {

enum class QMomentForm { External, AllData };
enum class CensorModelKind { Exponential, CoxBreslow };

struct IpcwOptions {
  double level = 0.95;
  QMomentForm q_moment = QMomentForm::External;
  CensorModelKind censor_model = CensorModelKind::Exponential;
  bool saturated = false;   // tensor-expand bridges and instruments
  double floor = 1e-6;      // censoring-survival floor
  int bootstrap_reps = 1000;  // Cox censoring model has bootstrap-only SEs
  std::uint64_t bootstrap_seed = 1;
};

// Censoring-survival model fitted on the external study, censoring as the
// event, with (Z, X) as covariates.
struct CensorFit {
  CensorModelKind kind = CensorModelKind::Exponential;
  std::optional<ExpPhFit> exponential;
  std::optional<CoxFit> cox;
  Eigen::VectorXd surv_at_t;  // per record, at its own T; 1 outside R=1
  int floored = 0;            // records hitting the floor
  int beyond_last = 0;        // Cox: evaluations past the last step
};

CensorFit fit_censoring(const DataView& v, const IpcwOptions& opts = {});

struct BridgeSpec {
  enum Kind { OutcomeH, TreatmentQ } kind = OutcomeH;
  bool saturated = false;
  std::vector<std::string> regressors;   // column labels, for reporting
  std::vector<std::string> instruments;
};

struct BridgeFit {
  BridgeSpec spec;
  Eigen::VectorXd coef;
  Eigen::VectorXd fitted;    // h(W,X) or q(Z,X) for every record
  double max_moment = 0.0;   // external moment residual at the fit
  double cross_rcond = 0.0;  // instrument-regressor cross-moment condition
  nlohmann::json diagnostics = nlohmann::json::object();
};

// Outcome bridge: solves, over R=1 records,
//   mean[ g_h(Z,X) (Delta I(T<=t)/Sc(T;Z,X) - h(W,X)) ] = 0.
// Pass censor = nullptr to take Sc identically 1.
BridgeFit fit_h(const DataView& v, double t, const CensorFit* censor,
                const IpcwOptions& opts = {});

// Treatment bridge. The external form first fits logistic P(R=1|W,X) on the
// combined data and matches q against the implied odds over R=1; the
// all-data form solves mean[ g_q(W,X)(R q(Z,X) - (1-R)) ] = 0 directly.
BridgeFit fit_q(const DataView& v, const IpcwOptions& opts = {});

// Full stacked systems (censoring + bridges + functional) for the three
// identification forms; method is "ob", "tb" or "dr".
StackedEstimator build_ipcw_stack(const DataView& v, double t,
                                  const std::string& method,
                                  const IpcwOptions& opts = {});

IncidenceEstimate estimate_outcome_bridge(const DataView& v, double t,
                                          const IpcwOptions& opts = {});
IncidenceEstimate estimate_treatment_bridge(const DataView& v, double t,
                                            const IpcwOptions& opts = {});
IncidenceEstimate estimate_doubly_robust(const DataView& v, double t,
                                         const IpcwOptions& opts = {});

}  // namespace pcix
