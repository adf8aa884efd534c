#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "pcix/errors.hpp"
#include "pcix/naive.hpp"
#include "pcix/simulate.hpp"
#include "pcix/twostage.hpp"
#include "test_support.hpp"

using namespace pcix;
using pcix::testing::ToySpec;
using pcix::testing::toy_dataset;

TEST_CASE("stage-1 moments vanish and truncation leaves stage 1 untouched") {
  ToySpec s;
  s.n = 4000;
  s.seed = 21;
  const DataView v = make_view(toy_dataset(s));
  const StageOneFit s1 = fit_stage1(v, {});
  CHECK(s1.max_moment <= 1e-8);

  TwoStageOptions trunc;
  trunc.truncate_at = 365.0;
  const StageOneFit s1t = fit_stage1(v, trunc);
  CHECK((s1.coef - s1t.coef).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stage-1 Z coefficient vanishes when W carries no Z signal") {
  ToySpec s;
  s.n = 100000;
  s.seed = 22;
  s.p_w1 = [](int, int x) { return std::exp(-2.0 + 0.3 * x); };  // no U_b link
  const DataView v = make_view(toy_dataset(s));
  const StageOneFit s1 = fit_stage1(v, {});
  CHECK(std::fabs(s1.coef[2]) < 0.05);  // (1, R, Z, X) order
}

TEST_CASE("all-zero W is degenerate") {
  ToySpec s;
  s.n = 500;
  s.seed = 23;
  StudyDataset ds = toy_dataset(s);
  for (auto& r : ds.records) r.nco = 0;
  CHECK_THROWS_AS(fit_stage1(make_view(ds), {}), DegenerateError);
}

TEST_CASE("stage-1 fitted means track the analytic conditional means") {
  const auto cfg = make_dgp_config(dgp_cell("medium,medium"), 300000, 24, 3.0);
  const DataView v = make_view(generate(cfg));
  const StageOneFit s1 = fit_stage1(v, {});
  // compare on every (r, z, x1, x2) cell against the U_b-mixture oracle
  double worst = 0.0;
  for (int r = 0; r < 2; ++r)
    for (int z = 0; z < 2; ++z)
      for (int x1 = 0; x1 < 2; ++x1)
        for (int x2 = 0; x2 < 2; ++x2) {
          const double eta = s1.coef[0] + s1.coef[1] * r + s1.coef[2] * z +
                             s1.coef[3] * x1 + s1.coef[4] * x2;
          const double truth = dgp_mean_w(cfg, r, z, x1, x2);
          worst = std::max(worst, std::fabs(std::exp(eta) - truth));
        }
  CHECK(worst < 0.02);  // main-effects projection of the cell means
}

TEST_CASE("constant stage-2 regressor names the NCE as non-informative") {
  ToySpec s;
  s.n = 2000;
  s.seed = 25;
  s.with_x = false;
  StudyDataset ds = toy_dataset(s);
  for (auto& r : ds.records)
    if (r.study == 1) r.nce = 0;  // Z constant on the external study
  CHECK_THROWS_AS(
      estimate_twostage(make_view(ds), 365.0, {}),
      SingularError);
}

TEST_CASE("zero events inside the window is degenerate") {
  ToySpec s;
  s.n = 2000;
  s.seed = 26;
  const DataView v = make_view(toy_dataset(s));
  // truncate strictly before the first external event
  double first_event = 1e18;
  for (Eigen::Index i = 0; i < v.n(); ++i)
    if (v.study[i] == 1.0 && v.event[i] > 0.5)
      first_event = std::min(first_event, v.time[i]);
  TwoStageOptions opts;
  opts.truncate_at = first_event * 0.5;
  CHECK_THROWS_AS(estimate_twostage(v, first_event * 0.25, opts),
                  DegenerateError);
}

TEST_CASE("horizon above the truncation window is rejected") {
  ToySpec s;
  s.n = 500;
  s.seed = 27;
  const DataView v = make_view(toy_dataset(s));
  TwoStageOptions opts;
  opts.truncate_at = 200.0;
  CHECK_THROWS_AS(estimate_twostage(v, 365.0, opts), Error);
}

TEST_CASE("two-stage collapses to the marginal exponential when gamma_w = 0") {
  // W depends on Z directly so log What varies, but neither W nor Z touches
  // the event law: gamma_w -> 0 and the incidence is the marginal one.
  ToySpec s;
  s.n = 60000;
  s.seed = 28;
  s.with_x = false;
  s.p_w1 = [](int, int) { return 0.2; };
  s.event_rate = [](int, int) { return std::exp(-8.6); };
  StudyDataset ds = toy_dataset(s);
  Prng rng(99);
  for (auto& r : ds.records) {
    // W ~ Bern(exp(-2 + 0.8 Z)): stage-1 Z signal without confounding
    r.nco = static_cast<std::uint8_t>(
        rng.bernoulli(std::exp(-2.0 + 0.8 * double(*r.nce))));
  }
  const DataView v = make_view(ds);
  const IncidenceEstimate ts = estimate_twostage(v, 365.0, {});
  const double truth = 1.0 - std::exp(-std::exp(-8.6) * 365.0);
  CHECK(ts.valid);
  CHECK(std::fabs(ts.estimate - truth) < 0.004);

  // and matches the naive marginal fit
  const StackedEstimator naive = build_transport_stack(v, 365.0, {}, "naive");
  const IncidenceEstimate ne = finish_estimate(naive);
  CHECK(std::fabs(ts.estimate - ne.estimate) < 0.004);
}

TEST_CASE("two-stage estimates stay in (0,1) and grow with the horizon") {
  const auto cfg = make_dgp_config(dgp_cell("medium,medium"), 15000, 29, 3.0);
  const DataView v = make_view(generate(cfg));
  double prev = 0.0;
  for (double t : {90.0, 180.0, 365.0}) {
    const IncidenceEstimate e = estimate_twostage(v, t, {});
    CHECK(e.valid);
    CHECK(e.estimate > prev);
    prev = e.estimate;
  }
  TwoStageOptions w1y;
  w1y.truncate_at = 365.0;
  const IncidenceEstimate e1y = estimate_twostage(v, 365.0, w1y);
  CHECK(e1y.valid);
  CHECK(e1y.diagnostics["window"] == nlohmann::json(365.0));
}

TEST_CASE("naive and oracle share the transport pipeline") {
  ToySpec s;
  s.n = 30000;
  s.seed = 30;
  const StudyDataset ds = toy_dataset(s);

  // inject the latent cell as an ordinary covariate: estimates must match
  StudyDataset with_u = ds;
  with_u.schema.covariate_names = {"x", "ub"};
  for (auto& r : with_u.records) r.covariates.push_back(r.latent[0]);
  const DataView vu = make_view(with_u);
  const IncidenceEstimate via_naive = estimate_naive(vu, 365.0);

  const DataView v = make_view(ds);
  // rename the latent for the oracle path
  DataView v2 = v;
  v2.latent["u"] = v.latent.at("ub");
  const IncidenceEstimate via_oracle = estimate_oracle(v2, 365.0, "u");
  CHECK(via_naive.estimate == doctest::Approx(via_oracle.estimate).epsilon(1e-12));
  CHECK(via_naive.se_theta == doctest::Approx(via_oracle.se_theta).epsilon(1e-9));
}

TEST_CASE("oracle with a constant latent equals the naive fit") {
  ToySpec s;
  s.n = 8000;
  s.seed = 31;
  const StudyDataset ds = toy_dataset(s);
  DataView v = make_view(ds);
  v.latent["u"] = Eigen::VectorXd::Zero(v.n());
  // constant column makes the design singular
  CHECK_THROWS_AS(estimate_oracle(v, 365.0, "u"), SingularError);
}

TEST_CASE("exchangeable studies: naive matches the external KM incidence") {
  ToySpec s;
  s.n = 120000;
  s.seed = 32;
  s.p_r1 = [](int, int x) { return 0.3 + 0.1 * x; };     // R independent of U_b
  s.event_rate = [](int, int x) { return std::exp(-8.3 + 0.3 * x); };
  const StudyDataset ds = toy_dataset(s);
  const DataView v = make_view(ds);
  const IncidenceEstimate naive = estimate_naive(v, 365.0);
  const double truth = pcix::testing::toy_truth(s, 365.0);
  CHECK(std::fabs(naive.estimate - truth) < 0.004);
}
