#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "pcix/errors.hpp"
#include "pcix/inference.hpp"
#include "pcix/sensitivity.hpp"
#include "pcix/simulate.hpp"
#include "pcix/stats.hpp"
#include "test_support.hpp"

using namespace pcix;
using pcix::testing::ToySpec;
using pcix::testing::toy_dataset;

TEST_CASE("cloglog interval") {
  SUBCASE("zero SE collapses to the point") {
    const Interval ci = cloglog_ci(0.2, 0.0);
    CHECK(ci.lo == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(ci.hi == doctest::Approx(0.2).epsilon(1e-12));
  }

  SUBCASE("p = 0.035, se = 0.034: back-transform with swapped endpoints") {
    // independent arithmetic: theta = log(-log .035) = 1.2096786601733365,
    // z = 1.959963984540054, p = exp(-exp(theta -+ z se))
    const double theta = std::log(-std::log(0.035));
    const double z = 1.959963984540054;
    const double lo = std::exp(-std::exp(theta + z * 0.034));
    const double hi = std::exp(-std::exp(theta - z * 0.034));
    REQUIRE(lo == doctest::Approx(0.02778054770802332).epsilon(1e-12));
    REQUIRE(hi == doctest::Approx(0.04344376906716943).epsilon(1e-12));

    const Interval ci = cloglog_ci(0.035, 0.034, 0.95);
    CHECK(ci.lo == doctest::Approx(lo).epsilon(1e-12));
    CHECK(ci.hi == doctest::Approx(hi).epsilon(1e-12));
    CHECK(ci.lo < ci.hi);
    CHECK(ci.lo > 0.0);
    CHECK(ci.hi < 1.0);
  }

  SUBCASE("invalid point estimate is rejected") {
    CHECK_THROWS(cloglog_ci(0.0, 0.1));
    CHECK_THROWS(cloglog_ci(1.2, 0.1));
  }
}

TEST_CASE("efficacy arithmetic reproduces the reference values") {
  const EfficacyResult r = efficacy_from_incidences(0.0041, 0.055);
  char rel[16], abs_[16];
  std::snprintf(rel, sizeof rel, "%.3f", r.relative_efficacy);
  std::snprintf(abs_, sizeof abs_, "%.3f", r.absolute_efficacy);
  CHECK(std::string(rel) == "0.925");
  CHECK(std::string(abs_) == "0.051");
}

TEST_CASE("p-value is exactly 2 Phi(-|stat|)") {
  for (double s : {-2.3, -0.4, 0.0, 1.7, 3.9}) {
    CHECK(two_sided_pvalue(s) ==
          doctest::Approx(2.0 * normal_cdf(-std::fabs(s))).epsilon(1e-15));
  }
}

TEST_CASE("wald numerator is antisymmetric in the two incidences") {
  const EfficacyResult a = efficacy_from_incidences(0.01, 0.04);
  const EfficacyResult b = efficacy_from_incidences(0.04, 0.01);
  const double num_a = cloglog(a.arm_incidence) - cloglog(a.placebo_incidence);
  const double num_b = cloglog(b.arm_incidence) - cloglog(b.placebo_incidence);
  CHECK(num_a == doctest::Approx(-num_b).epsilon(1e-12));
}

TEST_CASE("joint sandwich equals independent SEs when blocks share no records") {
  // two disjoint samples, mean of each; the cross block of B must vanish
  Prng rng(40);
  const std::size_t n = 600;
  std::vector<double> xs(n), mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    mask[i] = i < n / 2 ? 1.0 : 0.0;
    xs[i] = rng.u01() + (mask[i] ? 0.0 : 2.0);
  }
  MomentSystem joint;
  joint.dim = 2;
  joint.n = n;
  joint.psi = [&](std::size_t i, Eigen::Ref<const Eigen::VectorXd> th, Eigen::Ref<Eigen::VectorXd> out) {
    out[0] = mask[i] * (xs[i] - th[0]);
    out[1] = (1.0 - mask[i]) * (xs[i] - th[1]);
  };
  const SolvedSystem sol = solve(joint, Eigen::VectorXd::Ones(2));
  const DeltaResult diff = delta_method(
      sol, [](const Eigen::VectorXd& th) { return th[0] - th[1]; });

  auto one_mean = [&](double keep) {
    MomentSystem sys;
    sys.dim = 1;
    sys.n = n;
    sys.psi = [&, keep](std::size_t i, Eigen::Ref<const Eigen::VectorXd> th,
                        Eigen::Ref<Eigen::VectorXd> out) {
      const double m = keep ? mask[i] : 1.0 - mask[i];
      out[0] = m * (xs[i] - th[0]);
    };
    return solve(sys, Eigen::VectorXd::Ones(1));
  };
  const SolvedSystem a = one_mean(true);
  const SolvedSystem b = one_mean(false);
  const double independent =
      std::sqrt(a.sandwich(0, 0) + b.sandwich(0, 0));
  CHECK(diff.se == doctest::Approx(independent).epsilon(1e-10));
}

TEST_CASE("efficacy test end to end on simulated data") {
  const auto cfg = make_dgp_config(dgp_cell("medium,medium"), 20000, 41, 3.0);
  const StudyDataset ds = generate(cfg);
  const DataView v = make_view(ds);

  EfficacyOptions eo;
  eo.method = "tsall";
  eo.t = 365.0;
  const EfficacyResult alt = efficacy_test(v, 1, eo);
  CHECK(alt.arm_incidence > 0.0);
  CHECK(alt.arm_incidence < alt.placebo_incidence);  // the active arm protects
  CHECK(alt.statistic > 0.0);  // cloglog decreases in p
  CHECK(alt.pvalue == doctest::Approx(two_sided_pvalue(alt.statistic)));

  const DataView vnull = null_arm_view(v);
  const EfficacyResult null_r = efficacy_test(vnull, 1, eo);
  CHECK(std::fabs(null_r.statistic) < std::fabs(alt.statistic));

  CHECK_THROWS_AS(
      [&] {
        EfficacyOptions bad = eo;
        bad.method = "km";
        return efficacy_test(v, 1, bad);
      }(),
      Error);
  CHECK_THROWS_AS(efficacy_test(v, 7, eo), DataError);
}

TEST_CASE("zero arm events degenerate the test") {
  ToySpec s;
  s.n = 3000;
  s.seed = 42;
  StudyDataset ds = toy_dataset(s);
  for (auto& r : ds.records)
    if (r.study == 0) r.event = 0;
  const DataView v = make_view(ds);
  EfficacyOptions eo;
  eo.method = "naive-x";
  eo.t = 365.0;
  CHECK_THROWS_AS(efficacy_test(v, 1, eo), DegenerateError);
}

TEST_CASE("gamma bounds") {
  IncidenceEstimate point = make_incidence_estimate("ob", 365, 0.04, 0.2, 10, 10);

  SUBCASE("gamma = 1 collapses to the point") {
    const auto b = gamma_bounds(point, {1.0});
    CHECK(b[0].lower == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(b[0].upper == doctest::Approx(0.04).epsilon(1e-12));
  }

  SUBCASE("gamma = 1.2 arithmetic") {
    const auto b = gamma_bounds(point, {1.2});
    CHECK(b[0].lower == doctest::Approx(0.04 / 1.44).epsilon(1e-12));
    CHECK(b[0].upper == doctest::Approx(0.0576).epsilon(1e-12));
    CHECK_FALSE(b[0].capped);
  }

  SUBCASE("bounds nest and cap at one") {
    const auto b = gamma_bounds(point, {1.0, 1.3, 2.0, 6.0});
    for (std::size_t i = 1; i < b.size(); ++i) {
      CHECK(b[i].lower <= b[i - 1].lower);
      CHECK(b[i].upper >= b[i - 1].upper);
    }
    CHECK(b[3].capped);
    CHECK(b[3].upper == 1.0);
  }

  SUBCASE("transformed-scale endpoints are swapped consistently") {
    const auto b = gamma_bounds(point, {1.5});
    CHECK(b[0].lower_cloglog == doctest::Approx(cloglog(b[0].upper)));
    CHECK(b[0].upper_cloglog == doctest::Approx(cloglog(b[0].lower)));
    CHECK(b[0].lower_cloglog < b[0].upper_cloglog);
  }

  SUBCASE("gamma below 1 and invalid points are rejected") {
    CHECK_THROWS(gamma_bounds(point, {0.8}));
    IncidenceEstimate bad = point;
    bad.valid = false;
    CHECK_THROWS(gamma_bounds(bad, {1.5}));
  }
}

TEST_CASE("proxy strength screen") {
  SUBCASE("null association flags a weak proxy") {
    int weak = 0;
    for (int rep = 0; rep < 10; ++rep) {
      ToySpec s;
      s.n = 20000;
      s.seed = 43 + static_cast<std::uint64_t>(rep);
      s.p_w1 = [](int, int x) { return std::exp(-2.0 + 0.3 * x); };
      const ProxyStrength ps = proxy_strength(make_view(toy_dataset(s)));
      CHECK(std::fabs(ps.odds_ratio - 1.0) < 0.2);
      weak += ps.weak;
    }
    CHECK(weak >= 8);  // the screen rejects at its nominal 5% rate
  }

  SUBCASE("simulated confounded cell is detected at n = 6500") {
    int detected = 0;
    for (int rep = 0; rep < 20; ++rep) {
      auto cfg = make_dgp_config(dgp_cell("medium,medium"), 6500,
                                 1000 + static_cast<std::uint64_t>(rep), 3.0);
      const ProxyStrength ps =
          proxy_strength(make_view(generate(cfg)), ProxyScope::Combined);
      detected += !ps.weak;
      // U_b raises W and lowers Z here, so the conditional OR sits below 1
      CHECK(ps.odds_ratio < 1.0);
    }
    CHECK(detected >= 19);
  }

  SUBCASE("constant W is degenerate") {
    ToySpec s;
    s.n = 500;
    s.seed = 44;
    StudyDataset ds = toy_dataset(s);
    for (auto& r : ds.records) r.nco = 1;
    CHECK_THROWS_AS(proxy_strength(make_view(ds)), DegenerateError);
  }
}
