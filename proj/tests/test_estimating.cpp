#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "pcix/errors.hpp"
#include "pcix/estimating.hpp"
#include "pcix/rng.hpp"
#include "pcix/stats.hpp"

using namespace pcix;

namespace {

MomentSystem mean_system(const std::vector<double>& xs) {
  MomentSystem sys;
  sys.dim = 1;
  sys.n = xs.size();
  sys.psi = [xs](std::size_t i, Eigen::Ref<const Eigen::VectorXd> th, Eigen::Ref<Eigen::VectorXd> out) {
    out[0] = xs[i] - th[0];
  };
  return sys;
}

}  // namespace

TEST_CASE("mean as an estimating equation; sandwich equals textbook variance") {
  Prng rng(1);
  std::vector<double> xs(257);  // deliberately not a multiple of the block size
  for (auto& x : xs) x = rng.u01() * 10;
  const MomentSystem sys = mean_system(xs);
  const SolvedSystem sol = solve(sys, Eigen::VectorXd::Zero(1));

  double mean = 0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  CHECK(sol.theta[0] == doctest::Approx(mean).epsilon(1e-9));

  // brute-force mean((x - xbar)^2) / n
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double textbook = ss / xs.size() / xs.size();
  CHECK(sol.sandwich(0, 0) == doctest::Approx(textbook).epsilon(1e-9));
  CHECK(sol.resid_norm <= 1e-8);
}

TEST_CASE("two-block stacked system equals the sequential two-stage answer") {
  Prng rng(2);
  const std::size_t n = 500;
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = rng.u01() + 0.5;
    ys[i] = rng.u01() * 2;
  }
  MomentSystem sys;
  sys.dim = 2;
  sys.n = n;
  sys.psi = [&](std::size_t i, Eigen::Ref<const Eigen::VectorXd> th, Eigen::Ref<Eigen::VectorXd> out) {
    out[0] = xs[i] - th[0];
    out[1] = ys[i] * th[0] - th[1];
  };
  Eigen::VectorXd init(2);
  init << 1.0, 1.0;
  const SolvedSystem sol = solve(sys, init);

  double xbar = 0, ybar = 0;
  for (std::size_t i = 0; i < n; ++i) {
    xbar += xs[i];
    ybar += ys[i];
  }
  xbar /= n;
  ybar /= n;
  CHECK(sol.theta[0] == doctest::Approx(xbar).epsilon(1e-10));
  CHECK(sol.theta[1] == doctest::Approx(ybar * xbar).epsilon(1e-10));
}

TEST_CASE("two different starts agree to 1e-6") {
  Prng rng(3);
  const std::size_t n = 400;
  std::vector<double> xs(n);
  for (auto& x : xs) x = rng.u01();
  // a smooth nonlinear system: mean exp(theta x) = target
  double target = 0;
  for (double x : xs) target += std::exp(0.7 * x);
  target /= n;
  MomentSystem sys;
  sys.dim = 1;
  sys.n = n;
  sys.psi = [&](std::size_t i, Eigen::Ref<const Eigen::VectorXd> th, Eigen::Ref<Eigen::VectorXd> out) {
    out[0] = std::exp(th[0] * xs[i]) - target;
  };
  SolveOptions opts;
  opts.compute_sandwich = false;
  const SolvedSystem a = solve(sys, Eigen::VectorXd::Zero(1), opts);
  Eigen::VectorXd init2(1);
  init2 << 2.0;
  const SolvedSystem b = solve(sys, init2, opts);
  CHECK(std::fabs(a.theta[0] - b.theta[0]) < 1e-6);
  CHECK(a.theta[0] == doctest::Approx(0.7).epsilon(1e-6));
}

TEST_CASE("separable logistic score system does not converge") {
  // mixed covariate scales keep the score alive until the iterates diverge
  const std::size_t n = 40;
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mag = (i % 4 == 0) ? 0.05 : 1.0;
    xs[i] = (i < n / 2 ? -1.0 : 1.0) * mag;
    ys[i] = i < n / 2 ? 0.0 : 1.0;  // perfectly separated
  }
  MomentSystem sys;
  sys.dim = 1;
  sys.n = n;
  sys.psi = [&](std::size_t i, Eigen::Ref<const Eigen::VectorXd> th,
                Eigen::Ref<Eigen::VectorXd> out) {
    out[0] = xs[i] * (ys[i] - 1.0 / (1.0 + std::exp(-th[0] * xs[i])));
  };
  CHECK_THROWS_AS(solve(sys, Eigen::VectorXd::Zero(1)), SolveFailure);
}

TEST_CASE("singular Jacobian carries a condition diagnostic") {
  MomentSystem sys;
  sys.dim = 2;
  sys.n = 10;
  sys.psi = [](std::size_t, Eigen::Ref<const Eigen::VectorXd> th, Eigen::Ref<Eigen::VectorXd> out) {
    out[0] = th[0] + th[1] - 1.0;
    out[1] = 2.0 * (th[0] + th[1]) - 2.0;  // dependent rows
  };
  Eigen::VectorXd init = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(solve(sys, init), SingularError);
}

TEST_CASE("delta method") {
  Prng rng(4);
  std::vector<double> xs(300);
  for (auto& x : xs) x = 0.03 + 0.01 * rng.u01();
  const SolvedSystem sol = solve(mean_system(xs), Eigen::VectorXd::Ones(1) * 0.03);

  SUBCASE("identity transform returns sqrt of the diagonal") {
    const DeltaResult d =
        delta_method(sol, [](const Eigen::VectorXd& th) { return th[0]; });
    CHECK(d.se == doctest::Approx(std::sqrt(sol.sandwich(0, 0))).epsilon(1e-9));
  }

  SUBCASE("cloglog value at 0.035 and gradient agreement") {
    // force the solution to the reference point
    SolvedSystem at = sol;
    at.theta[0] = 0.035;
    const DeltaResult numeric = delta_method(
        at, [](const Eigen::VectorXd& th) { return cloglog(th[0]); });
    CHECK(numeric.value == doctest::Approx(1.2096786601733365).epsilon(1e-12));
    const DeltaResult analytic = delta_method(
        at, [](const Eigen::VectorXd& th) { return cloglog(th[0]); },
        [](const Eigen::VectorXd& th) {
          Eigen::VectorXd g(1);
          g[0] = cloglog_deriv(th[0]);  // 1 / (p log p)
          return g;
        });
    CHECK(numeric.gradient[0] ==
          doctest::Approx(analytic.gradient[0]).epsilon(1e-6));
    CHECK(numeric.se == doctest::Approx(analytic.se).epsilon(1e-6));
  }

  SUBCASE("non-finite transform is an error") {
    SolvedSystem at = sol;
    at.theta[0] = -0.2;
    CHECK_THROWS(delta_method(
        at, [](const Eigen::VectorXd& th) { return cloglog(th[0]); }));
  }
}

namespace {

StudyDataset bootstrap_dataset(int n0, int n1, std::uint64_t seed) {
  StudyDataset ds;
  ds.schema.covariate_names = {"x"};
  Prng rng(seed);
  for (int i = 0; i < n0 + n1; ++i) {
    SubjectRecord r;
    r.study = i >= n0;
    r.arm = r.study == 1 ? 0 : 1;
    r.time = 1.0;
    r.covariates = {rng.u01() * 4};
    ds.records.push_back(r);
  }
  return ds;
}

}  // namespace

TEST_CASE("bootstrap") {
  const StudyDataset ds = bootstrap_dataset(150, 100, 5);

  SUBCASE("SE of the sample mean is close to sd/sqrt(n)") {
    auto mean_est = [](const StudyDataset& d) {
      double s = 0;
      for (const auto& r : d.records) s += r.covariates[0];
      return s / d.records.size();
    };
    const BootstrapResult b = bootstrap(mean_est, ds, 2000, 9);
    double m = 0;
    for (const auto& r : ds.records) m += r.covariates[0];
    m /= ds.records.size();
    double ss = 0;
    for (const auto& r : ds.records) {
      const double c = r.covariates[0] - m;
      ss += c * c;
    }
    const double ref = std::sqrt(ss / (ds.records.size() - 1.0)) /
                       std::sqrt(double(ds.records.size()));
    CHECK(std::fabs(b.se - ref) / ref < 0.15);
    CHECK(b.lo < m);
    CHECK(b.hi > m);
  }

  SUBCASE("constant estimator has zero SE") {
    const BootstrapResult b =
        bootstrap([](const StudyDataset&) { return 3.5; }, ds, 50, 1);
    CHECK(b.se == 0.0);
  }

  SUBCASE("same seed twice is bit-identical") {
    auto est = [](const StudyDataset& d) {
      double s = 0;
      for (const auto& r : d.records) s += r.covariates[0] * r.covariates[0];
      return s / d.records.size();
    };
    const BootstrapResult b1 = bootstrap(est, ds, 200, 17);
    const BootstrapResult b2 = bootstrap(est, ds, 200, 17);
    CHECK(b1.se == b2.se);
    CHECK(b1.lo == b2.lo);
    CHECK(b1.hi == b2.hi);
  }

  SUBCASE("strata keep their sizes in every replicate") {
    auto check_sizes = [&](const StudyDataset& d) {
      int s0 = 0, s1 = 0;
      for (const auto& r : d.records) (r.study == 1 ? s1 : s0)++;
      if (s0 != 150 || s1 != 100) throw Error("stratum size changed");
      return 0.0;
    };
    const BootstrapResult b = bootstrap(check_sizes, ds, 100, 3);
    CHECK(b.failed == 0);
  }

  SUBCASE("mostly-failing estimator raises bootstrap-unstable") {
    auto flaky = [](const StudyDataset&) -> double { throw Error("nope"); };
    bool unstable = false;
    try {
      bootstrap(flaky, ds, 50, 3);
    } catch (const Error& e) {
      unstable = std::string(e.what()).find("bootstrap unstable") !=
                 std::string::npos;
    }
    CHECK(unstable);
  }

  SUBCASE("fewer than two replicates is rejected") {
    CHECK_THROWS(bootstrap([](const StudyDataset&) { return 0.0; }, ds, 1, 1));
  }
}
