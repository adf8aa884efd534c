#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "pcix/errors.hpp"
#include "pcix/glm.hpp"
#include "pcix/rng.hpp"
#include "pcix/survival.hpp"

using namespace pcix;

namespace {

// central finite differences of a scalar function
template <class F>
Eigen::VectorXd fd_gradient(const F& f, const Eigen::VectorXd& x,
                            double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd p = x, m = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double step = h * std::max(1.0, std::fabs(x[j]));
    p[j] += step;
    m[j] -= step;
    g[j] = (f(p) - f(m)) / (2 * step);
    p[j] = x[j];
    m[j] = x[j];
  }
  return g;
}

struct SimData {
  Eigen::VectorXd time, event;
  Eigen::MatrixXd design;  // (1, x)
};

SimData two_group_exponential(int n, double rate0, double rate1,
                              double cens_rate, std::uint64_t seed) {
  SimData d;
  d.time.resize(n);
  d.event.resize(n);
  d.design.resize(n, 2);
  Prng rng(seed);
  for (int i = 0; i < n; ++i) {
    const int g = rng.bernoulli(0.5);
    const double t = rng.exponential(g ? rate1 : rate0);
    const double c = cens_rate > 0 ? rng.exponential(cens_rate) : 1e18;
    d.time[i] = std::min(t, c);
    d.event[i] = t <= c ? 1.0 : 0.0;
    d.design(i, 0) = 1.0;
    d.design(i, 1) = g;
  }
  return d;
}

}  // namespace

TEST_CASE("exponential fit closed forms") {
  SUBCASE("rate = events / exposure") {
    // 10 subjects, total time 100, 4 events
    Eigen::VectorXd time(10), event(10);
    time.setConstant(10.0);
    event.setZero();
    for (int i = 0; i < 4; ++i) event[i] = 1.0;
    Eigen::MatrixXd design = Eigen::MatrixXd::Ones(10, 1);
    const ExpPhFit fit = fit_exponential(time, event, design);
    CHECK(fit.glm.coef[0] == doctest::Approx(std::log(0.04)).epsilon(1e-10));
  }

  SUBCASE("no censoring: rate equals 1/mean(T)") {
    Prng rng(21);
    Eigen::VectorXd time(500), event = Eigen::VectorXd::Ones(500);
    for (int i = 0; i < 500; ++i) time[i] = rng.exponential(0.02);
    Eigen::MatrixXd design = Eigen::MatrixXd::Ones(500, 1);
    const ExpPhFit fit = fit_exponential(time, event, design);
    CHECK(std::exp(fit.glm.coef[0]) ==
          doctest::Approx(1.0 / time.mean()).epsilon(1e-10));
  }

  SUBCASE("two-group rate ratio recovers ln 3 at large n") {
    const SimData d = two_group_exponential(100000, 0.01, 0.03, 0.0, 33);
    const ExpPhFit fit = fit_exponential(d.time, d.event, d.design);
    CHECK(fit.glm.coef[1] == doctest::Approx(std::log(3.0)).epsilon(0.03));
  }

  SUBCASE("zero events is degenerate") {
    Eigen::VectorXd time = Eigen::VectorXd::Ones(5);
    Eigen::VectorXd event = Eigen::VectorXd::Zero(5);
    CHECK_THROWS_AS(fit_exponential(time, event, Eigen::MatrixXd::Ones(5, 1)),
                    DegenerateError);
  }

  SUBCASE("rank-deficient design is singular") {
    Eigen::VectorXd time = Eigen::VectorXd::Ones(6);
    Eigen::VectorXd event = Eigen::VectorXd::Ones(6);
    Eigen::MatrixXd design(6, 2);
    design.col(0).setOnes();
    design.col(1).setOnes();  // duplicate of the intercept
    CHECK_THROWS_AS(fit_exponential(time, event, design), SingularError);
  }
}

TEST_CASE("scores match finite differences of the log likelihoods") {
  Prng rng(4);
  const int n = 300;
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd time(n), y01(n), w(n);
  for (int i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = rng.u01() * 2 - 1;
    design(i, 2) = rng.bernoulli(0.4);
    time[i] = rng.exponential(0.05);
    y01[i] = rng.bernoulli(0.3);
    w[i] = rng.bernoulli(0.2);
  }
  Eigen::VectorXd theta(3);
  theta << -2.5, 0.4, -0.7;

  SUBCASE("exponential PH") {
    const ExpPhModel m{time, y01, design};
    const Eigen::VectorXd g = m.score(theta);
    const Eigen::VectorXd gfd =
        fd_gradient([&](const Eigen::VectorXd& t) { return m.loglik(t); }, theta);
    CHECK((g - gfd).norm() / g.norm() < 1e-6);
    // Hessian column check against score differences
    const Eigen::MatrixXd H = m.hessian(theta);
    Eigen::VectorXd tp = theta;
    tp[1] += 1e-5;
    Eigen::VectorXd tm = theta;
    tm[1] -= 1e-5;
    const Eigen::VectorXd col = (m.score(tp) - m.score(tm)) / 2e-5;
    CHECK((H.col(1) - col).norm() / col.norm() < 1e-5);
  }

  SUBCASE("logistic") {
    const LogisticModel m{y01, design};
    const Eigen::VectorXd g = m.score(theta);
    const Eigen::VectorXd gfd =
        fd_gradient([&](const Eigen::VectorXd& t) { return m.loglik(t); }, theta);
    CHECK((g - gfd).norm() / (1 + g.norm()) < 1e-6);
  }

  SUBCASE("log-linear") {
    const PoissonModel m{w, design};
    const Eigen::VectorXd g = m.score(theta);
    const Eigen::VectorXd gfd =
        fd_gradient([&](const Eigen::VectorXd& t) { return m.loglik(t); }, theta);
    CHECK((g - gfd).norm() / (1 + g.norm()) < 1e-6);
  }
}

TEST_CASE("logistic separation raises a convergence error") {
  const int n = 40;
  Eigen::VectorXd y(n);
  Eigen::MatrixXd d(n, 2);
  for (int i = 0; i < n; ++i) {
    d(i, 0) = 1.0;
    d(i, 1) = i < n / 2 ? -1.0 : 1.0;
    y[i] = i < n / 2 ? 0.0 : 1.0;  // perfectly separated
  }
  CHECK_THROWS_AS(fit_logistic(LogisticModel{y, d}), ConvergenceError);
}

TEST_CASE("Cox fit") {
  SUBCASE("single binary covariate recovers ln 2 under HR 2") {
    const SimData d = two_group_exponential(60000, 0.005, 0.01, 0.004, 55);
    const Eigen::MatrixXd x = d.design.col(1);
    const CoxFit fit = fit_cox(d.time, d.event, x);
    CHECK(fit.beta[0] == doctest::Approx(std::log(2.0)).epsilon(0.05));
    CHECK(fit.max_score < 1e-9 * d.time.size());
  }

  SUBCASE("constant covariate is singular") {
    Eigen::VectorXd time(6), event = Eigen::VectorXd::Ones(6);
    for (int i = 0; i < 6; ++i) time[i] = i + 1.0;
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(6, 1);
    CHECK_THROWS_AS(fit_cox(time, event, x), SingularError);
  }

  SUBCASE("censoring-as-event with no censored records is degenerate") {
    Eigen::VectorXd time(5), event = Eigen::VectorXd::Ones(5);
    for (int i = 0; i < 5; ++i) time[i] = i + 1.0;
    Eigen::MatrixXd x(5, 1);
    x << 0, 1, 0, 1, 0;
    CHECK_THROWS_AS(fit_cox(time, event, x, CoxOutcome::CensoringAsEvent),
                    DegenerateError);
  }

  SUBCASE("matches a brute-force 1-D partial likelihood maximizer") {
    const SimData d = two_group_exponential(400, 0.01, 0.02, 0.01, 77);
    const Eigen::MatrixXd x = d.design.col(1);
    const CoxFit fit = fit_cox(d.time, d.event, x);

    // independent 1-D solver: bisection on the partial-likelihood score
    auto score1d = [&](double b) {
      // descending-time sweep with running risk sums
      std::vector<int> order(d.time.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(),
                [&](int a, int c) { return d.time[a] > d.time[c]; });
      double s0 = 0, s1 = 0, sc = 0;
      std::size_t i = 0;
      while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() &&
               d.time[order[j]] == d.time[order[i]]) {
          const double xv = x(order[j], 0);
          const double w = std::exp(b * xv);
          s0 += w;
          s1 += w * xv;
          ++j;
        }
        for (std::size_t k = i; k < j; ++k)
          if (d.event[order[k]] > 0.5) sc += x(order[k], 0) - s1 / s0;
        i = j;
      }
      return sc;
    };
    double lo = -3, hi = 3;
    REQUIRE(score1d(lo) > 0);
    REQUIRE(score1d(hi) < 0);
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (score1d(mid) > 0 ? lo : hi) = mid;
    }
    CHECK(fit.beta[0] == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-8));
  }

  SUBCASE("survival prediction equals an independent Breslow recomputation") {
    const SimData d = two_group_exponential(300, 0.01, 0.02, 0.01, 78);
    const Eigen::MatrixXd x = d.design.col(1);
    const CoxFit fit = fit_cox(d.time, d.event, x);
    // recompute H0 by the direct sum over event times
    Prng rng(5);
    for (int probe = 0; probe < 10; ++probe) {
      const double t = d.time[static_cast<int>(rng.u01() * 300)];
      double h0 = 0.0;
      for (int i = 0; i < 300; ++i) {
        if (d.event[i] < 0.5 || d.time[i] > t) continue;
        double denom = 0.0;
        for (int j = 0; j < 300; ++j)
          if (d.time[j] >= d.time[i]) denom += std::exp(fit.beta[0] * x(j, 0));
        h0 += 1.0 / denom;
      }
      Eigen::RowVectorXd xi(1);
      xi << 1.0;
      const double s = fit.survival(t, xi);
      CHECK(s == doctest::Approx(std::exp(-h0 * std::exp(fit.beta[0])))
                     .epsilon(1e-12));
      CHECK(s > 0.0);
      CHECK(s <= 1.0);
    }
  }

  SUBCASE("survival is nonincreasing in t and flagged beyond the last step") {
    const SimData d = two_group_exponential(200, 0.01, 0.02, 0.01, 79);
    const CoxFit fit = fit_cox(d.time, d.event, d.design.col(1));
    Eigen::RowVectorXd xi(1);
    xi << 0.0;
    double prev = 1.0;
    for (double t = 0; t < 600; t += 25) {
      const double s = fit.survival(t, xi);
      CHECK(s <= prev + 1e-15);
      prev = s;
    }
    bool beyond = false;
    fit.survival(1e9, xi, &beyond);
    CHECK(beyond);
    CHECK(fit.survival(0.0, xi) == 1.0);
  }
}

TEST_CASE("censoring survival closed form") {
  // exponential censoring at rate 0.01/day evaluated at T=100
  Eigen::VectorXd time(50), event(50);
  Prng rng(8);
  for (int i = 0; i < 50; ++i) {
    time[i] = rng.exponential(0.01);
    event[i] = 1.0;
  }
  const ExpPhFit fit =
      fit_exponential(time, event, Eigen::MatrixXd::Ones(50, 1));
  Eigen::RowVectorXd x(1);
  x << 1.0;
  const double rate = std::exp(fit.glm.coef[0]);
  CHECK(fit.survival(100.0, x) ==
        doctest::Approx(std::exp(-100.0 * rate)).epsilon(1e-12));
  // with the true rate: exp(-1)
  CHECK(std::exp(-100.0 * 0.01) == doctest::Approx(0.3679).epsilon(1e-3));
}

TEST_CASE("Kaplan-Meier") {
  SUBCASE("no censoring: complement of the empirical cdf, exactly") {
    Prng rng(12);
    Eigen::VectorXd time(200), event = Eigen::VectorXd::Ones(200);
    for (int i = 0; i < 200; ++i) time[i] = std::floor(rng.u01() * 40);
    const KmCurve km = km_curve(time, event);
    for (double t : {0.0, 5.0, 17.0, 39.0}) {
      double ecdf = 0;
      for (int i = 0; i < 200; ++i) ecdf += time[i] <= t;
      ecdf /= 200;
      CHECK(km.survival_at(t) == doctest::Approx(1 - ecdf).epsilon(1e-14));
    }
  }

  SUBCASE("binomial case: 2 events of 100 by t") {
    Eigen::VectorXd time(100), event(100);
    for (int i = 0; i < 100; ++i) {
      time[i] = 1000.0;
      event[i] = 0.0;
    }
    time[0] = 50;
    event[0] = 1;
    time[1] = 70;
    event[1] = 1;
    const IncidenceEstimate e = km_incidence(time, event, 365.0);
    CHECK(e.estimate == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(e.valid);
    CHECK(e.ci_lo < 0.02);
    CHECK(e.ci_hi > 0.02);
  }

  SUBCASE("all censored before t: zero incidence, flagged invalid") {
    Eigen::VectorXd time = Eigen::VectorXd::Ones(20) * 10.0;
    Eigen::VectorXd event = Eigen::VectorXd::Zero(20);
    const IncidenceEstimate e = km_incidence(time, event, 365.0);
    CHECK(e.estimate == 0.0);
    CHECK_FALSE(e.valid);
  }

  SUBCASE("simulated exponential arm matches the closed form at large n") {
    Prng rng(14);
    const int n = 200000;
    Eigen::VectorXd time(n), event(n);
    for (int i = 0; i < n; ++i) {
      const double t = rng.exponential(0.0001);
      const double c = rng.exponential(1.0 / 800.0);
      time[i] = std::min(t, c);
      event[i] = t <= c ? 1 : 0;
    }
    const IncidenceEstimate e = km_incidence(time, event, 365.0);
    const double truth = 1.0 - std::exp(-0.0001 * 365.0);
    CHECK(e.estimate == doctest::Approx(truth).epsilon(0.03));
    CHECK(truth == doctest::Approx(0.0358).epsilon(1e-2));
  }
}
