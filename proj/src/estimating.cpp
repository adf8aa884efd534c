#include "pcix/estimating.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pcix/parallel.hpp"
#include "pcix/rng.hpp"
#include "pcix/stats.hpp"

namespace pcix {

namespace {

struct VecAcc {
  Eigen::VectorXd sum;
  Eigen::VectorXd scratch;
};

struct MatAcc {
  Eigen::MatrixXd sum;
  Eigen::VectorXd scratch;
};

}  // namespace

Eigen::VectorXd mean_moment(const MomentSystem& sys,
                            const Eigen::VectorXd& theta) {
  auto init = [&] {
    return VecAcc{Eigen::VectorXd::Zero(sys.dim), Eigen::VectorXd(sys.dim)};
  };
  auto fold = [&](VecAcc& acc, std::size_t i) {
    sys.psi(i, theta, acc.scratch);
    acc.sum += acc.scratch;
  };
  auto combine = [](VecAcc& a, const VecAcc& b) { a.sum += b.sum; };
  VecAcc total = blockwise_reduce<VecAcc>(sys.n, init, fold, combine);
  return total.sum / static_cast<double>(sys.n);
}

Eigen::MatrixXd mean_jacobian(const MomentSystem& sys,
                              const Eigen::VectorXd& theta,
                              double step_scale) {
  Eigen::MatrixXd J(sys.dim, sys.dim);
  Eigen::VectorXd tp = theta, tm = theta;
  for (int j = 0; j < sys.dim; ++j) {
    const double h = step_scale * std::max(1.0, std::fabs(theta[j]));
    tp[j] = theta[j] + h;
    tm[j] = theta[j] - h;
    J.col(j) = (mean_moment(sys, tp) - mean_moment(sys, tm)) / (2.0 * h);
    tp[j] = theta[j];
    tm[j] = theta[j];
  }
  return J;
}

namespace {

Eigen::MatrixXd mean_outer(const MomentSystem& sys,
                           const Eigen::VectorXd& theta) {
  auto init = [&] {
    return MatAcc{Eigen::MatrixXd::Zero(sys.dim, sys.dim),
                  Eigen::VectorXd(sys.dim)};
  };
  auto fold = [&](MatAcc& acc, std::size_t i) {
    sys.psi(i, theta, acc.scratch);
    acc.sum.noalias() += acc.scratch * acc.scratch.transpose();
  };
  auto combine = [](MatAcc& a, const MatAcc& b) { a.sum += b.sum; };
  MatAcc total = blockwise_reduce<MatAcc>(sys.n, init, fold, combine);
  return total.sum / static_cast<double>(sys.n);
}

}  // namespace

void attach_sandwich(const MomentSystem& sys, SolvedSystem& sol,
                     double step_scale) {
  sol.A = mean_jacobian(sys, sol.theta, step_scale);
  sol.B = mean_outer(sys, sol.theta);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(sol.A);
  if (!lu.isInvertible()) {
    const double rcond =
        lu.rank() > 0 ? std::fabs(lu.matrixLU().diagonal().minCoeff() /
                                  lu.matrixLU().diagonal().maxCoeff())
                      : 0.0;
    throw SingularError("singular moment Jacobian in sandwich", rcond);
  }
  const Eigen::MatrixXd Ainv = lu.inverse();
  Eigen::MatrixXd s = Ainv * sol.B * Ainv.transpose() / static_cast<double>(sys.n);
  sol.sandwich = 0.5 * (s + s.transpose());
}

SolvedSystem solve(const MomentSystem& sys, const Eigen::VectorXd& init,
                   const SolveOptions& opts) {
  if (init.size() != sys.dim)
    throw Error("solve: init dimension mismatch");
  SolvedSystem sol;
  sol.n = sys.n;
  Eigen::VectorXd theta = init;
  Eigen::VectorXd m = mean_moment(sys, theta);
  if (!m.allFinite())
    throw Error("solve: moment not finite at the initial point");
  double norm = m.cwiseAbs().maxCoeff();
  Eigen::VectorXd best = theta;
  double best_norm = norm;

  int it = 0;
  while (norm > opts.tol && it < opts.max_iter) {
    ++it;
    const Eigen::MatrixXd J = mean_jacobian(sys, theta, opts.jac_step);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) {
      const double rcond =
          lu.rank() > 0 ? std::fabs(lu.matrixLU().diagonal().minCoeff() /
                                    lu.matrixLU().diagonal().maxCoeff())
                        : 0.0;
      std::ostringstream msg;
      msg << "singular moment Jacobian at iteration " << it
          << " (reciprocal condition ~ " << rcond << ")";
      throw SingularError(msg.str(), rcond);
    }
    const Eigen::VectorXd step = lu.solve(-m);
    double t = 1.0;
    Eigen::VectorXd cand;
    Eigen::VectorXd mc;
    double cnorm;
    int halvings = 0;
    for (;;) {
      cand = theta + t * step;
      mc = mean_moment(sys, cand);
      cnorm = mc.allFinite() ? mc.cwiseAbs().maxCoeff()
                             : std::numeric_limits<double>::infinity();
      if (cnorm < norm || halvings >= 30) break;
      t *= 0.5;
      ++halvings;
    }
    theta = cand;
    m = mc;
    norm = cnorm;
    if (norm < best_norm) {
      best = theta;
      best_norm = norm;
    }
    if (theta.cwiseAbs().maxCoeff() > opts.divergence_norm) {
      std::ostringstream msg;
      msg << "iterates diverged (sup-norm above " << opts.divergence_norm
          << "); possible monotone likelihood or separation";
      throw SolveFailure(msg.str(), best_norm, it, best);
    }
  }
  if (norm > opts.tol) {
    std::ostringstream msg;
    msg << "estimating equations did not converge in " << opts.max_iter
        << " iterations (best max |moment| = " << best_norm << ")";
    throw SolveFailure(msg.str(), best_norm, it, best);
  }
  sol.theta = theta;
  sol.iterations = it;
  sol.resid_norm = norm;
  if (opts.compute_sandwich) attach_sandwich(sys, sol, opts.jac_step);
  return sol;
}

DeltaResult delta_method(
    const SolvedSystem& sol,
    const std::function<double(const Eigen::VectorXd&)>& g,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad) {
  DeltaResult out;
  out.value = g(sol.theta);
  if (!std::isfinite(out.value))
    throw Error("delta method: transform not finite at the solution");
  if (grad) {
    out.gradient = grad(sol.theta);
  } else {
    out.gradient.resize(sol.theta.size());
    Eigen::VectorXd tp = sol.theta, tm = sol.theta;
    for (Eigen::Index j = 0; j < sol.theta.size(); ++j) {
      const double h = 1e-6 * std::max(1.0, std::fabs(sol.theta[j]));
      tp[j] += h;
      tm[j] -= h;
      out.gradient[j] = (g(tp) - g(tm)) / (2.0 * h);
      tp[j] = sol.theta[j];
      tm[j] = sol.theta[j];
    }
  }
  out.se = std::sqrt(
      std::max(0.0, double(out.gradient.transpose() * sol.sandwich * out.gradient)));
  return out;
}

BootstrapResult bootstrap(
    const std::function<double(const StudyDataset&)>& estimator,
    const StudyDataset& ds, int reps, std::uint64_t seed, double level) {
  if (reps < 2) throw Error("bootstrap needs at least 2 replicates");
  std::vector<std::size_t> idx0, idx1;
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    (ds.records[i].study == 1 ? idx1 : idx0).push_back(i);

  std::vector<double> values(static_cast<std::size_t>(reps),
                             std::numeric_limits<double>::quiet_NaN());
  const std::uint64_t label = hash_label("bootstrap");

#ifdef _OPENMP
  const int nt = workers() > 0 ? workers() : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
#endif
  for (int r = 0; r < reps; ++r) {
    Prng rng(derive_seed(seed, {label, static_cast<std::uint64_t>(r)}));
    StudyDataset bs;
    bs.schema = ds.schema;
    bs.provenance = ds.provenance;
    bs.records.reserve(ds.records.size());
    for (std::size_t k = 0; k < idx0.size(); ++k) {
      const auto j = static_cast<std::size_t>(rng.u01() * double(idx0.size()));
      bs.records.push_back(ds.records[idx0[std::min(j, idx0.size() - 1)]]);
    }
    for (std::size_t k = 0; k < idx1.size(); ++k) {
      const auto j = static_cast<std::size_t>(rng.u01() * double(idx1.size()));
      bs.records.push_back(ds.records[idx1[std::min(j, idx1.size() - 1)]]);
    }
    try {
      values[static_cast<std::size_t>(r)] = estimator(bs);
    } catch (const std::exception&) {
      // counted below
    }
  }

  std::vector<double> ok;
  for (double v : values)
    if (std::isfinite(v)) ok.push_back(v);
  BootstrapResult res;
  res.reps = reps;
  res.failed = reps - static_cast<int>(ok.size());
  if (ok.size() < static_cast<std::size_t>(reps) / 2 || ok.size() < 2)
    throw Error("bootstrap unstable: more than half of the replicates failed");

  const double n = static_cast<double>(ok.size());
  const double mean = std::accumulate(ok.begin(), ok.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : ok) ss += (v - mean) * (v - mean);
  res.se = std::sqrt(ss / (n - 1.0));

  std::sort(ok.begin(), ok.end());
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= ok.size()) return ok.back();
    return ok[lo] * (1.0 - frac) + ok[lo + 1] * frac;
  };
  const double alpha = 1.0 - level;
  res.lo = quantile(alpha / 2.0);
  res.hi = quantile(1.0 - alpha / 2.0);
  return res;
}

}  // namespace pcix
