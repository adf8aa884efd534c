// Compares the serial reference reductions against the OpenMP kernels on the
// workloads that dominate a simulation sweep: dataset generation, moment
// assembly, and a full stacked solve.
#include <chrono>
#include <cstdio>

#include "pcix/bridge.hpp"
#include "pcix/estimating.hpp"
#include "pcix/inference.hpp"
#include "pcix/parallel.hpp"
#include "pcix/simulate.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const long n = argc > 1 ? std::atol(argv[1]) : 200000;
  const auto cfg =
      pcix::make_dgp_config(pcix::dgp_cell("medium,medium"), n, 7, 3.0);

  std::printf("benchmark n = %ld\n", n);

  pcix::set_workers(1);
  const double gen_serial = time_best_of(3, [&] { pcix::generate(cfg); });
  pcix::set_workers(0);
  const double gen_par = time_best_of(3, [&] { pcix::generate(cfg); });
  std::printf("generate            serial %8.3fs   parallel %8.3fs   x%.2f\n",
              gen_serial, gen_par, gen_serial / gen_par);

  const pcix::StudyDataset ds = pcix::generate(cfg);
  const pcix::DataView v = pcix::make_view(ds);

  pcix::StackedEstimator est = pcix::build_ipcw_stack(v, 365.0, "dr");
  const Eigen::VectorXd th = est.init;
  pcix::set_workers(1);
  const double mom_serial =
      time_best_of(5, [&] { pcix::mean_moment(est.system, th); });
  pcix::set_workers(0);
  const double mom_par =
      time_best_of(5, [&] { pcix::mean_moment(est.system, th); });
  std::printf("moment assembly     serial %8.3fs   parallel %8.3fs   x%.2f\n",
              mom_serial, mom_par, mom_serial / mom_par);

  pcix::set_workers(1);
  const double fit_serial =
      time_best_of(2, [&] { pcix::finish_estimate(est); });
  pcix::set_workers(0);
  const double fit_par = time_best_of(2, [&] { pcix::finish_estimate(est); });
  std::printf("stacked solve + SE  serial %8.3fs   parallel %8.3fs   x%.2f\n",
              fit_serial, fit_par, fit_serial / fit_par);

  // equality of the two paths (same block topology)
  pcix::set_workers(1);
  const Eigen::VectorXd m1 = pcix::mean_moment(est.system, th);
  pcix::set_workers(0);
  const Eigen::VectorXd m2 = pcix::mean_moment(est.system, th);
  std::printf("serial/parallel moment bitwise equal: %s\n",
              m1 == m2 ? "yes" : "NO");
  return m1 == m2 ? 0 : 1;
}
