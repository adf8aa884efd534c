#pragma once

// Small configurable data generator for the proximal estimator tests: a
// binary confounder cell drives study membership and both negative controls.
#include <functional>

#include "pcix/dataset.hpp"
#include "pcix/rng.hpp"

namespace pcix::testing {

struct ToySpec {
  long n = 5000;
  std::uint64_t seed = 1;
  std::function<double(int ub, int x)> p_x = [](int, int) { return 0.4; };
  std::function<double(int ub, int x)> p_r1 = [](int ub, int) {
    return ub ? 0.25 : 0.55;
  };
  std::function<double(int ub, int x)> p_z1 = [](int ub, int) {
    return ub ? 0.65 : 0.35;
  };
  std::function<double(int ub, int x)> p_w1 = [](int ub, int x) {
    return std::exp(-2.2 + 0.7 * ub + 0.25 * x);
  };
  std::function<double(int ub, int x)> event_rate = [](int ub, int x) {
    return std::exp(-9.0 + 0.7 * ub + 0.4 * x);
  };
  std::function<double(int z, int x)> censor_rate = [](int z, int) {
    return std::exp(-6.5 + 0.3 * z);
  };
  bool with_x = true;
};

inline StudyDataset toy_dataset(const ToySpec& s) {
  StudyDataset ds;
  if (s.with_x) ds.schema.covariate_names = {"x"};
  ds.schema.has_nce = true;
  ds.schema.has_nco = true;
  ds.schema.latent_names = {"ub"};
  Prng rng(s.seed);
  for (long i = 0; i < s.n; ++i) {
    const int ub = rng.bernoulli(0.5);
    const int x = s.with_x ? rng.bernoulli(s.p_x(ub, 0)) : 0;
    SubjectRecord r;
    r.study = static_cast<std::uint8_t>(rng.bernoulli(s.p_r1(ub, x)));
    r.arm = r.study == 1 ? 0 : 1;
    r.nce = static_cast<std::uint8_t>(rng.bernoulli(s.p_z1(ub, x)));
    r.nco = static_cast<std::uint8_t>(rng.bernoulli(s.p_w1(ub, x)));
    const double t = rng.exponential(s.event_rate(ub, x));
    const double c = rng.exponential(s.censor_rate(*r.nce, x));
    r.time = std::min(t, c);
    r.event = t <= c;
    if (s.with_x) r.covariates = {double(x)};
    r.latent = {double(ub)};
    ds.records.push_back(r);
  }
  return ds;
}

// exact enumeration of P(T0 <= t | R = 0) over the (ub, x) cells
inline double toy_truth(const ToySpec& s, double t) {
  double num = 0, den = 0;
  for (int ub = 0; ub < 2; ++ub) {
    for (int x = 0; x < (s.with_x ? 2 : 1); ++x) {
      const double px = s.with_x ? (x ? s.p_x(ub, 0) : 1 - s.p_x(ub, 0)) : 1.0;
      const double w = 0.5 * px * (1.0 - s.p_r1(ub, x));
      num += w * (1.0 - std::exp(-s.event_rate(ub, x) * t));
      den += w;
    }
  }
  return num / den;
}

}  // namespace pcix::testing
