#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

#include "pcix/stats.hpp"

namespace pcix {

// splitmix64 step; used both as a generator seeder and as a mixing hash.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent substream key from a master seed and a list of ids.
// Simulation code keys streams as derive(seed, scenario, replicate[, block])
// so results never depend on thread count or scheduling.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> ids) {
  std::uint64_t s = master ^ 0x243f6a8885a308d3ULL;
  std::uint64_t out = splitmix64(s);
  for (std::uint64_t id : ids) {
    s ^= id + 0x9e3779b97f4a7c15ULL + (out << 6) + (out >> 2);
    out = splitmix64(s);
  }
  return out;
}

inline std::uint64_t hash_label(std::string_view label) {
  std::uint64_t s = 0xcbf29ce484222325ULL;
  for (char c : label) s = (s ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  return s;
}

// mt19937_64 with hand-rolled variate mappings. The standard pins the engine
// output bit-exactly but not the distributions, so every mapping lives here.
// Seeds are scrambled first: raw consecutive seeds give correlated engines.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : eng_([seed]() mutable {
    std::uint64_t s = seed;
    return splitmix64(s);
  }()) {}

  double u01() {  // in [0,1), 53-bit resolution
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return u01() < p; }

  double exponential(double rate) {
    // -log(1-u) keeps u=0 finite
    return -std::log1p(-u01()) / rate;
  }

  // Inverse-CDF sampler for a normal truncated to [lo, hi].
  double truncated_normal(double mean, double sd, double lo, double hi);

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

inline double Prng::truncated_normal(double mean, double sd, double lo,
                                     double hi) {
  if (!(lo < hi)) throw std::invalid_argument("truncated_normal: empty interval");
  const double a = normal_cdf((lo - mean) / sd);
  const double b = normal_cdf((hi - mean) / sd);
  const double u = u01();
  double x = mean + sd * normal_quantile(a + u * (b - a));
  if (x < lo) x = lo;
  if (x > hi) x = hi;
  return x;
}

}  // namespace pcix
