#pragma once

#include <cstddef>
#include <vector>

namespace pcix {

// Number of workers used by the OpenMP kernels. 0 = library default.
void set_workers(int n);
int workers();

// All data-parallel reductions in the library run over fixed-size blocks of
// records. Per-block partials are accumulated serially within the block and
// then combined in block order, so the floating-point summation topology is
// a function of n alone: results are bit-identical for any worker count and
// for the serial reference path.
inline constexpr std::size_t kReduceBlock = 4096;

inline std::size_t block_count(std::size_t n) {
  return (n + kReduceBlock - 1) / kReduceBlock;
}

// Accumulator must provide: init(), accumulate(acc, i), combine(acc, acc).
// Serial reference implementation.
template <class Acc, class Init, class Fold, class Combine>
Acc blockwise_reduce_serial(std::size_t n, Init init, Fold fold,
                            Combine combine) {
  Acc total = init();
  const std::size_t nb = block_count(n);
  for (std::size_t b = 0; b < nb; ++b) {
    Acc part = init();
    const std::size_t lo = b * kReduceBlock;
    const std::size_t hi = std::min(n, lo + kReduceBlock);
    for (std::size_t i = lo; i < hi; ++i) fold(part, i);
    combine(total, part);
  }
  return total;
}

// OpenMP implementation with the same combine topology: block partials are
// stored and merged in block order after the parallel region.
template <class Acc, class Init, class Fold, class Combine>
Acc blockwise_reduce(std::size_t n, Init init, Fold fold, Combine combine);

}  // namespace pcix

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pcix {

template <class Acc, class Init, class Fold, class Combine>
Acc blockwise_reduce(std::size_t n, Init init, Fold fold, Combine combine) {
  const std::size_t nb = block_count(n);
#ifdef _OPENMP
  if (workers() != 1 && nb > 1) {
    std::vector<Acc> parts(nb, init());
#pragma omp parallel for schedule(static) num_threads(workers() > 0 ? workers() : omp_get_max_threads())
    for (long long b = 0; b < static_cast<long long>(nb); ++b) {
      const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
      const std::size_t hi = std::min(n, lo + kReduceBlock);
      for (std::size_t i = lo; i < hi; ++i) fold(parts[b], i);
    }
    Acc total = init();
    for (std::size_t b = 0; b < nb; ++b) combine(total, parts[b]);
    return total;
  }
#endif
  return blockwise_reduce_serial<Acc>(n, init, fold, combine);
}

}  // namespace pcix
