#pragma once

#include <cstdint>
#include <string>

namespace hpdcnn {

struct BenchReport {
  std::size_t count = 0, order = 0;
  double cond_min = 1.0, cond_max = 1.0;
  // seconds for the whole population, best of `repeats`
  double exact_sqrt = 0, exact_log = 0, exact_clamp = 0;
  double fast_sqrt = 0, fast_log = 0, fast_clamp = 0;
  // largest relative Frobenius deviation fast vs exact
  double dev_sqrt = 0, dev_log = 0, dev_clamp = 0;

  double exact_total() const noexcept { return exact_sqrt + exact_log + exact_clamp; }
  double fast_total() const noexcept { return fast_sqrt + fast_log + fast_clamp; }
  double speedup() const noexcept { return exact_total() / fast_total(); }
  double max_deviation() const noexcept;
};

/// Times eigendecomposition-based sqrt, log and eigenvalue clamping against
/// the Newton-Schulz batch kernels on the same random HPD population, with
/// condition numbers log-uniform in [cond_min, cond_max] and the clamp
/// threshold inside each spectrum. Work is split with parallel_for.
/// Throws BadConfig if count < 100.
BenchReport bench_fastpath(std::size_t count, std::size_t order = 3, double cond_min = 1.0,
                           double cond_max = 100.0, std::uint64_t seed = 1, int repeats = 3);

std::string bench_json(const BenchReport& r);

}  // namespace hpdcnn
