#include "hpdcnn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "hpdcnn/errors.hpp"
#include "hpdcnn/linalg.hpp"
#include "hpdcnn/newton_schulz.hpp"
#include "hpdcnn/train.hpp"
#include "json.hpp"

namespace hpdcnn {

namespace {

// Slices handed to each worker; large enough to fill the batch kernels.
constexpr std::size_t kSlice = 256;

template <class F>
double best_time(int repeats, F&& f) {
  double best = INFINITY;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

template <class F>
void sliced(std::size_t n, F&& f) {
  const std::size_t slices = (n + kSlice - 1) / kSlice;
  parallel_for(slices, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) f(s * kSlice, std::min(n, (s + 1) * kSlice));
  });
}

double rel_dev(const std::vector<ComplexMatrix>& a, const std::vector<ComplexMatrix>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, frobenius_norm(a[i] - b[i]) / std::max(frobenius_norm(b[i]), 1e-300));
  }
  return worst;
}

}  // namespace

double BenchReport::max_deviation() const noexcept { return std::max({dev_sqrt, dev_log, dev_clamp}); }

BenchReport bench_fastpath(std::size_t count, std::size_t order, double cond_min, double cond_max,
                           std::uint64_t seed, int repeats) {
  if (count < 100) throw Error(ErrorCode::BadConfig, "bench needs at least 100 matrices");
  if (order < 1 || !(cond_min >= 1.0) || !(cond_max >= cond_min) || repeats < 1) {
    throw Error(ErrorCode::BadConfig, "bench parameters");
  }
  BenchReport r;
  r.count = count;
  r.order = order;
  r.cond_min = cond_min;
  r.cond_max = cond_max;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<HpdMatrix> pop;
  std::vector<double> tau;
  pop.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double cond = cond_min * std::pow(cond_max / cond_min, uni(rng));
    const double top = std::pow(10.0, 2.0 * uni(rng) - 1.0);
    std::vector<double> lam(order);
    for (auto& l : lam) l = top * std::pow(cond, -uni(rng));
    lam[0] = top;
    if (order > 1) lam[1] = top / cond;
    const ComplexMatrix u = random_unitary(order, rng);
    pop.push_back(make_hermitian(u * ComplexMatrix::diagonal(lam) * adjoint(u)));
    tau.push_back(top / std::sqrt(cond));
  }

  std::vector<ComplexMatrix> es(count), el(count), ec(count), fs(count), fl(count), fc(count);
  const std::span<const HpdMatrix> all(pop);
  const std::span<const double> taus(tau);
  r.exact_sqrt = best_time(repeats, [&] {
    sliced(count, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) es[i] = matrix_fn_eig(pop[i], [](double l) { return std::sqrt(l); });
    });
  });
  r.exact_log = best_time(repeats, [&] {
    sliced(count, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) el[i] = matrix_fn_eig(pop[i], [](double l) { return std::log(l); });
    });
  });
  r.exact_clamp = best_time(repeats, [&] {
    sliced(count, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const double t = tau[i];
        ec[i] = matrix_fn_eig(pop[i], [t](double l) { return std::max(l, t); });
      }
    });
  });
  r.fast_sqrt = best_time(repeats, [&] {
    sliced(count, [&](std::size_t b, std::size_t e) {
      auto out = sqrt_ns_batch(all.subspan(b, e - b));
      std::move(out.begin(), out.end(), fs.begin() + static_cast<std::ptrdiff_t>(b));
    });
  });
  r.fast_log = best_time(repeats, [&] {
    sliced(count, [&](std::size_t b, std::size_t e) {
      auto out = log_ns_batch(all.subspan(b, e - b));
      std::move(out.begin(), out.end(), fl.begin() + static_cast<std::ptrdiff_t>(b));
    });
  });
  r.fast_clamp = best_time(repeats, [&] {
    sliced(count, [&](std::size_t b, std::size_t e) {
      auto out = clamp_ns_batch(all.subspan(b, e - b), taus.subspan(b, e - b));
      std::move(out.begin(), out.end(), fc.begin() + static_cast<std::ptrdiff_t>(b));
    });
  });
  r.dev_sqrt = rel_dev(fs, es);
  r.dev_log = rel_dev(fl, el);
  r.dev_clamp = rel_dev(fc, ec);
  return r;
}

std::string bench_json(const BenchReport& r) {
  nlohmann::ordered_json j;
  j["count"] = r.count;
  j["order"] = r.order;
  j["condition"] = {r.cond_min, r.cond_max};
  j["exact_seconds"] = {{"sqrt", r.exact_sqrt}, {"log", r.exact_log}, {"clamp", r.exact_clamp},
                        {"total", r.exact_total()}};
  j["fast_seconds"] = {{"sqrt", r.fast_sqrt}, {"log", r.fast_log}, {"clamp", r.fast_clamp},
                       {"total", r.fast_total()}};
  j["max_relative_deviation"] = {{"sqrt", r.dev_sqrt}, {"log", r.dev_log}, {"clamp", r.dev_clamp}};
  j["speedup"] = r.speedup();
  return j.dump(2);
}

}  // namespace hpdcnn
