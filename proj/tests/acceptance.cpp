// Prints one PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <string>

#include "hpdcnn/bench.hpp"
#include "hpdcnn/errors.hpp"
#include "hpdcnn/gradcheck.hpp"
#include "hpdcnn/metrics.hpp"
#include "hpdcnn/newton_schulz.hpp"
#include "hpdcnn/train.hpp"
#include "test_support.hpp"

using namespace hpdcnn;
using namespace hpdcnn::testing;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

HpdMatrix diag2(double a, double b) {
  const double d[] = {a, b};
  return make_hermitian(ComplexMatrix::diagonal(d));
}

double rel_frob(const ComplexMatrix& a, const ComplexMatrix& b) {
  return frobenius_norm(a - b) / frobenius_norm(b);
}

Outcome metric_examples() {
  const auto a = diag2(2, 2), b = diag2(3, 3), i2 = diag2(1, 1);
  const auto c = make_hermitian(ComplexMatrix::from_rows({{1, 0.9}, {0.9, 1}}));
  const double e1 = dist_euclidean(a, b), l1 = dist_log_euclidean(a, b);
  const double e2 = dist_euclidean(i2, c), l2 = dist_log_euclidean(i2, c);
  const bool ok = std::abs(e1 - 1.414) <= 1e-3 && std::abs(l1 - 0.573) <= 1e-3 &&
                  std::abs(e2 - 1.273) <= 1e-3 && std::abs(l2 - 2.39) <= 1e-2;
  return {ok, fmt("dE(2I,3I)=%.4f dLE(2I,3I)=%.4f dE(I,C)=%.4f dLE(I,C)=%.4f", e1, l1, e2, l2)};
}

Outcome fast_path_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double ws = 0, wl = 0, wc = 0;
  std::size_t not_converged = 0;
  for (int t = 0; t < 1000; ++t) {
    const double cond = std::pow(100.0, uni(rng));
    const double top = std::pow(10.0, 6.0 * uni(rng) - 3.0);
    const auto x = random_hpd(rng, 3, cond, top);
    const double tau = top / cond * std::pow(cond * 2.0, uni(rng)) * 0.5;
    try {
      ws = std::max(ws, rel_frob(sqrt_ns(x, kDefaultNsIterations).y.mat(),
                                 matrix_fn_eig(x, [](double l) { return std::sqrt(l); })));
      wl = std::max(wl, rel_frob(log_ns(x), matrix_fn_eig(x, [](double l) { return std::log(l); })));
      wc = std::max(wc, rel_frob(clamp_ns(x, tau).mat(),
                                 matrix_fn_eig(x, [tau](double l) { return std::max(l, tau); })));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotConverged) throw;
      ++not_converged;
    }
  }
  const bool ok = ws < 1e-3 && wl < 1e-3 && wc < 1e-3 && not_converged == 0;
  return {ok, fmt("max rel Frobenius sqrt=%.2e log=%.2e clamp=%.2e, NotConverged=%zu", ws, wl, wc,
                  not_converged)};
}

Outcome closure_suite() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::size_t bad = 0;
  double worst_floor = INFINITY;
  for (int t = 0; t < 10000; ++t) {
    const auto x = random_hpd(rng, 3, std::pow(1e3, uni(rng)), std::pow(10.0, 2.0 * uni(rng) - 1.0));
    const double lmax = hermitian_eig(x).lam.back();
    auto p = init_params({3, 3, 2}, 1.0, rng());
    for (auto& l : p.layers) l.tau = lmax * std::pow(10.0, -3.0 * uni(rng));
    const MatrixPath path = t % 2 ? MatrixPath::Fast : MatrixPath::Exact;
    LayerTape tape;
    const ComplexMatrix out = hpdnet_forward(p, x, path, &tape);
    for (std::size_t k = 0; k < tape.layers.size(); ++k) {
      const auto& rec = tape.layers[k];
      const HpdMatrix y = reeig_forward(rec.mapped, p.layers[k].tau, path);
      if (!satisfies_hpd_invariants(rec.mapped.mat()) || !satisfies_hpd_invariants(y.mat())) ++bad;
      const double floor = hermitian_eig(y).lam.front() - (p.layers[k].tau - 1e-3);
      worst_floor = std::min(worst_floor, floor);
      if (floor < 0.0) ++bad;
    }
    if (max_abs_diff(out, adjoint(out)) > 1e-9) ++bad;
  }
  return {bad == 0, fmt("violations=%zu, min(lambda_min - (tau - 1e-3))=%.3e over 10000 passes", bad,
                        worst_floor)};
}

// Central differences on every BiMap entry of a 2-layer network with LogEig.
double hpdnet_fd(const HpdNetParams& p, const HpdMatrix& x, MatrixPath path, const ComplexMatrix& g) {
  LayerTape tape;
  hpdnet_forward(p, x, path, &tape);
  const auto grads = hpdnet_backward(p, tape, g);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    for (int part = 0; part < 2; ++part) {
      for (std::size_t i = 0; i < p.layers[k].w.rows(); ++i) {
        for (std::size_t j = 0; j < p.layers[k].w.cols(); ++j) {
          auto plus = p, minus = p;
          (part ? plus.layers[k].w.im(i, j) : plus.layers[k].w.re(i, j)) += h;
          (part ? minus.layers[k].w.im(i, j) : minus.layers[k].w.re(i, j)) -= h;
          const double fd =
              (inner(g, hpdnet_forward(plus, x, path)) - inner(g, hpdnet_forward(minus, x, path))) / (2 * h);
          worst = std::max(worst, rel_err(fd, part ? grads.w[k].im(i, j) : grads.w[k].re(i, j)));
        }
      }
    }
  }
  return worst;
}

Outcome gradient_checks() {
  std::mt19937_64 rng(31);
  double ea = 0, fa = 0;
  for (int trial = 0; trial < 6; ++trial) {
    const auto x = random_hpd(rng, 3, 20.0, 2.0);
    auto p = init_params({3, 3, trial < 3 ? 3u : 2u}, 1.0, rng());
    // thresholds between eigenvalues on odd trials so ReEig is active away from its kink
    HpdMatrix cur = x;
    for (auto& layer : p.layers) {
      const auto mapped = bimap_forward(layer.w, cur);
      const auto e = hermitian_eig(mapped);
      layer.tau = trial % 2 ? std::sqrt(e.lam[0] * e.lam[1]) : 0.5 * e.lam[0];
      cur = reeig_forward(mapped, layer.tau, MatrixPath::Exact);
    }
    const auto g = random_hermitian(rng, p.output_order());
    ea = std::max(ea, hpdnet_fd(p, x, MatrixPath::Exact, g));
    fa = std::max(fa, hpdnet_fd(p, x, MatrixPath::Fast, g));
  }

  const auto img = std::make_shared<CovImage>(synth_scene(default_scene(11, 13, 13)));
  auto set = all_pixels(img, 13);
  set.centers = {6 * 13 + 6};
  set.labels = {2};
  GradCheckResult rb[2];
  for (int k = 0; k < 2; ++k) {
    TrainConfig cfg;
    cfg.path = k ? MatrixPath::Fast : MatrixPath::Exact;
    cfg.seed = 9;
    rb[k] = check_pipeline_gradients(init_model(cfg, 3, default_tau(set)), set, 0, 100, 1e-5, 4);
  }
  const bool ok = ea < 1e-4 && fa < 1e-3 && rb[0].worst_rel < 1e-4 && rb[1].worst_rel < 1e-3 &&
                  rb[0].checked >= 100 && rb[1].checked >= 100;
  return {ok, fmt("(a) exact %.2e fast %.2e; (b) exact %.2e over %zu params (%zu at kinks), fast %.2e "
                  "over %zu params (%zu at kinks)",
                  ea, fa, rb[0].worst_rel, rb[0].checked, rb[0].skipped, rb[1].worst_rel,
                  rb[1].checked, rb[1].skipped)};
}

Outcome classification() {
  const auto img = std::make_shared<CovImage>(synth_scene(default_scene(1)));
  TrainConfig cfg;  // lr 0.005, 50 epochs, ratio 0.1, patch 13
  const auto split = extract_patches(img, cfg.patch, cfg.ratio, cfg.seed);
  auto run = [&](bool zero_imag) {
    TrainConfig c = cfg;
    c.zero_imag = zero_imag;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train(c, split.train, img->class_count);
    const auto rep = evaluate(r.model, split.test);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "  %s: OA %.4f kappa %.4f (%.0f s)\n", zero_imag ? "imaginary dropped" : "full",
                 rep.oa, rep.kappa, s);
    return rep;
  };
  const auto full = run(false);
  const auto ablated = run(true);
  const bool ok = full.oa >= 0.95 && full.kappa >= 0.9 && ablated.oa < full.oa;
  return {ok, fmt("OA %.4f kappa %.4f; imaginary parts dropped: OA %.4f kappa %.4f", full.oa,
                  full.kappa, ablated.oa, ablated.kappa)};
}

Outcome acceleration() {
  const auto r = bench_fastpath(1024, 3, 1.0, 100.0, 1, 5);
  const bool ok = r.speedup() >= 1.0 && r.max_deviation() < 1e-3;
  return {ok, fmt("exact %.3f ms, fast %.3f ms, speedup %.2f (sqrt %.2f log %.2f clamp %.2f), max dev %.2e",
                  1e3 * r.exact_total(), 1e3 * r.fast_total(), r.speedup(), r.exact_sqrt / r.fast_sqrt,
                  r.exact_log / r.fast_log, r.exact_clamp / r.fast_clamp, r.max_deviation())};
}

Outcome metric_invariance() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double ws = 0, wc = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto a = random_hpd(rng, 3, 100.0), b = random_hpd(rng, 3, 100.0);
    const double s = std::pow(10.0, 4.0 * uni(rng) - 2.0);
    const auto sa = HpdMatrix::adopt(a.mat() * s), sb = HpdMatrix::adopt(b.mat() * s);
    ws = std::max(ws, std::abs(dist_log_euclidean(sa, sb) - dist_log_euclidean(a, b)));
    ComplexMatrix m = random_complex(rng, 3, 3);
    m.add_identity(2.0);
    const auto ma = HpdMatrix::adopt(m * a.mat() * adjoint(m));
    const auto mb = HpdMatrix::adopt(m * b.mat() * adjoint(m));
    wc = std::max(wc, std::abs(dist_airm(ma, mb) - dist_airm(a, b)));
  }
  return {ws <= 1e-9 && wc <= 1e-8,
          fmt("log-E scale deviation %.2e, AIRM congruence deviation %.2e", ws, wc)};
}

Outcome evaluation_formulas() {
  const auto perfect = report_from_matrix({{30, 0, 0}, {0, 20, 0}, {0, 0, 10}});
  const auto chance = report_from_matrix({{50, 0}, {50, 0}});
  const auto hand = report_from_matrix({{45, 5}, {10, 40}});
  auto eq = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  const bool ok = perfect.oa == 1.0 && perfect.aa == 1.0 && perfect.kappa == 1.0 && chance.oa == 0.5 &&
                  chance.kappa == 0.0 && eq(hand.oa, 0.85) && eq(hand.kappa, 0.7);
  return {ok, fmt("perfect (%.3f, %.3f, %.3f), chance OA %.3f kappa %.3f, [[45,5],[10,40]] OA %.4f kappa %.4f",
                  perfect.oa, perfect.aa, perfect.kappa, chance.oa, chance.kappa, hand.oa, hand.kappa)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"metric worked examples", metric_examples},
      {"fast-path oracle equivalence", fast_path_oracle},
      {"HPD closure", closure_suite},
      {"gradient checks", gradient_checks},
      {"desk-scale classification", classification},
      {"acceleration", acceleration},
      {"metric invariances", metric_invariance},
      {"evaluation formulas", evaluation_formulas},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (int k = 0; k < 8; ++k) {
    if (!only.empty() && !only.count(k + 1)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d %s: %s (%s; %.1f s)\n", k + 1, criteria[k].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), s);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
