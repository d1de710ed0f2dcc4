#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "hpdcnn/errors.hpp"
#include "hpdcnn/hpdnet.hpp"
#include "test_support.hpp"

using namespace hpdcnn;
using hpdcnn::testing::random_hermitian;
using hpdcnn::testing::random_hpd;
using hpdcnn::testing::rel_err;

namespace {

double orthogonality_error(const ComplexMatrix& w) {
  return frobenius_norm(w * adjoint(w) - ComplexMatrix::identity(w.rows()));
}

// Real matrix products for the term-by-term expansion of W X W^H.
using Real = std::vector<std::vector<double>>;
Real part(const ComplexMatrix& m, bool imag) {
  Real r(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r[i][j] = imag ? m.im(i, j) : m.re(i, j);
  return r;
}
Real mul(const Real& a, const Real& b) {
  Real c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}
Real tr(const Real& a) {
  Real t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}
Real add(const Real& a, const Real& b, double s = 1.0) {
  Real c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) c[i][j] += s * b[i][j];
  return c;
}

HpdNetParams two_layer(std::mt19937_64& rng, std::size_t m1, std::size_t m2, const HpdMatrix& x,
                       bool active) {
  auto p = init_params({3, m1, m2}, 1.0, rng());
  // Thresholds between eigenvalues so ReEig is active but away from kinks.
  HpdMatrix cur = x;
  for (auto& layer : p.layers) {
    const auto mapped = bimap_forward(layer.w, cur);
    const auto e = hermitian_eig(mapped);
    layer.tau = active ? std::sqrt(e.lam[0] * e.lam[1]) : 0.5 * e.lam[0];
    cur = reeig_forward(mapped, layer.tau, MatrixPath::Exact);
  }
  return p;
}

// Central differences on every real and imaginary weight entry.
double max_weight_grad_error(const HpdNetParams& p, const HpdMatrix& x, MatrixPath path,
                             const ComplexMatrix& g) {
  LayerTape tape;
  hpdnet_forward(p, x, path, &tape);
  const auto grads = hpdnet_backward(p, tape, g);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    for (int part_im = 0; part_im < 2; ++part_im) {
      for (std::size_t i = 0; i < p.layers[k].w.rows(); ++i) {
        for (std::size_t j = 0; j < p.layers[k].w.cols(); ++j) {
          auto plus = p, minus = p;
          (part_im ? plus.layers[k].w.im(i, j) : plus.layers[k].w.re(i, j)) += h;
          (part_im ? minus.layers[k].w.im(i, j) : minus.layers[k].w.re(i, j)) -= h;
          const double numeric =
              (inner(g, hpdnet_forward(plus, x, path)) - inner(g, hpdnet_forward(minus, x, path))) /
              (2 * h);
          const double analytic =
              part_im ? grads.w[k].im(i, j) : grads.w[k].re(i, j);
          worst = std::max(worst, rel_err(analytic, numeric));
        }
      }
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("bimap with the identity weight") {
  std::mt19937_64 rng(1);
  const auto x = random_hpd(rng, 3, 10.0);
  CHECK(bimap_forward(ComplexMatrix::identity(3), x).mat() == x.mat());
}

TEST_CASE("bimap with a row selector gives the principal submatrix") {
  const double d[] = {1, 2, 3};
  const auto w = ComplexMatrix::from_rows({{1, 0, 0}, {0, 1, 0}});
  const auto y = bimap_forward(w, make_hermitian(ComplexMatrix::diagonal(d)));
  const double e[] = {1, 2};
  CHECK(y.mat() == ComplexMatrix::diagonal(e));
}

TEST_CASE("bimap equals its real and imaginary expansion") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = init_params({3, 2}, 1.0, rng()).layers[0].w;
    const auto x = random_hpd(rng, 3, 10.0);
    const auto y = bimap_forward(w, x);
    const Real wr = part(w, false), wi = part(w, true);
    const Real xr = part(x.mat(), false), xi = part(x.mat(), true);
    // (Wr + jWi)(Xr + jXi)(Wr^T - jWi^T)
    const Real ar = add(mul(wr, xr), mul(wi, xi), -1.0);
    const Real ai = add(mul(wr, xi), mul(wi, xr));
    const Real yr = add(mul(ar, tr(wr)), mul(ai, tr(wi)));
    const Real yi = add(mul(ai, tr(wr)), mul(ar, tr(wi)), -1.0);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(std::abs(y.mat().re(i, j) - yr[i][j]) < 1e-12);
        CHECK(std::abs(y.mat().im(i, j) - yi[i][j]) < 1e-12);
      }
    }
  }
}

TEST_CASE("bimap rejects mismatched shapes") {
  CHECK_THROWS_AS(bimap_forward(ComplexMatrix(2, 2), make_hermitian(ComplexMatrix::identity(3))),
                  Error);
}

TEST_CASE("reeig examples") {
  std::mt19937_64 rng(3);
  const auto x = random_hpd(rng, 3, 10.0, 5.0);
  CHECK(reeig_forward(x, 0.1, MatrixPath::Exact).mat() == x.mat());
  const double tau = 0.4;
  const double d[] = {tau / 2, 2 * tau};
  const double want[] = {tau, 2 * tau};
  for (MatrixPath path : {MatrixPath::Exact, MatrixPath::Fast}) {
    const auto r = reeig_forward(make_hermitian(ComplexMatrix::diagonal(d)), tau, path);
    CHECK(max_abs_diff(r.mat(), ComplexMatrix::diagonal(want)) < 1e-3 * tau);
  }
}

TEST_CASE("reeig fast and exact paths agree") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = random_hpd(rng, 3, 100.0, 3.0);
    const auto e = hermitian_eig(x);
    const double tau = e.lam[0] * std::pow(e.lam[2] / e.lam[0], 0.37);
    const auto a = reeig_forward(x, tau, MatrixPath::Exact);
    const auto b = reeig_forward(x, tau, MatrixPath::Fast);
    CHECK(relative_frobenius(b.mat(), a.mat()) < 1e-3);
    CHECK(hermitian_eig(b).lam[0] >= tau - 1e-3);
  }
}

TEST_CASE("fast reeig falls back to the exact clamp when the floor is missed") {
  std::mt19937_64 rng(5);
  const double tau = 0.02;
  const double lam[] = {tau - 0.01, 50.0, 100.0};
  const ComplexMatrix q = random_hpd(rng, 3, 2.0).mat();
  const auto u = hermitian_eig(q).u;
  const HpdMatrix x = make_hermitian(u * ComplexMatrix::diagonal(lam) * adjoint(u));
  const double raw_floor = hermitian_eig(clamp_ns(x, tau)).lam.front();
  REQUIRE(raw_floor < tau - kReEigFloorSlack);

  ReEigTape tape;
  const HpdMatrix y = reeig_forward(x, tau, MatrixPath::Fast, &tape);
  CHECK(tape.path == MatrixPath::Exact);
  CHECK(tape.eig.has_value());
  CHECK(max_abs_diff(y.mat(), reeig_forward(x, tau, MatrixPath::Exact).mat()) < 1e-12);
  CHECK(hermitian_eig(y).lam.front() >= tau - 1e-12);
}

TEST_CASE("logeig examples") {
  CHECK(frobenius_norm(logeig_forward(make_hermitian(ComplexMatrix::identity(3)),
                                      MatrixPath::Exact)) == 0.0);
  const auto ee = make_hermitian(ComplexMatrix::identity(2) * std::exp(1.0));
  CHECK(max_abs_diff(logeig_forward(ee, MatrixPath::Exact), ComplexMatrix::identity(2)) < 1e-14);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_hpd(rng, 3, 100.0, 2.0);
    CHECK(relative_frobenius(logeig_forward(x, MatrixPath::Fast),
                             logeig_forward(x, MatrixPath::Exact)) < 1e-3);
  }
}

TEST_CASE("hpdnet_forward examples") {
  const HpdNetParams empty = init_params({3}, 1.0, 1);
  CHECK(empty.layers.empty());
  CHECK(frobenius_norm(hpdnet_forward(empty, make_hermitian(ComplexMatrix::identity(3)),
                                      MatrixPath::Exact)) == 0.0);
  std::mt19937_64 rng(6);
  const auto x = random_hpd(rng, 3, 10.0, 2.0);
  HpdNetParams transparent{{{ComplexMatrix::identity(3), 1e-3}}, 3};
  CHECK(max_abs_diff(hpdnet_forward(transparent, x, MatrixPath::Exact),
                     logeig_forward(x, MatrixPath::Exact)) < 1e-14);
  const auto p = init_params({3, 3, 2}, 1e-2, 9);
  const auto y = hpdnet_forward(p, x, MatrixPath::Exact);
  CHECK(y.rows() == 2);
  CHECK(is_hermitian(y));
}

TEST_CASE("HPD closure and ReEig floor through random networks") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const auto x = random_hpd(rng, 3, 100.0, 1.0);
    const double tau = 0.05;
    const auto p = init_params({3, 3, 2}, tau, rng());
    for (MatrixPath path : {MatrixPath::Exact, MatrixPath::Fast}) {
      LayerTape tape;
      hpdnet_forward(p, x, path, &tape);
      HpdMatrix cur = x;
      for (std::size_t k = 0; k < p.layers.size(); ++k) {
        const auto& rec = tape.layers[k];
        CHECK(satisfies_hpd_invariants(rec.input.mat()));
        CHECK(satisfies_hpd_invariants(rec.mapped.mat()));
        const auto out = reeig_forward(rec.mapped, tau, path);
        CHECK(satisfies_hpd_invariants(out.mat()));
        CHECK(hermitian_eig(out).lam[0] >= tau - 1e-3);
      }
    }
  }
}

TEST_CASE("fast and exact networks agree on well-conditioned input") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_hpd(rng, 3, 100.0, 2.0);
    const auto p = init_params({3, 3, 3}, 0.1, rng());
    const auto a = hpdnet_forward(p, x, MatrixPath::Exact);
    const auto b = hpdnet_forward(p, x, MatrixPath::Fast);
    CHECK(relative_frobenius(b, a) < 2e-3);
  }
}

TEST_CASE("backward with zero upstream gradient is zero") {
  std::mt19937_64 rng(9);
  const auto x = random_hpd(rng, 3, 10.0);
  const auto p = init_params({3, 3, 2}, 0.1, 1);
  LayerTape tape;
  hpdnet_forward(p, x, MatrixPath::Exact, &tape);
  const auto g = hpdnet_backward(p, tape, ComplexMatrix(2, 2));
  for (const auto& w : g.w) CHECK(frobenius_norm(w) == 0.0);
  CHECK(frobenius_norm(g.input) == 0.0);
}

TEST_CASE("single BiMap layer with trace loss") {
  // L = Re tr(W X W^H) has dL/dW = 2 W X.
  std::mt19937_64 rng(10);
  const auto x = random_hpd(rng, 3, 10.0);
  const auto p = init_params({3, 2}, 1.0, 4);
  LayerRecord rec{x, bimap_forward(p.layers[0].w, x), {}};
  rec.reeig.inactive = true;
  LayerTape tape;
  tape.layers.push_back(rec);
  // Bypass LogEig by differentiating the BiMap alone.
  const ComplexMatrix gw = ComplexMatrix::identity(2) * 2.0 * p.layers[0].w * x.mat();
  const double h = 1e-5;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      for (int im = 0; im < 2; ++im) {
        auto wp = p.layers[0].w, wm = p.layers[0].w;
        (im ? wp.im(i, j) : wp.re(i, j)) += h;
        (im ? wm.im(i, j) : wm.re(i, j)) -= h;
        const double numeric = (trace(bimap_forward(wp, x).mat()).real() -
                                trace(bimap_forward(wm, x).mat()).real()) /
                               (2 * h);
        CHECK(rel_err(im ? gw.im(i, j) : gw.re(i, j), numeric) < 1e-7);
      }
    }
  }
}

TEST_CASE("two-layer network gradients match finite differences") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    const auto x = random_hpd(rng, 3, 20.0, 2.0);
    const bool active = trial % 2 == 0;
    const auto p = two_layer(rng, 3, trial < 3 ? 3 : 2, x, active);
    const auto g = random_hermitian(rng, p.output_order());
    CHECK(max_weight_grad_error(p, x, MatrixPath::Exact, g) < 1e-4);
    CHECK(max_weight_grad_error(p, x, MatrixPath::Fast, g) < 1e-3);
  }
}

TEST_CASE("input gradient matches finite differences") {
  std::mt19937_64 rng(12);
  const auto x = random_hpd(rng, 3, 20.0, 2.0);
  const auto p = two_layer(rng, 3, 2, x, true);
  const auto g = random_hermitian(rng, 2);
  const auto d = random_hermitian(rng, 3);
  for (MatrixPath path : {MatrixPath::Exact, MatrixPath::Fast}) {
    LayerTape tape;
    hpdnet_forward(p, x, path, &tape);
    const double analytic = inner(hpdnet_backward(p, tape, g).input, d);
    auto f = [&](const ComplexMatrix& m) {
      return inner(g, hpdnet_forward(p, HpdMatrix::adopt(m), path));
    };
    CHECK(rel_err(analytic, hpdcnn::testing::central_diff(f, x.mat(), d, 1e-5)) < 1e-4);
  }
}

TEST_CASE("backward rejects a mismatched tape") {
  const auto p = init_params({3, 3}, 0.1, 1);
  LayerTape tape;
  CHECK_THROWS_AS(hpdnet_backward(p, tape, ComplexMatrix(3, 3)), Error);
}

TEST_CASE("tangent projection") {
  std::mt19937_64 rng(13);
  const auto w = init_params({3, 2}, 1.0, 3).layers[0].w;
  const auto g = hpdcnn::testing::random_complex(rng, 2, 3);
  const auto t = stiefel_project(w, g);
  // tangent vectors satisfy T W^H + W T^H = 0
  CHECK(frobenius_norm(t * adjoint(w) + w * adjoint(t)) < 1e-12);
  // projection is idempotent
  CHECK(max_abs_diff(stiefel_project(w, t), t) < 1e-12);
}

TEST_CASE("stiefel_update examples") {
  std::mt19937_64 rng(14);
  const auto w = init_params({3, 2}, 1.0, 5).layers[0].w;
  CHECK(max_abs_diff(stiefel_update(w, ComplexMatrix(2, 3), 0.1), w) < 1e-14);
  const auto i3 = ComplexMatrix::identity(3);
  const auto step = stiefel_project(i3, hpdcnn::testing::random_complex(rng, 3, 3, 0.01));
  CHECK(orthogonality_error(stiefel_update(i3, step, 1.0)) < 1e-10);
  auto cur = w;
  for (int k = 0; k < 1000; ++k) {
    const auto t = stiefel_project(cur, hpdcnn::testing::random_complex(rng, 2, 3));
    cur = stiefel_update(cur, t, 0.05);
  }
  CHECK(orthogonality_error(cur) < 1e-6);
}

TEST_CASE("init_params") {
  const auto a = init_params({3, 3}, 0.1, 42);
  CHECK(orthogonality_error(a.layers[0].w) < 1e-12);
  CHECK(frobenius_norm(adjoint(a.layers[0].w) * a.layers[0].w - ComplexMatrix::identity(3)) <
        1e-12);
  CHECK(init_params({3, 3}, 0.1, 42) == a);
  CHECK_FALSE(init_params({3, 3}, 0.1, 43) == a);
  CHECK_THROWS_AS(init_params({3, 2, 3}, 0.1, 1), Error);
  CHECK_THROWS_AS(init_params({}, 0.1, 1), Error);
}

TEST_CASE("checkpoint round trip") {
  const auto p = init_params({3, 3, 2}, 0.25, 8);
  std::stringstream ss;
  write_hpdnet(ss, p);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "HPDN");
  // header + per layer (8 + 16 * m * n + 8)
  CHECK(bytes.size() == 12 + (16 + 16 * 9) + (16 + 16 * 6));
  const auto q = read_hpdnet(ss);
  CHECK(q == p);
  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(read_hpdnet(bad), Error);
  std::stringstream cut(bytes.substr(0, 30));
  try {
    read_hpdnet(cut);
    FAIL("expected TruncatedFile");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncatedFile);
  }
}

TEST_CASE("path names") {
  CHECK(parse_path("fast") == MatrixPath::Fast);
  CHECK(to_string(MatrixPath::Exact) == "exact");
  CHECK_THROWS_AS(parse_path("svd"), Error);
}
