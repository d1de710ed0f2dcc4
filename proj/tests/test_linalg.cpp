#include <cmath>
#include <random>

#include "doctest.h"
#include "hpdcnn/errors.hpp"
#include "hpdcnn/linalg.hpp"
#include "test_support.hpp"

using namespace hpdcnn;
using hpdcnn::testing::random_hermitian;
using hpdcnn::testing::random_hpd;

namespace {

ComplexMatrix reconstruct(const EigPair& e) {
  return e.u * ComplexMatrix::diagonal(e.lam) * adjoint(e.u);
}

// Closed-form eigenvalues of a 2x2 Hermitian [[a, b], [conj(b), d]].
std::pair<double, double> eig2(double a, double d, double babs) {
  const double m = 0.5 * (a + d);
  const double r = std::sqrt(0.25 * (a - d) * (a - d) + babs * babs);
  return {m - r, m + r};
}

}  // namespace

TEST_CASE("make_hermitian keeps the identity") {
  const auto h = make_hermitian(ComplexMatrix::identity(3));
  CHECK(h.mat() == ComplexMatrix::identity(3));
}

TEST_CASE("make_hermitian symmetrizes then rejects an indefinite result") {
  const auto m = ComplexMatrix::from_rows({{1, 2}, {3, 1}});
  const auto sym = make_hermitian(m, false);
  CHECK(sym.mat().re(0, 1) == 2.5);
  CHECK(sym.mat().re(1, 0) == 2.5);
  const auto [lo, hi] = eig2(1, 1, 2.5);
  CHECK(lo == doctest::Approx(-1.5));
  CHECK(hi == doctest::Approx(3.5));
  try {
    make_hermitian(m);
    FAIL("expected NotPositiveDefinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotPositiveDefinite);
  }
}

TEST_CASE("make_hermitian accepts the complex 2x2 example") {
  const auto m = ComplexMatrix::from_rows({{2, 0}, {0, 2}}, {{0, 1}, {-1, 0}});
  const auto h = make_hermitian(m);
  CHECK(h.mat() == m);
  const auto e = hermitian_eig(h);
  const auto [lo, hi] = eig2(2, 2, 1);
  CHECK(e.lam[0] == doctest::Approx(lo).epsilon(1e-12));
  CHECK(e.lam[1] == doctest::Approx(hi).epsilon(1e-12));
  CHECK(e.lam[0] == doctest::Approx(1.0));
  CHECK(e.lam[1] == doctest::Approx(3.0));
}

TEST_CASE("make_hermitian rejects non-square input") {
  CHECK_THROWS_AS(make_hermitian(ComplexMatrix(2, 3)), Error);
}

TEST_CASE("make_hermitian zeroes the imaginary diagonal") {
  auto m = ComplexMatrix::identity(2);
  m.im(0, 0) = 0.3;
  m.im(1, 1) = -0.2;
  const auto h = make_hermitian(m);
  CHECK(h.mat().im(0, 0) == 0.0);
  CHECK(h.mat().im(1, 1) == 0.0);
}

TEST_CASE("hermitian_eig of a diagonal matrix") {
  const double d[] = {1, 2, 3};
  const auto e = hermitian_eig(ComplexMatrix::diagonal(d));
  CHECK(e.lam == std::vector<double>{1, 2, 3});
  CHECK(e.u == ComplexMatrix::identity(3));
}

TEST_CASE("hermitian_eig sorts ascending") {
  const double d[] = {3, 1, 2};
  const auto e = hermitian_eig(ComplexMatrix::diagonal(d));
  CHECK(e.lam == std::vector<double>{1, 2, 3});
}

TEST_CASE("hermitian_eig reconstructs random HPD and Hermitian matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 6);
    const ComplexMatrix h = trial % 2 ? random_hpd(rng, n, 50.0).mat() : random_hermitian(rng, n);
    const auto e = hermitian_eig(h);
    CHECK(frobenius_norm(reconstruct(e) - h) <= 1e-9 * std::max(1.0, frobenius_norm(h)));
    CHECK(frobenius_norm(adjoint(e.u) * e.u - ComplexMatrix::identity(n)) <= 1e-9);
    for (std::size_t i = 1; i < n; ++i) CHECK(e.lam[i - 1] <= e.lam[i]);
  }
}

TEST_CASE("hermitian_eig gauge: largest entry of each eigenvector is real positive") {
  std::mt19937_64 rng(5);
  const auto h = random_hpd(rng, 3, 10.0);
  const auto e = hermitian_eig(h);
  for (std::size_t j = 0; j < 3; ++j) {
    std::size_t best = 0;
    double mag = -1;
    for (std::size_t i = 0; i < 3; ++i) {
      if (std::norm(e.u.at(i, j)) > mag) {
        mag = std::norm(e.u.at(i, j));
        best = i;
      }
    }
    CHECK(e.u.im(best, j) == 0.0);
    CHECK(e.u.re(best, j) > 0.0);
  }
}

TEST_CASE("hermitian_eig is bit-deterministic") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto h = random_hpd(rng, 3, 100.0);
    const auto a = hermitian_eig(h);
    const auto b = hermitian_eig(h);
    CHECK(a.u == b.u);
    CHECK(a.lam == b.lam);
  }
}

TEST_CASE("eigenvalues are invariant under unitary congruence") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_hpd(rng, 3, 100.0, 10.0);
    const auto v = random_unitary(3, rng);
    const auto e1 = hermitian_eig(c);
    const auto e2 = hermitian_eig(hermitian_part(v * c.mat() * adjoint(v)));
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(e1.lam[i] - e2.lam[i]) <= 1e-9);
  }
}

TEST_CASE("random_unitary is unitary") {
  std::mt19937_64 rng(1);
  const auto u = random_unitary(4, rng);
  CHECK(frobenius_norm(adjoint(u) * u - ComplexMatrix::identity(4)) < 1e-12);
}

TEST_CASE("matrix_fn_eig log of identity is zero") {
  const auto r = matrix_fn_eig(ComplexMatrix::identity(3), [](double x) { return std::log(x); });
  CHECK(frobenius_norm(r) == 0.0);
}

TEST_CASE("matrix_fn_eig diagonal log") {
  const double d[] = {std::exp(1.0), std::exp(2.0)};
  const auto r = matrix_fn_eig(ComplexMatrix::diagonal(d), [](double x) { return std::log(x); });
  CHECK(r.re(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.re(1, 1) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(r.re(0, 1) == 0.0);
}

TEST_CASE("matrix_fn_eig sqrt squares back to the input") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = random_hpd(rng, 3, 1e3, 5.0);
    const auto s = matrix_fn_eig(c, [](double x) { return std::sqrt(x); });
    CHECK(is_hermitian(s, 1e-9));
    CHECK(frobenius_norm(s * s - c.mat()) <= 1e-8 * frobenius_norm(c.mat()));
  }
}

TEST_CASE("matrix_fn_eig reports a domain error") {
  const double d[] = {-1.0, 2.0};
  try {
    matrix_fn_eig(ComplexMatrix::diagonal(d), [](double x) { return std::log(x); });
    FAIL("expected DomainError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DomainError);
  }
}

TEST_CASE("spectral_backward matches finite differences of a spectral function") {
  std::mt19937_64 rng(23);
  auto f = [](double x) { return std::log(x); };
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = random_hpd(rng, 3, 20.0, 2.0);
    const auto g = random_hermitian(rng, 3);
    const auto d = random_hermitian(rng, 3);
    const auto e = hermitian_eig(c);
    std::vector<double> fv(3), fp(3);
    for (int i = 0; i < 3; ++i) {
      fv[i] = std::log(e.lam[i]);
      fp[i] = 1.0 / e.lam[i];
    }
    const double analytic = inner(spectral_backward(e, fv, fp, g), d);
    const double h = 1e-6;
    const double numeric = (inner(g, matrix_fn_eig(c.mat() + d * h, f)) -
                            inner(g, matrix_fn_eig(c.mat() - d * h, f))) /
                           (2 * h);
    CHECK(hpdcnn::testing::rel_err(analytic, numeric) < 1e-6);
  }
}

TEST_CASE("spectral_backward uses the derivative on repeated eigenvalues") {
  // f(x) = x^2 on 2I: dF = 2 * 2 * dX.
  const auto c = ComplexMatrix::identity(2) * 2.0;
  const auto e = hermitian_eig(c);
  const std::vector<double> fv{4, 4}, fp{4, 4};
  const auto g = ComplexMatrix::from_rows({{1, 0.5}, {0.5, -1}}, {{0, 0.25}, {-0.25, 0}});
  CHECK(max_abs_diff(spectral_backward(e, fv, fp, g), g * 4.0) < 1e-14);
}

TEST_CASE("regularize examples") {
  const auto z = regularize(ComplexMatrix(3, 3), 1e-6);
  CHECK(z.mat() == ComplexMatrix::identity(3) * 1e-6);
  std::mt19937_64 rng(2);
  const auto c = random_hpd(rng, 3, 10.0);
  CHECK(regularize(c.mat(), 0.0).mat() == c.mat());
  const double d[] = {-0.5, 1.0, 2.0};
  const auto u = random_unitary(3, rng);
  const auto shifted = regularize(u * ComplexMatrix::diagonal(d) * adjoint(u), 1.0);
  CHECK(hermitian_eig(shifted).lam[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("cholesky and condition estimate") {
  const double d[] = {1.0, 4.0, 100.0};
  const auto c = ComplexMatrix::diagonal(d);
  const auto l = cholesky(c);
  REQUIRE(l);
  CHECK(l->re(2, 2) == 10.0);
  // ||diag||_F ||diag^-1||_F
  const double expect = std::sqrt(1 + 16 + 1e4) * std::sqrt(1 + 1.0 / 16 + 1e-4);
  CHECK(*condition_estimate(c) == doctest::Approx(expect));
  const double bad[] = {1.0, -1.0};
  CHECK_FALSE(cholesky(ComplexMatrix::diagonal(bad)));
  CHECK_FALSE(condition_estimate(ComplexMatrix::diagonal(bad)));
}

TEST_CASE("satisfies_hpd_invariants") {
  std::mt19937_64 rng(9);
  CHECK(satisfies_hpd_invariants(random_hpd(rng, 3, 10.0).mat()));
  auto m = ComplexMatrix::identity(2);
  m.im(0, 0) = 1e-3;
  CHECK_FALSE(satisfies_hpd_invariants(m));
  const double bad[] = {1.0, -1.0};
  CHECK_FALSE(satisfies_hpd_invariants(ComplexMatrix::diagonal(bad)));
  CHECK_FALSE(satisfies_hpd_invariants(ComplexMatrix(2, 3)));
}

TEST_CASE("orthonormal_columns rejects collapsed columns") {
  auto a = ComplexMatrix(3, 2);
  a.re(0, 0) = 1;
  a.re(0, 1) = 2;
  CHECK_THROWS_AS(orthonormal_columns(a), Error);
}

TEST_CASE("error classification") {
  CHECK(classify(ErrorCode::BadConfig) == ErrorClass::Usage);
  CHECK(classify(ErrorCode::BadMagic) == ErrorClass::Data);
  CHECK(classify(ErrorCode::NotConverged) == ErrorClass::Numeric);
  CHECK(std::string(to_string(ErrorCode::NotPositiveDefinite)) == "NotPositiveDefinite");
}
