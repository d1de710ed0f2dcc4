#include "hpdcnn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hpdcnn/errors.hpp"

namespace hpdcnn {

using cplx = std::complex<double>;

HpdMatrix HpdMatrix::adopt(ComplexMatrix m) { return HpdMatrix(hermitian_part(m)); }

HpdMatrix make_hermitian(const ComplexMatrix& m, bool require_pd) {
  if (!m.is_square() || m.empty()) throw Error(ErrorCode::NotSquare, "expected a square matrix");
  HpdMatrix h = HpdMatrix::adopt(m);
  if (require_pd && !cholesky(h.mat())) {
    const EigPair e = hermitian_eig(h.mat());
    throw Error(ErrorCode::NotPositiveDefinite,
                "smallest eigenvalue " + std::to_string(e.lam.front()));
  }
  return h;
}

bool is_hermitian(const ComplexMatrix& m, double tol) noexcept {
  if (!m.is_square()) return false;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = i; j < m.cols(); ++j) {
      if (std::abs(m.re(i, j) - m.re(j, i)) > tol) return false;
      if (std::abs(m.im(i, j) + m.im(j, i)) > tol) return false;
    }
  }
  return true;
}

bool satisfies_hpd_invariants(const ComplexMatrix& m, double tol) {
  if (!m.is_square() || m.empty() || !all_finite(m) || !is_hermitian(m, tol)) return false;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (m.im(i, i) != 0.0) return false;
  }
  return hermitian_eig(hermitian_part(m)).lam.front() > 0.0;
}

EigPair hermitian_eig(const ComplexMatrix& h) {
  if (!h.is_square() || h.empty()) throw Error(ErrorCode::NotSquare, "eigendecomposition");
  const std::size_t n = h.rows();
  std::vector<cplx> a(n * n), v(n * n, cplx{0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = h.at(i, j);
    a[i * n + i] = {h.re(i, i), 0.0};
    v[i * n + i] = 1.0;
  }
  auto A = [&](std::size_t i, std::size_t j) -> cplx& { return a[i * n + j]; };
  auto V = [&](std::size_t i, std::size_t j) -> cplx& { return v[i * n + j]; };

  double total = 0.0;
  for (const auto& z : a) total += std::norm(z);
  const double stop = 1e-30 * total;

  int sweep = 0;
  for (;; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * std::norm(A(p, q));
    }
    if (off <= stop) break;
    if (sweep == kMaxJacobiSweeps) {
      throw Error(ErrorCode::NoConvergence, "Jacobi sweeps exhausted");
    }
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const cplx apq = A(p, q);
        const double b = std::abs(apq);
        if (b == 0.0) continue;
        const cplx e = apq / b;
        const double app = A(p, p).real();
        const double aqq = A(q, q).real();
        const double zeta = (aqq - app) / (2.0 * b);
        double t;
        if (std::abs(zeta) > 1e150) {
          t = 0.5 / zeta;
        } else {
          t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        // J = diag(e, 1) * [[c, s], [-s, c]] acting on (p, q).
        const cplx jpp = e * c, jpq = e * s, jqp = -s, jqq = c;
        for (std::size_t k = 0; k < n; ++k) {
          const cplx xp = A(k, p), xq = A(k, q);
          A(k, p) = xp * jpp + xq * jqp;
          A(k, q) = xp * jpq + xq * jqq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const cplx xp = A(p, k), xq = A(q, k);
          A(p, k) = std::conj(jpp) * xp + std::conj(jqp) * xq;
          A(q, k) = std::conj(jpq) * xp + std::conj(jqq) * xq;
        }
        A(p, q) = 0.0;
        A(q, p) = 0.0;
        A(p, p) = app - t * b;
        A(q, q) = aqq + t * b;
        for (std::size_t k = 0; k < n; ++k) {
          const cplx xp = V(k, p), xq = V(k, q);
          V(k, p) = xp * jpp + xq * jqp;
          V(k, q) = xp * jpq + xq * jqq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return A(x, x).real() < A(y, y).real();
  });

  EigPair out{ComplexMatrix(n, n), std::vector<double>(n)};
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.lam[j] = A(src, src).real();
    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double mag = std::norm(V(k, src));
      if (mag > best_mag) {
        best_mag = mag;
        best = k;
      }
    }
    const cplx pivot = V(best, src);
    const cplx phase = std::conj(pivot) / std::abs(pivot);
    for (std::size_t k = 0; k < n; ++k) out.u.set(k, j, V(k, src) * phase);
    out.u.im(best, j) = 0.0;
  }
  return out;
}

ComplexMatrix spectral_apply(const EigPair& eig, std::span<const double> values) {
  const std::size_t n = eig.lam.size();
  if (values.size() != n) throw Error(ErrorCode::DimensionMismatch, "spectral values");
  ComplexMatrix out(n, n);
  const ComplexMatrix& u = eig.u;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double sr = 0.0, si = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        // u_ik * f_k * conj(u_jk)
        const double ar = u.re(i, k), ai = u.im(i, k);
        const double br = u.re(j, k), bi = -u.im(j, k);
        sr += values[k] * (ar * br - ai * bi);
        si += values[k] * (ar * bi + ai * br);
      }
      out.re(i, j) = sr;
      out.re(j, i) = sr;
      out.im(i, j) = si;
      out.im(j, i) = -si;
    }
    out.im(i, i) = 0.0;
  }
  return out;
}

ComplexMatrix matrix_fn_eig(const ComplexMatrix& h, const std::function<double(double)>& f) {
  const EigPair eig = hermitian_eig(h);
  std::vector<double> values(eig.lam.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = f(eig.lam[i]);
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::DomainError,
                  "function undefined at eigenvalue " + std::to_string(eig.lam[i]));
    }
  }
  return spectral_apply(eig, values);
}

ComplexMatrix spectral_backward(const EigPair& eig, std::span<const double> f,
                                std::span<const double> fprime, const ComplexMatrix& grad) {
  const std::size_t n = eig.lam.size();
  if (f.size() != n || fprime.size() != n || grad.rows() != n || grad.cols() != n) {
    throw Error(ErrorCode::DimensionMismatch, "spectral backward");
  }
  const ComplexMatrix& u = eig.u;
  ComplexMatrix inner_g = adjoint(u) * grad * u;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double gap = eig.lam[i] - eig.lam[j];
      const double k = std::abs(gap) < kDegenerateGap ? fprime[i] : (f[i] - f[j]) / gap;
      inner_g.re(i, j) *= k;
      inner_g.im(i, j) *= k;
    }
  }
  return u * inner_g * adjoint(u);
}

HpdMatrix regularize(const ComplexMatrix& c, double eps) {
  ComplexMatrix m = c;
  m.add_identity(eps);
  return HpdMatrix::adopt(std::move(m));
}

std::optional<ComplexMatrix> cholesky(const ComplexMatrix& a) {
  if (!a.is_square()) throw Error(ErrorCode::NotSquare, "cholesky");
  const std::size_t n = a.rows();
  ComplexMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a.re(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l.re(j, k) * l.re(j, k) + l.im(j, k) * l.im(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l.re(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      // a_ij - sum_k l_ik conj(l_jk)
      double sr = a.re(i, j), si = a.im(i, j);
      for (std::size_t k = 0; k < j; ++k) {
        sr -= l.re(i, k) * l.re(j, k) + l.im(i, k) * l.im(j, k);
        si -= l.im(i, k) * l.re(j, k) - l.re(i, k) * l.im(j, k);
      }
      l.re(i, j) = sr / ljj;
      l.im(i, j) = si / ljj;
    }
  }
  return l;
}

std::optional<ComplexMatrix> hpd_inverse(const ComplexMatrix& a) {
  const auto l = cholesky(a);
  if (!l) return std::nullopt;
  const std::size_t n = a.rows();
  // Forward substitution for L^-1, column by column.
  ComplexMatrix linv(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = c; i < n; ++i) {
      cplx s = (i == c) ? cplx{1.0, 0.0} : cplx{0.0, 0.0};
      for (std::size_t k = c; k < i; ++k) s -= l->at(i, k) * linv.at(k, c);
      linv.set(i, c, s / l->re(i, i));
    }
  }
  return hermitian_part(adjoint(linv) * linv);
}

std::optional<double> condition_estimate(const ComplexMatrix& a) {
  const auto ainv = hpd_inverse(a);
  if (!ainv) return std::nullopt;
  return frobenius_norm(a) * frobenius_norm(*ainv);
}

ComplexMatrix orthonormal_columns(const ComplexMatrix& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (rows < cols) throw Error(ErrorCode::BadDims, "QR needs rows >= cols");
  const double scale = std::max(frobenius_norm(a), 1e-300);
  ComplexMatrix q = a;
  for (std::size_t j = 0; j < cols; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        // r = q_k^H q_j
        cplx r{0.0, 0.0};
        for (std::size_t i = 0; i < rows; ++i) r += std::conj(q.at(i, k)) * q.at(i, j);
        for (std::size_t i = 0; i < rows; ++i) q.set(i, j, q.at(i, j) - r * q.at(i, k));
      }
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < rows; ++i) norm += std::norm(q.at(i, j));
    norm = std::sqrt(norm);
    if (!(norm > 1e-12 * scale)) throw Error(ErrorCode::RankDeficient, "column collapsed in QR");
    for (std::size_t i = 0; i < rows; ++i) {
      q.re(i, j) /= norm;
      q.im(i, j) /= norm;
    }
  }
  return q;
}

}  // namespace hpdcnn
