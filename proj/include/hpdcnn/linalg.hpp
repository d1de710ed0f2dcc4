#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "hpdcnn/complex_matrix.hpp"

namespace hpdcnn {

/// Absolute per-entry tolerance for the Hermitian symmetry check.
inline constexpr double kHermitianTolerance = 1e-10;

/// Complex Hermitian positive-definite matrix.
///
/// The diagonal imaginary part is exactly zero and the off-diagonal parts are
/// exactly conjugate-symmetric; positive definiteness is checked by
/// `make_hermitian` and assumed by `adopt`.
class HpdMatrix {
 public:
  HpdMatrix() = default;

  /// Takes ownership of a matrix known to be positive definite by
  /// construction (e.g. a congruence of an HPD matrix). Projects onto the
  /// Hermitian part but performs no definiteness check.
  static HpdMatrix adopt(ComplexMatrix m);

  const ComplexMatrix& mat() const noexcept { return mat_; }
  std::size_t order() const noexcept { return mat_.rows(); }

  bool operator==(const HpdMatrix& rhs) const noexcept { return mat_ == rhs.mat_; }

 private:
  explicit HpdMatrix(ComplexMatrix m) : mat_(std::move(m)) {}
  ComplexMatrix mat_;
};

/// Eigendecomposition U diag(lam) U^H of a Hermitian matrix.
struct EigPair {
  ComplexMatrix u;          // unitary, eigenvectors in columns
  std::vector<double> lam;  // ascending
};

/// Symmetrizes `m` to (m + m^H)/2 with a zero imaginary diagonal. Throws
/// NotSquare, and NotPositiveDefinite when `require_pd` is set and the result
/// has a non-positive eigenvalue.
HpdMatrix make_hermitian(const ComplexMatrix& m, bool require_pd = true);

bool is_hermitian(const ComplexMatrix& m, double tol = kHermitianTolerance) noexcept;

/// Full invariant check used by tests and diagnostics: square, finite,
/// Hermitian within `tol`, zero imaginary diagonal, smallest eigenvalue > 0.
bool satisfies_hpd_invariants(const ComplexMatrix& m, double tol = kHermitianTolerance);

/// Cyclic complex Jacobi eigendecomposition of a Hermitian matrix.
///
/// Rotations run in fixed (p, q) row-major order; eigenvalues are sorted
/// ascending and each eigenvector's largest-magnitude entry is made real
/// positive, so the result is a deterministic function of the input bits.
/// Throws NoConvergence after `kMaxJacobiSweeps` sweeps.
EigPair hermitian_eig(const ComplexMatrix& h);
inline EigPair hermitian_eig(const HpdMatrix& h) { return hermitian_eig(h.mat()); }

inline constexpr int kMaxJacobiSweeps = 64;

/// U diag(values) U^H, Hermitian-projected.
ComplexMatrix spectral_apply(const EigPair& eig, std::span<const double> values);

/// U diag(f(lam)) U^H. Throws DomainError if f is not finite at some eigenvalue.
ComplexMatrix matrix_fn_eig(const ComplexMatrix& h, const std::function<double(double)>& f);
inline ComplexMatrix matrix_fn_eig(const HpdMatrix& h, const std::function<double(double)>& f) {
  return matrix_fn_eig(h.mat(), f);
}

/// Reverse-mode rule for F(X) = U f(Lambda) U^H (Loewner / divided differences):
/// returns U (K o (U^H G U)) U^H with K_ij = (f_i - f_j)/(lam_i - lam_j), or
/// f'_i when |lam_i - lam_j| < kDegenerateGap.
ComplexMatrix spectral_backward(const EigPair& eig, std::span<const double> f,
                                std::span<const double> fprime, const ComplexMatrix& grad);

inline constexpr double kDegenerateGap = 1e-9;

/// c + eps I.
HpdMatrix regularize(const ComplexMatrix& c, double eps);

/// Lower-triangular L with L L^H = a, or nullopt if `a` is not numerically
/// positive definite. Only the lower triangle of `a` is read.
std::optional<ComplexMatrix> cholesky(const ComplexMatrix& a);

/// Inverse via Cholesky, or nullopt if `a` is not positive definite.
std::optional<ComplexMatrix> hpd_inverse(const ComplexMatrix& a);

/// Frobenius condition number ||a||_F ||a^-1||_F (an upper bound on
/// n * lambda_max / lambda_min), or nullopt if `a` is not positive definite.
std::optional<double> condition_estimate(const ComplexMatrix& a);

/// Random unitary n x n from the QR factor of a complex Gaussian matrix.
template <class Rng>
ComplexMatrix random_unitary(std::size_t n, Rng& rng);

/// Thin QR of a tall matrix (rows >= cols) by twice-iterated modified
/// Gram-Schmidt; Q has orthonormal columns and R a positive real diagonal.
/// Throws RankDeficient if a column collapses.
ComplexMatrix orthonormal_columns(const ComplexMatrix& a);

}  // namespace hpdcnn

#include <random>

namespace hpdcnn {

template <class Rng>
ComplexMatrix random_unitary(std::size_t n, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  ComplexMatrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      g.re(i, j) = gauss(rng);
      g.im(i, j) = gauss(rng);
    }
  }
  return orthonormal_columns(g);
}

}  // namespace hpdcnn
