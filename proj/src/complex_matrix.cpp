#include "hpdcnn/complex_matrix.hpp"

#include <algorithm>
#include <cmath>

#include "hpdcnn/errors.hpp"

namespace hpdcnn {

namespace {

void require_same_shape(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "matrix shapes differ");
  }
}

}  // namespace

ComplexMatrix::ComplexMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), re_(rows * cols, 0.0), im_(rows * cols, 0.0) {}

ComplexMatrix ComplexMatrix::identity(std::size_t n) {
  ComplexMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.re(i, i) = 1.0;
  return m;
}

ComplexMatrix ComplexMatrix::diagonal(std::span<const double> values) {
  ComplexMatrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m.re(i, i) = values[i];
  return m;
}

ComplexMatrix ComplexMatrix::from_rows(
    std::initializer_list<std::initializer_list<double>> re,
    std::initializer_list<std::initializer_list<double>> im) {
  const std::size_t rows = re.size();
  const std::size_t cols = rows == 0 ? 0 : re.begin()->size();
  ComplexMatrix m(rows, cols);
  std::size_t i = 0;
  for (const auto& row : re) {
    if (row.size() != cols) throw Error(ErrorCode::DimensionMismatch, "ragged rows");
    std::size_t j = 0;
    for (double v : row) m.re(i, j++) = v;
    ++i;
  }
  if (im.size() != 0) {
    if (im.size() != rows) throw Error(ErrorCode::DimensionMismatch, "imaginary part shape");
    i = 0;
    for (const auto& row : im) {
      if (row.size() != cols) throw Error(ErrorCode::DimensionMismatch, "ragged rows");
      std::size_t j = 0;
      for (double v : row) m.im(i, j++) = v;
      ++i;
    }
  }
  return m;
}

ComplexMatrix& ComplexMatrix::operator+=(const ComplexMatrix& rhs) {
  require_same_shape(*this, rhs);
  for (std::size_t k = 0; k < re_.size(); ++k) {
    re_[k] += rhs.re_[k];
    im_[k] += rhs.im_[k];
  }
  return *this;
}

ComplexMatrix& ComplexMatrix::operator-=(const ComplexMatrix& rhs) {
  require_same_shape(*this, rhs);
  for (std::size_t k = 0; k < re_.size(); ++k) {
    re_[k] -= rhs.re_[k];
    im_[k] -= rhs.im_[k];
  }
  return *this;
}

ComplexMatrix& ComplexMatrix::operator*=(double s) noexcept {
  for (auto& v : re_) v *= s;
  for (auto& v : im_) v *= s;
  return *this;
}

ComplexMatrix& ComplexMatrix::add_identity(double s) noexcept {
  const std::size_t n = std::min(rows_, cols_);
  for (std::size_t i = 0; i < n; ++i) re(i, i) += s;
  return *this;
}

bool ComplexMatrix::operator==(const ComplexMatrix& rhs) const noexcept {
  return rows_ == rhs.rows_ && cols_ == rhs.cols_ && re_ == rhs.re_ && im_ == rhs.im_;
}

ComplexMatrix operator+(ComplexMatrix lhs, const ComplexMatrix& rhs) {
  lhs += rhs;
  return lhs;
}

ComplexMatrix operator-(ComplexMatrix lhs, const ComplexMatrix& rhs) {
  lhs -= rhs;
  return lhs;
}

ComplexMatrix operator*(ComplexMatrix m, double s) noexcept {
  m *= s;
  return m;
}

ComplexMatrix operator*(double s, ComplexMatrix m) noexcept {
  m *= s;
  return m;
}

ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "inner dimensions differ in product");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  ComplexMatrix c(n, m);
  const double* ar = a.re_data().data();
  const double* ai = a.im_data().data();
  const double* br = b.re_data().data();
  const double* bi = b.im_data().data();
  double* cr = c.re_data().data();
  double* ci = c.im_data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xr = ar[i * k + p];
      const double xi = ai[i * k + p];
      for (std::size_t j = 0; j < m; ++j) {
        cr[i * m + j] += xr * br[p * m + j] - xi * bi[p * m + j];
        ci[i * m + j] += xr * bi[p * m + j] + xi * br[p * m + j];
      }
    }
  }
  return c;
}

ComplexMatrix adjoint(const ComplexMatrix& m) {
  ComplexMatrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      t.re(j, i) = m.re(i, j);
      t.im(j, i) = -m.im(i, j);
    }
  }
  return t;
}

ComplexMatrix hermitian_part(const ComplexMatrix& m) {
  if (!m.is_square()) throw Error(ErrorCode::NotSquare, "hermitian part of non-square matrix");
  const std::size_t n = m.rows();
  ComplexMatrix h(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    h.re(i, i) = m.re(i, i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double r = 0.5 * (m.re(i, j) + m.re(j, i));
      const double c = 0.5 * (m.im(i, j) - m.im(j, i));
      h.re(i, j) = r;
      h.re(j, i) = r;
      h.im(i, j) = c;
      h.im(j, i) = -c;
    }
  }
  return h;
}

std::complex<double> trace(const ComplexMatrix& m) {
  if (!m.is_square()) throw Error(ErrorCode::NotSquare, "trace of non-square matrix");
  std::complex<double> t{0.0, 0.0};
  for (std::size_t i = 0; i < m.rows(); ++i) t += m.at(i, i);
  return t;
}

double frobenius_norm(const ComplexMatrix& m) noexcept {
  double s = 0.0;
  for (double v : m.re_data()) s += v * v;
  for (double v : m.im_data()) s += v * v;
  return std::sqrt(s);
}

double inner(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_shape(a, b);
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    s += a.re_data()[k] * b.re_data()[k] + a.im_data()[k] * b.im_data()[k];
  }
  return s;
}

double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_shape(a, b);
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    d = std::max(d, std::abs(a.re_data()[k] - b.re_data()[k]));
    d = std::max(d, std::abs(a.im_data()[k] - b.im_data()[k]));
  }
  return d;
}

bool all_finite(const ComplexMatrix& m) noexcept {
  for (double v : m.re_data()) {
    if (!std::isfinite(v)) return false;
  }
  for (double v : m.im_data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double relative_frobenius(const ComplexMatrix& a, const ComplexMatrix& b) {
  const double diff = frobenius_norm(a - b);
  const double ref = frobenius_norm(b);
  return ref > 0.0 ? diff / ref : diff;
}

}  // namespace hpdcnn
