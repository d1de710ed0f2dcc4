#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>

#include <boost/container/small_vector.hpp>

namespace hpdcnn {

/// Dense complex matrix held as separate real and imaginary row-major parts.
///
/// Storage is inline up to 3x3, which covers the polarimetric covariance
/// workload without heap traffic; larger orders spill to the heap.
class ComplexMatrix {
 public:
  using Storage = boost::container::small_vector<double, 9>;

  ComplexMatrix() = default;
  ComplexMatrix(std::size_t rows, std::size_t cols);

  static ComplexMatrix identity(std::size_t n);
  static ComplexMatrix diagonal(std::span<const double> values);
  /// Builds from nested row lists; `im` may be empty for a real matrix.
  static ComplexMatrix from_rows(std::initializer_list<std::initializer_list<double>> re,
                                 std::initializer_list<std::initializer_list<double>> im = {});

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return rows_ * cols_; }
  bool is_square() const noexcept { return rows_ == cols_; }
  bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

  double& re(std::size_t i, std::size_t j) noexcept { return re_[i * cols_ + j]; }
  double& im(std::size_t i, std::size_t j) noexcept { return im_[i * cols_ + j]; }
  double re(std::size_t i, std::size_t j) const noexcept { return re_[i * cols_ + j]; }
  double im(std::size_t i, std::size_t j) const noexcept { return im_[i * cols_ + j]; }

  std::complex<double> at(std::size_t i, std::size_t j) const noexcept {
    return {re(i, j), im(i, j)};
  }
  void set(std::size_t i, std::size_t j, std::complex<double> v) noexcept {
    re(i, j) = v.real();
    im(i, j) = v.imag();
  }

  std::span<double> re_data() noexcept { return {re_.data(), re_.size()}; }
  std::span<double> im_data() noexcept { return {im_.data(), im_.size()}; }
  std::span<const double> re_data() const noexcept { return {re_.data(), re_.size()}; }
  std::span<const double> im_data() const noexcept { return {im_.data(), im_.size()}; }

  ComplexMatrix& operator+=(const ComplexMatrix& rhs);
  ComplexMatrix& operator-=(const ComplexMatrix& rhs);
  ComplexMatrix& operator*=(double s) noexcept;
  /// Adds `s` to every diagonal entry (real part).
  ComplexMatrix& add_identity(double s) noexcept;

  bool operator==(const ComplexMatrix& rhs) const noexcept;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Storage re_;
  Storage im_;
};

ComplexMatrix operator+(ComplexMatrix lhs, const ComplexMatrix& rhs);
ComplexMatrix operator-(ComplexMatrix lhs, const ComplexMatrix& rhs);
ComplexMatrix operator*(ComplexMatrix m, double s) noexcept;
ComplexMatrix operator*(double s, ComplexMatrix m) noexcept;

/// Complex product through the real/imaginary expansion
/// (Ar + jAi)(Br + jBi) = (ArBr - AiBi) + j(ArBi + AiBr).
ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b);

ComplexMatrix adjoint(const ComplexMatrix& m);
/// (m + m^H) / 2; the diagonal imaginary part comes out exactly zero.
ComplexMatrix hermitian_part(const ComplexMatrix& m);

std::complex<double> trace(const ComplexMatrix& m);
double frobenius_norm(const ComplexMatrix& m) noexcept;
/// Real inner product Re tr(a^H b).
double inner(const ComplexMatrix& a, const ComplexMatrix& b);
double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b);
bool all_finite(const ComplexMatrix& m) noexcept;

/// ||a - b||_F / ||b||_F, falling back to the absolute norm when b vanishes.
double relative_frobenius(const ComplexMatrix& a, const ComplexMatrix& b);

}  // namespace hpdcnn
