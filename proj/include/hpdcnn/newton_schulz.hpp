#pragma once

#include <span>
#include <vector>

#include "hpdcnn/complex_matrix.hpp"
#include "hpdcnn/linalg.hpp"

namespace hpdcnn {

// Multiplication-only matrix functions built on the coupled Newton-Schulz
// iteration
//
//   T_k     = (3I - beta_k Z_{k-1} X_{k-1}) / 2
//   X_k     = sqrt(beta_k) X_{k-1} T_k
//   Z_k     = sqrt(beta_k) T_k Z_{k-1}
//
// started from X_0 = C / trace(C), Z_0 = I. X_k -> A^{1/2}, Z_k -> A^{-1/2}.
// The scalars beta_k rescale the spectral interval before each step so that
// both ends of it land on the same value after the step; they are derived
// from a Cholesky-based condition estimate quantized to quarter octaves, which
// makes them locally constant in C.

inline constexpr int kDefaultNsIterations = 5;
inline constexpr double kConditionGuard = 1e4;
inline constexpr double kGuardRelativeEps = 1e-6;
inline constexpr double kNsResidualLimit = 1e-2;
/// Largest interval ratio the schedule is designed for. Five steps resolve
/// [1/300, 1] to about 1e-3; beyond that, widening the design only trades
/// accuracy at the top of the spectrum for the bottom, so the schedule is
/// capped and the smallest eigenvalues are left approximate.
inline constexpr double kMaxDesignCondition = 300.0;

/// Iterate pair of the coupled iteration.
struct NsState {
  ComplexMatrix x;
  ComplexMatrix z;
  double scale = 1.0;  // pre-normalization factor s
};

struct NsOptions {
  int iters = kDefaultNsIterations;
  /// Regularize inputs whose condition estimate exceeds kConditionGuard.
  bool condition_guard = true;
  /// Upper clamp on the interval ratio used to design the schedule.
  double max_design_condition = kMaxDesignCondition;
  /// Fail with NotConverged when ||y y - c||_F / ||c||_F exceeds the limit.
  bool check_residual = true;
};

/// Per-step scaling factors beta_k for a spectrum inside [upper/ratio, upper].
std::vector<double> ns_schedule(double upper, double ratio, int iters);

/// d beta_k / d ratio for the same schedule.
std::vector<double> ns_schedule_dratio(double upper, double ratio, int iters);

struct SqrtNsTape {
  double s = 1.0;
  bool guarded = false;
  std::vector<double> beta;
  std::vector<NsState> states;  // (X_k, Z_k) entering step k, plus the final pair
  std::vector<ComplexMatrix> t;
  ComplexMatrix reg_input;  // c after the optional guard regularization
  double design = 1.0;      // ratio the schedule was built for
  bool design_free = false; // design = condition estimate (below the cap)
  ComplexMatrix reg_inverse;
};

struct SqrtNsResult {
  HpdMatrix y;     // ~ c^{1/2}
  HpdMatrix zinv;  // ~ c^{-1/2}
};

SqrtNsResult sqrt_ns(const HpdMatrix& c, int iters = kDefaultNsIterations);

/// Core routine on a Hermitian positive (semi)definite input; returns the
/// Hermitian projections of (sqrt(s) X_K, Z_K / sqrt(s)).
std::pair<ComplexMatrix, ComplexMatrix> sqrt_ns_raw(const ComplexMatrix& c,
                                                    const NsOptions& opts,
                                                    SqrtNsTape* tape = nullptr);

/// Gradient with respect to c given gradients of y and (optionally) zinv.
ComplexMatrix sqrt_ns_backward(const SqrtNsTape& tape, const ComplexMatrix& grad_y,
                               const ComplexMatrix* grad_zinv = nullptr);

inline constexpr int kDefaultLogDepth = 4;
inline constexpr int kDefaultSeriesTerms = 8;

struct LogNsTape {
  double s0 = 1.0;  // trace(c)/n
  int depth = 0;
  ComplexMatrix r0;  // c / s0
  std::vector<SqrtNsTape> roots;
  ComplexMatrix e;                  // R - I
  std::vector<ComplexMatrix> horner;  // Horner partial sums, innermost first
};

/// Matrix logarithm by inverse scaling and squaring: log(c) =
/// log(s0) I + 2^depth log((c/s0)^{1/2^depth}), the inner log by a truncated
/// Mercator series. Throws SeriesDiverged if ||R - I||_F >= 1.
ComplexMatrix log_ns(const HpdMatrix& c, int depth = kDefaultLogDepth,
                     int series_terms = kDefaultSeriesTerms, LogNsTape* tape = nullptr);
ComplexMatrix log_ns_backward(const LogNsTape& tape, const ComplexMatrix& grad);

enum class ClampRegime { Inactive, Saturated, Mixed };

struct ClampNsTape {
  ClampRegime regime = ClampRegime::Inactive;
  ComplexMatrix m;       // c - tau I
  ComplexMatrix z1;      // ~ (M^2)^{-1/2}
  ComplexMatrix sign1;   // M z1
  ComplexMatrix z2;      // ~ (sign1^2)^{-1/2}
  SqrtNsTape first, second;
};

/// max(c, tau I) = ((c + tau I) + |c - tau I|) / 2.
///
/// |M| = M sign(M). A first square-root pass on M^2 gives S = M (M^2)^{-1/2},
/// accurate except on eigenvalues of M near zero; a second pass on S^2
/// sharpens it to S (S^2)^{-1/2}. Inputs entirely above (below) tau are
/// detected by Cholesky and returned exactly as c (tau I).
HpdMatrix clamp_ns(const HpdMatrix& c, double tau, ClampNsTape* tape = nullptr);
ComplexMatrix clamp_ns_backward(const ClampNsTape& tape, const ComplexMatrix& grad);

// Batched forward-only variants. Matrices are laid out structure-of-arrays
// so the per-step products vectorize across the batch; results match the
// single-matrix routines to rounding.
std::vector<ComplexMatrix> sqrt_ns_batch(std::span<const HpdMatrix> batch,
                                         int iters = kDefaultNsIterations);
std::vector<ComplexMatrix> log_ns_batch(std::span<const HpdMatrix> batch,
                                        int depth = kDefaultLogDepth,
                                        int series_terms = kDefaultSeriesTerms);
std::vector<ComplexMatrix> clamp_ns_batch(std::span<const HpdMatrix> batch,
                                          std::span<const double> tau);

}  // namespace hpdcnn
