#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "hpdcnn/linalg.hpp"
#include "hpdcnn/newton_schulz.hpp"

namespace hpdcnn {

/// Which realization of the eigenvalue functions a network uses.
enum class MatrixPath { Exact, Fast };

MatrixPath parse_path(std::string_view name);
std::string_view to_string(MatrixPath path) noexcept;

/// One HPD block: BiMap weight W (m x n, orthonormal rows) followed by ReEig
/// with threshold tau.
struct HpdLayer {
  ComplexMatrix w;
  double tau = 0.0;

  bool operator==(const HpdLayer&) const = default;
};

struct HpdNetParams {
  std::vector<HpdLayer> layers;
  std::size_t input_order = 0;  // 0 accepts any order (no layers)

  std::size_t output_order() const noexcept {
    return layers.empty() ? input_order : layers.back().w.rows();
  }
  bool operator==(const HpdNetParams&) const = default;
};

/// W X W^H.
HpdMatrix bimap_forward(const ComplexMatrix& w, const HpdMatrix& x);

struct ReEigTape {
  MatrixPath path = MatrixPath::Exact;
  bool inactive = false;  // every eigenvalue above tau: output is the input
  double tau = 0.0;
  std::optional<EigPair> eig;
  ClampNsTape fast;
};

inline constexpr double kReEigFloorSlack = 1e-3;

/// Eigenvalues clamped from below at tau. Inputs whose spectrum lies
/// entirely above tau (checked by a Cholesky probe of x - tau I) are returned
/// unchanged on both paths. A fast-path result whose smallest eigenvalue falls
/// below tau - kReEigFloorSlack is recomputed on the exact path, and the tape
/// records the exact path.
HpdMatrix reeig_forward(const HpdMatrix& x, double tau, MatrixPath path, ReEigTape* tape = nullptr);
ComplexMatrix reeig_backward(const ReEigTape& tape, const ComplexMatrix& grad);

struct LogEigTape {
  MatrixPath path = MatrixPath::Exact;
  std::optional<EigPair> eig;
  LogNsTape fast;
};

/// Matrix logarithm; Hermitian, not generally positive definite.
ComplexMatrix logeig_forward(const HpdMatrix& x, MatrixPath path, LogEigTape* tape = nullptr);
ComplexMatrix logeig_backward(const LogEigTape& tape, const ComplexMatrix& grad);

struct LayerRecord {
  HpdMatrix input;   // X_{k-1}
  HpdMatrix mapped;  // W X_{k-1} W^H
  ReEigTape reeig;
};

struct LayerTape {
  std::vector<LayerRecord> layers;
  LogEigTape log;
};

/// (BiMap -> ReEig) per layer, then LogEig.
ComplexMatrix hpdnet_forward(const HpdNetParams& params, const HpdMatrix& x, MatrixPath path,
                             LayerTape* tape = nullptr);

struct HpdNetGrads {
  std::vector<ComplexMatrix> w;  // Euclidean (ambient) gradient per layer
  ComplexMatrix input;
};

/// Reverse pass. Gradients follow G = dL/dRe + j dL/dIm.
HpdNetGrads hpdnet_backward(const HpdNetParams& params, const LayerTape& tape,
                            const ComplexMatrix& grad_out);

/// Projection of an ambient gradient onto the tangent space of the
/// row-orthonormal Stiefel manifold at w: G - sym(G W^H) W.
ComplexMatrix stiefel_project(const ComplexMatrix& w, const ComplexMatrix& g);

/// QR retraction: rows of the result are orthonormal, R has a positive real
/// diagonal. Throws RankDeficient.
ComplexMatrix stiefel_retract(const ComplexMatrix& w_step);

/// qf(W - lr * tangent).
ComplexMatrix stiefel_update(const ComplexMatrix& w, const ComplexMatrix& tangent, double lr);

/// Layers for the order chain dims[0] -> dims[1] -> ...; each W comes from
/// the QR factor of a seeded complex Gaussian. Throws BadDims if an order
/// increases or the list is empty.
HpdNetParams init_params(const std::vector<std::size_t>& dims, double tau, std::uint64_t seed);

/// "HPDN" block: u32 version, u32 layer count, per layer u32 m, u32 n,
/// m*n f64 real parts, m*n f64 imaginary parts, f64 tau; little-endian.
void write_hpdnet(std::ostream& os, const HpdNetParams& params);
HpdNetParams read_hpdnet(std::istream& is);

}  // namespace hpdcnn
