#include "hpdcnn/hpdnet.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>

#include "hpdcnn/binio.hpp"
#include "hpdcnn/errors.hpp"

namespace hpdcnn {

namespace {

constexpr std::uint32_t kHpdnVersion = 1;

}  // namespace

MatrixPath parse_path(std::string_view name) {
  if (name == "exact") return MatrixPath::Exact;
  if (name == "fast") return MatrixPath::Fast;
  throw Error(ErrorCode::BadConfig, "path must be 'exact' or 'fast', got '" + std::string(name) + "'");
}

std::string_view to_string(MatrixPath path) noexcept {
  return path == MatrixPath::Exact ? "exact" : "fast";
}

HpdMatrix bimap_forward(const ComplexMatrix& w, const HpdMatrix& x) {
  if (w.cols() != x.order()) {
    throw Error(ErrorCode::DimensionMismatch,
                "BiMap weight has " + std::to_string(w.cols()) + " columns, input order " +
                    std::to_string(x.order()));
  }
  return HpdMatrix::adopt(w * x.mat() * adjoint(w));
}

HpdMatrix reeig_forward(const HpdMatrix& x, double tau, MatrixPath path, ReEigTape* tape) {
  if (!(tau > 0.0)) throw Error(ErrorCode::DomainError, "ReEig threshold must be positive");
  if (tape) {
    tape->path = path;
    tape->tau = tau;
    tape->eig.reset();
  }
  if (path == MatrixPath::Fast) {
    ClampNsTape fast;
    HpdMatrix out = clamp_ns(x, tau, &fast);
    ComplexMatrix probe = out.mat();
    probe.add_identity(-std::max(tau - kReEigFloorSlack, 0.0));
    if (fast.regime != ClampRegime::Mixed || cholesky(probe)) {
      if (tape) {
        tape->inactive = fast.regime == ClampRegime::Inactive;
        tape->fast = std::move(fast);
      }
      return out;
    }
    if (tape) tape->path = MatrixPath::Exact;
  }
  ComplexMatrix shifted = x.mat();
  shifted.add_identity(-tau);
  if (cholesky(shifted)) {
    if (tape) tape->inactive = true;
    return x;
  }
  EigPair e = hermitian_eig(x);
  std::vector<double> v(e.lam.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(e.lam[i], tau);
  HpdMatrix out = HpdMatrix::adopt(spectral_apply(e, v));
  if (tape) {
    tape->inactive = false;
    tape->eig = std::move(e);
  }
  return out;
}

ComplexMatrix reeig_backward(const ReEigTape& tape, const ComplexMatrix& grad) {
  if (tape.inactive) return hermitian_part(grad);
  if (tape.path == MatrixPath::Fast) return clamp_ns_backward(tape.fast, grad);
  if (!tape.eig) throw Error(ErrorCode::TapeMismatch, "ReEig tape has no decomposition");
  const EigPair& e = *tape.eig;
  std::vector<double> f(e.lam.size()), fp(e.lam.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = std::max(e.lam[i], tape.tau);
    fp[i] = e.lam[i] > tape.tau ? 1.0 : 0.0;
  }
  return spectral_backward(e, f, fp, hermitian_part(grad));
}

ComplexMatrix logeig_forward(const HpdMatrix& x, MatrixPath path, LogEigTape* tape) {
  if (tape) {
    tape->path = path;
    tape->eig.reset();
  }
  if (path == MatrixPath::Fast) {
    return log_ns(x, kDefaultLogDepth, kDefaultSeriesTerms, tape ? &tape->fast : nullptr);
  }
  EigPair e = hermitian_eig(x);
  if (!(e.lam.front() > 0.0)) {
    throw Error(ErrorCode::NotPositiveDefinite, "LogEig input eigenvalue " +
                                                    std::to_string(e.lam.front()));
  }
  std::vector<double> v(e.lam.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(e.lam[i]);
  ComplexMatrix out = spectral_apply(e, v);
  if (tape) tape->eig = std::move(e);
  return out;
}

ComplexMatrix logeig_backward(const LogEigTape& tape, const ComplexMatrix& grad) {
  if (tape.path == MatrixPath::Fast) return log_ns_backward(tape.fast, grad);
  if (!tape.eig) throw Error(ErrorCode::TapeMismatch, "LogEig tape has no decomposition");
  const EigPair& e = *tape.eig;
  std::vector<double> f(e.lam.size()), fp(e.lam.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = std::log(e.lam[i]);
    fp[i] = 1.0 / e.lam[i];
  }
  return spectral_backward(e, f, fp, hermitian_part(grad));
}

ComplexMatrix hpdnet_forward(const HpdNetParams& params, const HpdMatrix& x, MatrixPath path,
                             LayerTape* tape) {
  if (params.input_order != 0 && x.order() != params.input_order) {
    throw Error(ErrorCode::DimensionMismatch, "network input order");
  }
  if (tape) tape->layers.clear();
  HpdMatrix cur = x;
  for (const auto& layer : params.layers) {
    HpdMatrix mapped = bimap_forward(layer.w, cur);
    if (tape) {
      tape->layers.push_back({std::move(cur), mapped, ReEigTape{}});
      cur = reeig_forward(mapped, layer.tau, path, &tape->layers.back().reeig);
    } else {
      cur = reeig_forward(mapped, layer.tau, path);
    }
  }
  return logeig_forward(cur, path, tape ? &tape->log : nullptr);
}

HpdNetGrads hpdnet_backward(const HpdNetParams& params, const LayerTape& tape,
                            const ComplexMatrix& grad_out) {
  if (tape.layers.size() != params.layers.size()) {
    throw Error(ErrorCode::TapeMismatch, "tape has " + std::to_string(tape.layers.size()) +
                                             " layers, network " +
                                             std::to_string(params.layers.size()));
  }
  HpdNetGrads out;
  out.w.resize(params.layers.size());
  ComplexMatrix g = logeig_backward(tape.log, grad_out);
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const LayerRecord& rec = tape.layers[k];
    const ComplexMatrix& w = params.layers[k].w;
    const ComplexMatrix gy = hermitian_part(reeig_backward(rec.reeig, g));
    // Y = W X W^H: G_W = (G + G^H) W X, G_X = W^H G W.
    out.w[k] = (gy * 2.0) * w * rec.input.mat();
    g = adjoint(w) * gy * w;
  }
  out.input = hermitian_part(g);
  return out;
}

ComplexMatrix stiefel_project(const ComplexMatrix& w, const ComplexMatrix& g) {
  if (w.rows() != g.rows() || w.cols() != g.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "tangent projection shapes");
  }
  return g - hermitian_part(g * adjoint(w)) * w;
}

ComplexMatrix stiefel_retract(const ComplexMatrix& w_step) {
  return adjoint(orthonormal_columns(adjoint(w_step)));
}

ComplexMatrix stiefel_update(const ComplexMatrix& w, const ComplexMatrix& tangent, double lr) {
  if (w.rows() != tangent.rows() || w.cols() != tangent.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "Stiefel update shapes");
  }
  return stiefel_retract(w - tangent * lr);
}

HpdNetParams init_params(const std::vector<std::size_t>& dims, double tau, std::uint64_t seed) {
  if (dims.empty() || dims.front() == 0) throw Error(ErrorCode::BadDims, "empty dimension chain");
  HpdNetParams p;
  p.input_order = dims.front();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t k = 1; k < dims.size(); ++k) {
    const std::size_t n = dims[k - 1], m = dims[k];
    if (m > n || m == 0) {
      throw Error(ErrorCode::BadDims, "dimension chain must be non-increasing and positive");
    }
    ComplexMatrix g(n, m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        g.re(i, j) = gauss(rng);
        g.im(i, j) = gauss(rng);
      }
    }
    p.layers.push_back({adjoint(orthonormal_columns(g)), tau});
  }
  return p;
}

void write_hpdnet(std::ostream& os, const HpdNetParams& params) {
  binio::put_magic(os, "HPDN");
  binio::put_u32(os, kHpdnVersion);
  binio::put_u32(os, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& layer : params.layers) {
    binio::put_u32(os, static_cast<std::uint32_t>(layer.w.rows()));
    binio::put_u32(os, static_cast<std::uint32_t>(layer.w.cols()));
    for (double v : layer.w.re_data()) binio::put_f64(os, v);
    for (double v : layer.w.im_data()) binio::put_f64(os, v);
    binio::put_f64(os, layer.tau);
  }
}

HpdNetParams read_hpdnet(std::istream& is) {
  binio::expect_magic(is, "HPDN");
  const std::uint32_t version = binio::get_u32(is);
  if (version != kHpdnVersion) {
    throw Error(ErrorCode::BadMagic, "unsupported HPDN version " + std::to_string(version));
  }
  HpdNetParams p;
  const std::uint32_t count = binio::get_u32(is);
  std::size_t prev = 0;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t m = binio::get_u32(is), n = binio::get_u32(is);
    if (k == 0) {
      p.input_order = n;
      prev = n;
    }
    if (m == 0 || m > n || n > 64 || n != prev) {
      throw Error(ErrorCode::BadDims, "layer " + std::to_string(k) + " shape " +
                                          std::to_string(m) + "x" + std::to_string(n));
    }
    HpdLayer layer{ComplexMatrix(m, n), 0.0};
    for (double& v : layer.w.re_data()) v = binio::get_f64(is);
    for (double& v : layer.w.im_data()) v = binio::get_f64(is);
    layer.tau = binio::get_f64(is);
    if (!all_finite(layer.w) || !(layer.tau > 0.0)) {
      throw Error(ErrorCode::NonFiniteEntry, "layer " + std::to_string(k));
    }
    prev = m;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

}  // namespace hpdcnn
