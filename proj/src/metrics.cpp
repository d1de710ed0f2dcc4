#include "hpdcnn/metrics.hpp"

#include <cmath>

#include "hpdcnn/errors.hpp"

namespace hpdcnn {

namespace {

void require_same_order(const HpdMatrix& a, const HpdMatrix& b) {
  if (a.order() != b.order()) throw Error(ErrorCode::DimensionMismatch, "matrix orders differ");
}

}  // namespace

MetricKind parse_metric(std::string_view name) {
  if (name == "euclidean") return MetricKind::Euclidean;
  if (name == "log-euclidean" || name == "log_euclidean") return MetricKind::LogEuclidean;
  if (name == "airm") return MetricKind::Airm;
  throw Error(ErrorCode::BadConfig, "unknown metric '" + std::string(name) + "'");
}

std::string_view to_string(MetricKind kind) noexcept {
  switch (kind) {
    case MetricKind::Euclidean:
      return "euclidean";
    case MetricKind::LogEuclidean:
      return "log-euclidean";
    case MetricKind::Airm:
      return "airm";
  }
  return "?";
}

ComplexMatrix exact_log(const HpdMatrix& a) {
  const EigPair e = hermitian_eig(a);
  if (!(e.lam.front() > 0.0)) {
    throw Error(ErrorCode::NotPositiveDefinite,
                "smallest eigenvalue " + std::to_string(e.lam.front()));
  }
  std::vector<double> v(e.lam.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(e.lam[i]);
  return spectral_apply(e, v);
}

HpdMatrix exact_exp(const ComplexMatrix& h) {
  return HpdMatrix::adopt(matrix_fn_eig(h, [](double x) { return std::exp(x); }));
}

double dist_euclidean(const HpdMatrix& a, const HpdMatrix& b) {
  require_same_order(a, b);
  return frobenius_norm(a.mat() - b.mat());
}

double dist_log_euclidean(const HpdMatrix& a, const HpdMatrix& b) {
  require_same_order(a, b);
  return frobenius_norm(exact_log(a) - exact_log(b));
}

double dist_airm(const HpdMatrix& a, const HpdMatrix& b) {
  require_same_order(a, b);
  const EigPair ea = hermitian_eig(a);
  if (!(ea.lam.front() > 0.0)) throw Error(ErrorCode::NotPositiveDefinite, "airm first argument");
  std::vector<double> isq(ea.lam.size());
  for (std::size_t i = 0; i < isq.size(); ++i) isq[i] = 1.0 / std::sqrt(ea.lam[i]);
  const ComplexMatrix p = spectral_apply(ea, isq);
  const EigPair em = hermitian_eig(hermitian_part(p * b.mat() * p));
  if (!(em.lam.front() > 0.0)) throw Error(ErrorCode::NotPositiveDefinite, "airm second argument");
  double s = 0.0;
  for (double l : em.lam) s += std::log(l) * std::log(l);
  return std::sqrt(s);
}

double distance(MetricKind kind, const HpdMatrix& a, const HpdMatrix& b) {
  switch (kind) {
    case MetricKind::Euclidean:
      return dist_euclidean(a, b);
    case MetricKind::LogEuclidean:
      return dist_log_euclidean(a, b);
    case MetricKind::Airm:
      return dist_airm(a, b);
  }
  return 0.0;
}

HpdMatrix log_euclidean_mean(std::span<const HpdMatrix> set) {
  if (set.empty()) throw Error(ErrorCode::EmptySet, "mean of an empty set");
  const std::size_t n = set.front().order();
  ComplexMatrix acc(n, n);
  for (const auto& x : set) {
    if (x.order() != n) throw Error(ErrorCode::DimensionMismatch, "matrix orders differ");
    acc += exact_log(x);
  }
  acc *= 1.0 / static_cast<double>(set.size());
  return exact_exp(hermitian_part(acc));
}

}  // namespace hpdcnn
