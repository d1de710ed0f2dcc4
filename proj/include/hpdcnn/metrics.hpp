#pragma once

#include <span>
#include <string>
#include <string_view>

#include "hpdcnn/linalg.hpp"

namespace hpdcnn {

enum class MetricKind { Euclidean, LogEuclidean, Airm };

/// Accepts "euclidean", "log-euclidean" (or "log_euclidean") and "airm".
MetricKind parse_metric(std::string_view name);
std::string_view to_string(MetricKind kind) noexcept;

/// ||a - b||_F
double dist_euclidean(const HpdMatrix& a, const HpdMatrix& b);
/// ||log a - log b||_F with exact eigendecomposition logs.
double dist_log_euclidean(const HpdMatrix& a, const HpdMatrix& b);
/// ||log(a^{-1/2} b a^{-1/2})||_F
double dist_airm(const HpdMatrix& a, const HpdMatrix& b);

double distance(MetricKind kind, const HpdMatrix& a, const HpdMatrix& b);

/// exp(mean_i log x_i). Throws EmptySet.
HpdMatrix log_euclidean_mean(std::span<const HpdMatrix> set);

/// Exact matrix log and exp of Hermitian matrices.
ComplexMatrix exact_log(const HpdMatrix& a);
HpdMatrix exact_exp(const ComplexMatrix& h);

}  // namespace hpdcnn
