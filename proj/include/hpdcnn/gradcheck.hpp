#pragma once

#include <cstdint>
#include <vector>

#include "hpdcnn/train.hpp"

namespace hpdcnn {

/// One real trainable scalar of a Model.
struct ParamId {
  enum Kind { WRe, WIm, ConvWRe, ConvWIm, ConvBRe, ConvBIm, DenseA, DenseB } kind;
  std::size_t layer = 0, index = 0;
};

std::vector<ParamId> all_params(const Model& model);
double& param_ref(Model& model, const ParamId& id);
double grad_of(const ModelGrads& grads, const ParamId& id);

/// Piecewise-linear state of the pipeline on one patch: ReEig activity and
/// clamped-eigenvalue counts per pixel and layer, CReLU signs and pooling
/// choices of the head. Equal signatures mean both points lie on the same
/// smooth piece.
std::vector<std::uint32_t> activation_signature(const Model& model, const PatchBatch& set,
                                                std::size_t item);

struct GradCheckResult {
  double worst_rel = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a kink
};

/// Central differences with step h on every BiMap entry and `head_samples`
/// randomly drawn head parameters for patch `item`, against the analytic
/// gradient. Parameters whose +-h points change the activation signature are
/// skipped and counted.
GradCheckResult check_pipeline_gradients(const Model& model, const PatchBatch& set,
                                         std::size_t item, std::size_t head_samples, double h,
                                         std::uint64_t seed);

}  // namespace hpdcnn
