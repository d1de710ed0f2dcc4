#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace hpdcnn {

struct Shape4 {
  std::size_t h = 0, w = 0, c = 0, f = 0;

  std::size_t size() const noexcept { return h * w * c * f; }
  bool operator==(const Shape4&) const = default;
};

/// Complex feature cube indexed (row, col, channel, feature), feature fastest.
struct ComplexTensor {
  Shape4 shape;
  std::vector<double> re, im;

  ComplexTensor() = default;
  explicit ComplexTensor(Shape4 s) : shape(s), re(s.size(), 0.0), im(s.size(), 0.0) {}

  std::size_t index(std::size_t h, std::size_t w, std::size_t c, std::size_t f) const noexcept {
    return ((h * shape.w + w) * shape.c + c) * shape.f + f;
  }
  bool operator==(const ComplexTensor&) const = default;
};

/// How the imaginary part of a weight-feature product is formed.
///   Standard:  Re(w)Im(f) + Im(w)Re(f)   (complex multiplication)
///   Alternate: Re(w)Im(f) - Im(w)Re(f)
enum class ConvProduct { Standard, Alternate };

ConvProduct parse_conv_product(std::string_view name);
std::string_view to_string(ConvProduct p) noexcept;

/// M x M spatial, R channels deep, over F_in input features, K filters.
/// Weight index ((((a * M + b) * R + q) * F_in + f) * K + k).
struct ConvKernel {
  std::size_t m = 1, r = 1, f_in = 1, k = 1;
  std::vector<double> wre, wim;
  std::vector<double> bre, bim;

  std::size_t weight_count() const noexcept { return m * m * r * f_in * k; }
  bool operator==(const ConvKernel&) const = default;
};

ConvKernel make_kernel(std::size_t m, std::size_t r, std::size_t f_in, std::size_t k);

struct ConvLayer {
  ConvKernel kernel;
  bool pool = false;  // 2x2 max pooling after the activation

  bool operator==(const ConvLayer&) const = default;
};

/// Row-major classes x inputs.
struct DenseLayer {
  std::size_t classes = 0, inputs = 0;
  std::vector<double> a, b;

  bool operator==(const DenseLayer&) const = default;
};

struct HeadParams {
  Shape4 input;
  std::vector<ConvLayer> conv;
  DenseLayer dense;
  ConvProduct product = ConvProduct::Standard;

  bool operator==(const HeadParams&) const = default;
};

/// Valid cross-correlation with stride 1. Output
/// (H - M + 1, W - M + 1, C - R + 1, K). Throws KernelTooLarge.
ComplexTensor cconv3d(const ComplexTensor& x, const ConvKernel& k,
                      ConvProduct product = ConvProduct::Standard);
Shape4 cconv3d_shape(const Shape4& in, const ConvKernel& k);

/// Gradients of cconv3d. grad_x may be null when the input gradient is not
/// needed; kernel gradients accumulate into grad_k.
void cconv3d_backward(const ComplexTensor& x, const ConvKernel& k, ConvProduct product,
                      const ComplexTensor& grad_out, ComplexTensor* grad_x, ConvKernel& grad_k);

/// max(0, re) + j max(0, im).
ComplexTensor crelu(const ComplexTensor& x);

/// Part-wise 2x2 spatial max pooling; a trailing odd row or column is dropped.
/// `argmax` receives, for every output entry, the input offsets of the chosen
/// real and imaginary maxima (first maximum on ties).
ComplexTensor cpool(const ComplexTensor& x, std::vector<std::uint32_t>* argmax_re = nullptr,
                    std::vector<std::uint32_t>* argmax_im = nullptr);
Shape4 cpool_shape(const Shape4& in);

/// Real parts in (row, col, channel, feature) order, then imaginary parts.
std::vector<double> flatten_to_real(const ComplexTensor& x);

struct SoftmaxResult {
  double loss = 0.0;
  std::vector<double> probs;
  std::vector<double> logits;
};

/// logits = A v + b; probabilities by max-shifted softmax; loss = -log p[label].
/// Throws BadLabel if label >= classes, DimensionMismatch on length mismatch.
SoftmaxResult dense_softmax_xent(std::span<const double> v, const DenseLayer& dense,
                                 std::size_t label);
std::vector<double> dense_softmax(std::span<const double> v, const DenseLayer& dense);

struct HeadTape {
  std::vector<ComplexTensor> inputs;     // input of each conv layer
  std::vector<ComplexTensor> conv_out;   // pre-activation output of each conv layer
  std::vector<std::vector<std::uint32_t>> arg_re, arg_im;
  std::vector<double> flat;
  std::vector<double> probs;
  std::size_t label = 0;
};

struct HeadGrads {
  std::vector<ConvKernel> conv;
  DenseLayer dense;
  ComplexTensor input;  // dL/dRe + j dL/dIm
};

/// Zero-valued gradient buffers shaped like `head`.
HeadGrads zero_grads(const HeadParams& head);

SoftmaxResult head_forward(const HeadParams& head, const ComplexTensor& x, std::size_t label,
                           HeadTape* tape = nullptr);
std::vector<double> head_predict(const HeadParams& head, const ComplexTensor& x);

/// Reverse pass scaled by grad_loss; parameter gradients accumulate into
/// `grads`, the input gradient overwrites grads.input. Throws TapeMismatch.
void head_backward(const HeadParams& head, const HeadTape& tape, double grad_loss,
                   HeadGrads& grads);

struct ConvSpec {
  std::size_t m, r, k;
  bool pool;
};

/// conv(3x3x3, 16) -> CReLU -> pool -> conv(3x3x2, 32) -> CReLU.
std::vector<ConvSpec> default_architecture();

/// Gaussian weights with variance 1 / fan_in per part, zero biases. Throws
/// KernelTooLarge if the architecture does not fit the input shape.
HeadParams init_head(const Shape4& input, const std::vector<ConvSpec>& arch, std::size_t classes,
                     std::uint64_t seed, ConvProduct product = ConvProduct::Standard);

/// "CVHD" block: u32 version, u32 flags (bit 0: alternate product), u32 input
/// H, W, C, F, u32 conv count, per layer u32 M, R, F_in, K, pool, then f64
/// weight real parts, imaginary parts, bias real parts, imaginary parts;
/// u32 classes, u32 inputs, f64 matrix, f64 bias.
void write_head(std::ostream& os, const HeadParams& head);
HeadParams read_head(std::istream& is);

}  // namespace hpdcnn
