#include "hpdcnn/cvcnn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "hpdcnn/binio.hpp"
#include "hpdcnn/errors.hpp"

namespace hpdcnn {

namespace {

constexpr std::uint32_t kCvhdVersion = 1;

double product_sign(ConvProduct p) { return p == ConvProduct::Standard ? 1.0 : -1.0; }

std::string shape_str(const Shape4& s) {
  return std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c) + "x" +
         std::to_string(s.f);
}

void check_kernel(const ConvKernel& k) {
  const std::size_t n = k.weight_count();
  if (k.m % 2 == 0 || k.m == 0 || k.r == 0 || k.f_in == 0 || k.k == 0 || k.wre.size() != n ||
      k.wim.size() != n || k.bre.size() != k.k || k.bim.size() != k.k) {
    throw Error(ErrorCode::BadDims, "malformed convolution kernel");
  }
}

}  // namespace

ConvProduct parse_conv_product(std::string_view name) {
  if (name == "standard") return ConvProduct::Standard;
  if (name == "alternate") return ConvProduct::Alternate;
  throw Error(ErrorCode::BadConfig,
              "conv product must be 'standard' or 'alternate', got '" + std::string(name) + "'");
}

std::string_view to_string(ConvProduct p) noexcept {
  return p == ConvProduct::Standard ? "standard" : "alternate";
}

ConvKernel make_kernel(std::size_t m, std::size_t r, std::size_t f_in, std::size_t k) {
  ConvKernel out;
  out.m = m;
  out.r = r;
  out.f_in = f_in;
  out.k = k;
  out.wre.assign(out.weight_count(), 0.0);
  out.wim.assign(out.weight_count(), 0.0);
  out.bre.assign(k, 0.0);
  out.bim.assign(k, 0.0);
  return out;
}

Shape4 cconv3d_shape(const Shape4& in, const ConvKernel& k) {
  if (k.m > in.h || k.m > in.w || k.r > in.c) {
    throw Error(ErrorCode::KernelTooLarge, "kernel " + std::to_string(k.m) + "x" +
                                               std::to_string(k.m) + "x" + std::to_string(k.r) +
                                               " on input " + shape_str(in));
  }
  if (k.f_in != in.f) {
    throw Error(ErrorCode::DimensionMismatch, "kernel expects " + std::to_string(k.f_in) +
                                                  " input features, input has " +
                                                  std::to_string(in.f));
  }
  return {in.h - k.m + 1, in.w - k.m + 1, in.c - k.r + 1, k.k};
}

ComplexTensor cconv3d(const ComplexTensor& x, const ConvKernel& k, ConvProduct product) {
  check_kernel(k);
  const Shape4 os = cconv3d_shape(x.shape, k);
  ComplexTensor out(os);
  const double sigma = product_sign(product);
  const std::size_t kk = k.k, fin = k.f_in;
  std::vector<double> acc_re(kk), acc_im(kk);
  for (std::size_t oh = 0; oh < os.h; ++oh) {
    for (std::size_t ow = 0; ow < os.w; ++ow) {
      for (std::size_t oc = 0; oc < os.c; ++oc) {
        std::copy(k.bre.begin(), k.bre.end(), acc_re.begin());
        std::copy(k.bim.begin(), k.bim.end(), acc_im.begin());
        for (std::size_t a = 0; a < k.m; ++a) {
          for (std::size_t b = 0; b < k.m; ++b) {
            for (std::size_t q = 0; q < k.r; ++q) {
              const std::size_t xi0 = x.index(oh + a, ow + b, oc + q, 0);
              const std::size_t w0 = ((a * k.m + b) * k.r + q) * fin * kk;
              for (std::size_t f = 0; f < fin; ++f) {
                const double xr = x.re[xi0 + f], xim = x.im[xi0 + f];
                const double* wr = k.wre.data() + w0 + f * kk;
                const double* wi = k.wim.data() + w0 + f * kk;
                for (std::size_t j = 0; j < kk; ++j) {
                  acc_re[j] += wr[j] * xr - wi[j] * xim;
                  acc_im[j] += wr[j] * xim + sigma * wi[j] * xr;
                }
              }
            }
          }
        }
        const std::size_t o0 = out.index(oh, ow, oc, 0);
        std::copy(acc_re.begin(), acc_re.end(), out.re.begin() + static_cast<std::ptrdiff_t>(o0));
        std::copy(acc_im.begin(), acc_im.end(), out.im.begin() + static_cast<std::ptrdiff_t>(o0));
      }
    }
  }
  return out;
}

void cconv3d_backward(const ComplexTensor& x, const ConvKernel& k, ConvProduct product,
                      const ComplexTensor& grad_out, ComplexTensor* grad_x, ConvKernel& grad_k) {
  const Shape4 os = cconv3d_shape(x.shape, k);
  if (grad_out.shape != os) throw Error(ErrorCode::TapeMismatch, "conv gradient shape");
  if (grad_k.weight_count() != k.weight_count() || grad_k.k != k.k) {
    throw Error(ErrorCode::TapeMismatch, "conv kernel gradient shape");
  }
  if (grad_x) *grad_x = ComplexTensor(x.shape);
  const double sigma = product_sign(product);
  const std::size_t kk = k.k, fin = k.f_in;
  for (std::size_t oh = 0; oh < os.h; ++oh) {
    for (std::size_t ow = 0; ow < os.w; ++ow) {
      for (std::size_t oc = 0; oc < os.c; ++oc) {
        const std::size_t o0 = grad_out.index(oh, ow, oc, 0);
        const double* gr = grad_out.re.data() + o0;
        const double* gi = grad_out.im.data() + o0;
        for (std::size_t j = 0; j < kk; ++j) {
          grad_k.bre[j] += gr[j];
          grad_k.bim[j] += gi[j];
        }
        for (std::size_t a = 0; a < k.m; ++a) {
          for (std::size_t b = 0; b < k.m; ++b) {
            for (std::size_t q = 0; q < k.r; ++q) {
              const std::size_t xi0 = x.index(oh + a, ow + b, oc + q, 0);
              const std::size_t w0 = ((a * k.m + b) * k.r + q) * fin * kk;
              for (std::size_t f = 0; f < fin; ++f) {
                const double xr = x.re[xi0 + f], xim = x.im[xi0 + f];
                const double* wr = k.wre.data() + w0 + f * kk;
                const double* wi = k.wim.data() + w0 + f * kk;
                double* gwr = grad_k.wre.data() + w0 + f * kk;
                double* gwi = grad_k.wim.data() + w0 + f * kk;
                double sx_re = 0.0, sx_im = 0.0;
                for (std::size_t j = 0; j < kk; ++j) {
                  sx_re += gr[j] * wr[j] + sigma * gi[j] * wi[j];
                  sx_im += gi[j] * wr[j] - gr[j] * wi[j];
                  gwr[j] += gr[j] * xr + gi[j] * xim;
                  gwi[j] += sigma * gi[j] * xr - gr[j] * xim;
                }
                if (grad_x) {
                  grad_x->re[xi0 + f] += sx_re;
                  grad_x->im[xi0 + f] += sx_im;
                }
              }
            }
          }
        }
      }
    }
  }
}

ComplexTensor crelu(const ComplexTensor& x) {
  ComplexTensor out = x;
  for (double& v : out.re) v = std::max(v, 0.0);
  for (double& v : out.im) v = std::max(v, 0.0);
  return out;
}

Shape4 cpool_shape(const Shape4& in) { return {in.h / 2, in.w / 2, in.c, in.f}; }

ComplexTensor cpool(const ComplexTensor& x, std::vector<std::uint32_t>* argmax_re,
                    std::vector<std::uint32_t>* argmax_im) {
  const Shape4 os = cpool_shape(x.shape);
  ComplexTensor out(os);
  if (argmax_re) argmax_re->assign(os.size(), 0);
  if (argmax_im) argmax_im->assign(os.size(), 0);
  const std::size_t plane = x.shape.c * x.shape.f;
  for (std::size_t oh = 0; oh < os.h; ++oh) {
    for (std::size_t ow = 0; ow < os.w; ++ow) {
      const std::size_t corner[4] = {x.index(2 * oh, 2 * ow, 0, 0), x.index(2 * oh, 2 * ow + 1, 0, 0),
                                     x.index(2 * oh + 1, 2 * ow, 0, 0),
                                     x.index(2 * oh + 1, 2 * ow + 1, 0, 0)};
      const std::size_t o0 = out.index(oh, ow, 0, 0);
      for (std::size_t e = 0; e < plane; ++e) {
        std::size_t br = corner[0] + e, bi = corner[0] + e;
        for (int t = 1; t < 4; ++t) {
          const std::size_t at = corner[t] + e;
          if (x.re[at] > x.re[br]) br = at;
          if (x.im[at] > x.im[bi]) bi = at;
        }
        out.re[o0 + e] = x.re[br];
        out.im[o0 + e] = x.im[bi];
        if (argmax_re) (*argmax_re)[o0 + e] = static_cast<std::uint32_t>(br);
        if (argmax_im) (*argmax_im)[o0 + e] = static_cast<std::uint32_t>(bi);
      }
    }
  }
  return out;
}

std::vector<double> flatten_to_real(const ComplexTensor& x) {
  std::vector<double> v;
  v.reserve(2 * x.re.size());
  v.insert(v.end(), x.re.begin(), x.re.end());
  v.insert(v.end(), x.im.begin(), x.im.end());
  return v;
}

std::vector<double> dense_softmax(std::span<const double> v, const DenseLayer& dense) {
  if (v.size() != dense.inputs) {
    throw Error(ErrorCode::DimensionMismatch, "dense layer expects " +
                                                  std::to_string(dense.inputs) + " inputs, got " +
                                                  std::to_string(v.size()));
  }
  std::vector<double> logits(dense.classes);
  for (std::size_t c = 0; c < dense.classes; ++c) {
    const double* row = dense.a.data() + c * dense.inputs;
    double s = dense.b[c];
    for (std::size_t i = 0; i < dense.inputs; ++i) s += row[i] * v[i];
    logits[c] = s;
  }
  return logits;
}

SoftmaxResult dense_softmax_xent(std::span<const double> v, const DenseLayer& dense,
                                 std::size_t label) {
  if (label >= dense.classes) {
    throw Error(ErrorCode::BadLabel, "label " + std::to_string(label) + " with " +
                                         std::to_string(dense.classes) + " classes");
  }
  SoftmaxResult r;
  r.logits = dense_softmax(v, dense);
  const double top = *std::max_element(r.logits.begin(), r.logits.end());
  r.probs.resize(r.logits.size());
  double z = 0.0;
  for (std::size_t c = 0; c < r.logits.size(); ++c) {
    r.probs[c] = std::exp(r.logits[c] - top);
    z += r.probs[c];
  }
  for (double& p : r.probs) p /= z;
  r.loss = std::log(z) - (r.logits[label] - top);
  return r;
}

HeadGrads zero_grads(const HeadParams& head) {
  HeadGrads g;
  for (const auto& layer : head.conv) {
    g.conv.push_back(make_kernel(layer.kernel.m, layer.kernel.r, layer.kernel.f_in, layer.kernel.k));
  }
  g.dense.classes = head.dense.classes;
  g.dense.inputs = head.dense.inputs;
  g.dense.a.assign(head.dense.a.size(), 0.0);
  g.dense.b.assign(head.dense.b.size(), 0.0);
  g.input = ComplexTensor(head.input);
  return g;
}

SoftmaxResult head_forward(const HeadParams& head, const ComplexTensor& x, std::size_t label,
                           HeadTape* tape) {
  if (x.shape != head.input) {
    throw Error(ErrorCode::DimensionMismatch,
                "head expects " + shape_str(head.input) + ", got " + shape_str(x.shape));
  }
  if (tape) {
    tape->inputs.clear();
    tape->conv_out.clear();
    tape->arg_re.assign(head.conv.size(), {});
    tape->arg_im.assign(head.conv.size(), {});
  }
  ComplexTensor cur = x;
  for (std::size_t l = 0; l < head.conv.size(); ++l) {
    const ConvLayer& layer = head.conv[l];
    ComplexTensor y = cconv3d(cur, layer.kernel, head.product);
    ComplexTensor a = crelu(y);
    if (tape) {
      tape->inputs.push_back(std::move(cur));
      tape->conv_out.push_back(std::move(y));
    }
    if (layer.pool) {
      cur = cpool(a, tape ? &tape->arg_re[l] : nullptr, tape ? &tape->arg_im[l] : nullptr);
    } else {
      cur = std::move(a);
    }
  }
  std::vector<double> flat = flatten_to_real(cur);
  SoftmaxResult r = dense_softmax_xent(flat, head.dense, label);
  if (tape) {
    tape->flat = std::move(flat);
    tape->probs = r.probs;
    tape->label = label;
  }
  return r;
}

std::vector<double> head_predict(const HeadParams& head, const ComplexTensor& x) {
  return head_forward(head, x, 0).probs;
}

void head_backward(const HeadParams& head, const HeadTape& tape, double grad_loss,
                   HeadGrads& grads) {
  if (tape.inputs.size() != head.conv.size() || tape.conv_out.size() != head.conv.size() ||
      tape.flat.size() != head.dense.inputs || tape.probs.size() != head.dense.classes) {
    throw Error(ErrorCode::TapeMismatch, "head tape does not match the parameters");
  }
  if (grads.conv.size() != head.conv.size() || grads.dense.a.size() != head.dense.a.size()) {
    throw Error(ErrorCode::TapeMismatch, "gradient buffers do not match the parameters");
  }
  const DenseLayer& d = head.dense;
  std::vector<double> gl(d.classes);
  for (std::size_t c = 0; c < d.classes; ++c) {
    gl[c] = grad_loss * (tape.probs[c] - (c == tape.label ? 1.0 : 0.0));
  }
  std::vector<double> gflat(d.inputs, 0.0);
  for (std::size_t c = 0; c < d.classes; ++c) {
    const double* row = d.a.data() + c * d.inputs;
    double* grow = grads.dense.a.data() + c * d.inputs;
    grads.dense.b[c] += gl[c];
    for (std::size_t i = 0; i < d.inputs; ++i) {
      grow[i] += gl[c] * tape.flat[i];
      gflat[i] += gl[c] * row[i];
    }
  }

  Shape4 top = head.input;
  for (const auto& layer : head.conv) {
    top = cconv3d_shape(top, layer.kernel);
    if (layer.pool) top = cpool_shape(top);
  }
  ComplexTensor g(top);
  const std::size_t half = top.size();
  std::copy(gflat.begin(), gflat.begin() + static_cast<std::ptrdiff_t>(half), g.re.begin());
  std::copy(gflat.begin() + static_cast<std::ptrdiff_t>(half), gflat.end(), g.im.begin());

  for (std::size_t l = head.conv.size(); l-- > 0;) {
    const ComplexTensor& y = tape.conv_out[l];
    ComplexTensor gy(y.shape);
    if (head.conv[l].pool) {
      const auto& ar = tape.arg_re[l];
      const auto& ai = tape.arg_im[l];
      for (std::size_t e = 0; e < g.re.size(); ++e) {
        gy.re[ar[e]] += g.re[e];
        gy.im[ai[e]] += g.im[e];
      }
    } else {
      gy = std::move(g);
    }
    for (std::size_t e = 0; e < gy.re.size(); ++e) {
      if (!(y.re[e] > 0.0)) gy.re[e] = 0.0;
      if (!(y.im[e] > 0.0)) gy.im[e] = 0.0;
    }
    ComplexTensor gx;
    cconv3d_backward(tape.inputs[l], head.conv[l].kernel, head.product, gy, &gx, grads.conv[l]);
    g = std::move(gx);
  }
  grads.input = std::move(g);
}

std::vector<ConvSpec> default_architecture() { return {{3, 3, 16, true}, {3, 2, 32, false}}; }

HeadParams init_head(const Shape4& input, const std::vector<ConvSpec>& arch, std::size_t classes,
                     std::uint64_t seed, ConvProduct product) {
  if (classes < 2) throw Error(ErrorCode::BadDims, "need at least two classes");
  if (input.size() == 0) throw Error(ErrorCode::BadDims, "empty head input");
  HeadParams head;
  head.input = input;
  head.product = product;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Shape4 cur = input;
  for (const ConvSpec& s : arch) {
    ConvLayer layer{make_kernel(s.m, s.r, cur.f, s.k), s.pool};
    cur = cconv3d_shape(cur, layer.kernel);
    if (s.pool) {
      cur = cpool_shape(cur);
      if (cur.h == 0 || cur.w == 0) {
        throw Error(ErrorCode::KernelTooLarge, "pooling leaves an empty feature map");
      }
    }
    const double sd = 1.0 / std::sqrt(static_cast<double>(s.m * s.m * s.r * layer.kernel.f_in));
    for (double& v : layer.kernel.wre) v = sd * gauss(rng);
    for (double& v : layer.kernel.wim) v = sd * gauss(rng);
    head.conv.push_back(std::move(layer));
  }
  head.dense.classes = classes;
  head.dense.inputs = 2 * cur.size();
  head.dense.a.resize(classes * head.dense.inputs);
  head.dense.b.assign(classes, 0.0);
  const double sd = 1.0 / std::sqrt(static_cast<double>(head.dense.inputs));
  for (double& v : head.dense.a) v = sd * gauss(rng);
  return head;
}

void write_head(std::ostream& os, const HeadParams& head) {
  using namespace binio;
  put_magic(os, "CVHD");
  put_u32(os, kCvhdVersion);
  put_u32(os, head.product == ConvProduct::Alternate ? 1u : 0u);
  for (std::size_t v : {head.input.h, head.input.w, head.input.c, head.input.f}) {
    put_u32(os, static_cast<std::uint32_t>(v));
  }
  put_u32(os, static_cast<std::uint32_t>(head.conv.size()));
  for (const auto& layer : head.conv) {
    const ConvKernel& k = layer.kernel;
    for (std::size_t v : {k.m, k.r, k.f_in, k.k}) put_u32(os, static_cast<std::uint32_t>(v));
    put_u32(os, layer.pool ? 1u : 0u);
    for (const auto* arr : {&k.wre, &k.wim, &k.bre, &k.bim}) {
      for (double v : *arr) put_f64(os, v);
    }
  }
  put_u32(os, static_cast<std::uint32_t>(head.dense.classes));
  put_u32(os, static_cast<std::uint32_t>(head.dense.inputs));
  for (double v : head.dense.a) put_f64(os, v);
  for (double v : head.dense.b) put_f64(os, v);
}

HeadParams read_head(std::istream& is) {
  using namespace binio;
  expect_magic(is, "CVHD");
  const std::uint32_t version = get_u32(is);
  if (version != kCvhdVersion) {
    throw Error(ErrorCode::BadMagic, "unsupported CVHD version " + std::to_string(version));
  }
  const std::uint32_t flags = get_u32(is);
  if (flags > 1) throw Error(ErrorCode::BadMagic, "unknown CVHD flags");
  HeadParams head;
  head.product = (flags & 1u) ? ConvProduct::Alternate : ConvProduct::Standard;
  head.input.h = get_u32(is);
  head.input.w = get_u32(is);
  head.input.c = get_u32(is);
  head.input.f = get_u32(is);
  constexpr std::size_t kLimit = 1u << 12;
  if (head.input.size() == 0 || head.input.h > kLimit || head.input.w > kLimit ||
      head.input.c > kLimit || head.input.f > kLimit) {
    throw Error(ErrorCode::BadDims, "head input " + shape_str(head.input));
  }
  const std::uint32_t count = get_u32(is);
  if (count > 64) throw Error(ErrorCode::BadDims, "too many conv layers");
  Shape4 cur = head.input;
  for (std::uint32_t l = 0; l < count; ++l) {
    std::size_t dims[4];
    for (auto& v : dims) v = get_u32(is);
    const std::uint32_t pool = get_u32(is);
    if (dims[0] % 2 == 0 || dims[0] > kLimit || dims[1] == 0 || dims[1] > kLimit ||
        dims[2] != cur.f || dims[3] == 0 || dims[3] > kLimit || pool > 1) {
      throw Error(ErrorCode::BadDims, "conv layer " + std::to_string(l));
    }
    ConvLayer layer{make_kernel(dims[0], dims[1], dims[2], dims[3]), pool == 1};
    cur = cconv3d_shape(cur, layer.kernel);
    if (layer.pool) cur = cpool_shape(cur);
    for (auto* arr : {&layer.kernel.wre, &layer.kernel.wim, &layer.kernel.bre, &layer.kernel.bim}) {
      for (double& v : *arr) {
        v = get_f64(is);
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteEntry, "conv layer weights");
      }
    }
    head.conv.push_back(std::move(layer));
  }
  head.dense.classes = get_u32(is);
  head.dense.inputs = get_u32(is);
  if (head.dense.classes < 2 || head.dense.classes > 0xFFFF || head.dense.inputs != 2 * cur.size()) {
    throw Error(ErrorCode::BadDims, "dense layer shape");
  }
  head.dense.a.resize(head.dense.classes * head.dense.inputs);
  head.dense.b.resize(head.dense.classes);
  for (auto* arr : {&head.dense.a, &head.dense.b}) {
    for (double& v : *arr) {
      v = get_f64(is);
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteEntry, "dense weights");
    }
  }
  return head;
}

}  // namespace hpdcnn
