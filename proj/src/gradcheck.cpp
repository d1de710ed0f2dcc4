#include "hpdcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hpdcnn {

namespace {

std::vector<double>& head_array(HeadParams& head, ParamId::Kind kind, std::size_t layer) {
  switch (kind) {
    case ParamId::ConvWRe: return head.conv[layer].kernel.wre;
    case ParamId::ConvWIm: return head.conv[layer].kernel.wim;
    case ParamId::ConvBRe: return head.conv[layer].kernel.bre;
    case ParamId::ConvBIm: return head.conv[layer].kernel.bim;
    case ParamId::DenseA: return head.dense.a;
    default: return head.dense.b;
  }
}

const std::vector<double>& grad_array(const HeadGrads& g, ParamId::Kind kind, std::size_t layer) {
  switch (kind) {
    case ParamId::ConvWRe: return g.conv[layer].wre;
    case ParamId::ConvWIm: return g.conv[layer].wim;
    case ParamId::ConvBRe: return g.conv[layer].bre;
    case ParamId::ConvBIm: return g.conv[layer].bim;
    case ParamId::DenseA: return g.dense.a;
    default: return g.dense.b;
  }
}

}  // namespace

std::vector<ParamId> all_params(const Model& model) {
  std::vector<ParamId> out;
  for (std::size_t l = 0; l < model.net.layers.size(); ++l) {
    const auto& w = model.net.layers[l].w;
    for (std::size_t k = 0; k < w.rows() * w.cols(); ++k) {
      out.push_back({ParamId::WRe, l, k});
      out.push_back({ParamId::WIm, l, k});
    }
  }
  for (std::size_t l = 0; l < model.head.conv.size(); ++l) {
    const auto& k = model.head.conv[l].kernel;
    for (auto kind : {ParamId::ConvWRe, ParamId::ConvWIm}) {
      for (std::size_t i = 0; i < k.wre.size(); ++i) out.push_back({kind, l, i});
    }
    for (auto kind : {ParamId::ConvBRe, ParamId::ConvBIm}) {
      for (std::size_t i = 0; i < k.bre.size(); ++i) out.push_back({kind, l, i});
    }
  }
  for (std::size_t i = 0; i < model.head.dense.a.size(); ++i) out.push_back({ParamId::DenseA, 0, i});
  for (std::size_t i = 0; i < model.head.dense.b.size(); ++i) out.push_back({ParamId::DenseB, 0, i});
  return out;
}

double& param_ref(Model& model, const ParamId& id) {
  if (id.kind == ParamId::WRe || id.kind == ParamId::WIm) {
    auto& w = model.net.layers[id.layer].w;
    const std::size_t i = id.index / w.cols(), j = id.index % w.cols();
    return id.kind == ParamId::WRe ? w.re(i, j) : w.im(i, j);
  }
  return head_array(model.head, id.kind, id.layer)[id.index];
}

double grad_of(const ModelGrads& grads, const ParamId& id) {
  if (id.kind == ParamId::WRe || id.kind == ParamId::WIm) {
    const auto& g = grads.w[id.layer];
    const std::size_t i = id.index / g.cols(), j = id.index % g.cols();
    return id.kind == ParamId::WRe ? g.re(i, j) : g.im(i, j);
  }
  return grad_array(grads.head, id.kind, id.layer)[id.index];
}

std::vector<std::uint32_t> activation_signature(const Model& model, const PatchBatch& set,
                                                std::size_t item) {
  std::vector<std::uint32_t> sig;
  std::vector<HpdMatrix> patch;
  for (std::size_t a = 0; a < set.patch; ++a) {
    for (std::size_t b = 0; b < set.patch; ++b) {
      patch.push_back(set.at(item, a, b));
      LayerTape tape;
      hpdnet_forward(model.net, ingest_pixel(model, set.at(item, a, b)), model.path, &tape);
      for (const auto& rec : tape.layers) {
        const auto& r = rec.reeig;
        std::uint32_t s = r.inactive ? 0u : 1u;
        if (r.eig) {
          s += 2u * static_cast<std::uint32_t>(
                        std::count_if(r.eig->lam.begin(), r.eig->lam.end(),
                                      [&](double l) { return l > r.tau; }));
        }
        if (r.path == MatrixPath::Fast) s += 16u * static_cast<std::uint32_t>(r.fast.regime);
        sig.push_back(s);
      }
    }
  }
  HeadTape tape;
  head_forward(model.head, pipeline_features(model, patch), set.labels[item] - 1u, &tape);
  for (const auto& t : tape.conv_out) {
    for (std::size_t i = 0; i < t.re.size(); ++i) {
      sig.push_back((t.re[i] > 0.0 ? 1u : 0u) | (t.im[i] > 0.0 ? 2u : 0u));
    }
  }
  for (const auto& v : tape.arg_re) sig.insert(sig.end(), v.begin(), v.end());
  for (const auto& v : tape.arg_im) sig.insert(sig.end(), v.begin(), v.end());
  return sig;
}

GradCheckResult check_pipeline_gradients(const Model& model, const PatchBatch& set,
                                         std::size_t item, std::size_t head_samples, double h,
                                         std::uint64_t seed) {
  const std::vector<std::size_t> items{item};
  ModelGrads g = zero_grads(model);
  pipeline_batch(model, set, items, &g);
  const auto base = activation_signature(model, set, item);

  GradCheckResult out;
  auto check = [&](const ParamId& id) {
    Model p = model, q = model;
    param_ref(p, id) += h;
    param_ref(q, id) -= h;
    if (activation_signature(p, set, item) != base || activation_signature(q, set, item) != base) {
      ++out.skipped;
      return false;
    }
    const double fd =
        (pipeline_batch(p, set, items, nullptr).loss - pipeline_batch(q, set, items, nullptr).loss) /
        (2.0 * h);
    const double an = grad_of(g, id);
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
    out.worst_rel = std::max(out.worst_rel, rel);
    ++out.checked;
    return true;
  };

  std::vector<ParamId> head;
  for (const auto& id : all_params(model)) {
    if (id.kind == ParamId::WRe || id.kind == ParamId::WIm) {
      check(id);
    } else {
      head.push_back(id);
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(head.begin(), head.end(), rng);
  std::size_t taken = 0;
  for (std::size_t k = 0; k < head.size() && taken < head_samples; ++k) taken += check(head[k]);
  return out;
}

}  // namespace hpdcnn
