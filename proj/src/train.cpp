#include "hpdcnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "hpdcnn/binio.hpp"
#include "hpdcnn/errors.hpp"

namespace hpdcnn {

namespace {

// Fixed partition count for reductions, independent of the worker count.
constexpr std::size_t kBlocks = 16;

std::pair<std::size_t, std::size_t> block_range(std::size_t n, std::size_t blocks, std::size_t b) {
  return {n * b / blocks, n * (b + 1) / blocks};
}

void put_features(const ComplexMatrix& t, ComplexTensor& x, std::size_t a, std::size_t b) {
  const std::size_t n = t.rows();
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i, ++c) {
    x.re[x.index(a, b, c, 0)] = t.re(i, i);
    x.im[x.index(a, b, c, 0)] = 0.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++c) {
      x.re[x.index(a, b, c, 0)] = t.re(i, j);
      x.im[x.index(a, b, c, 0)] = t.im(i, j);
    }
  }
}

// Adds the channel gradients at (a, b) to the upper triangle of g; the
// imaginary parts of the diagonal channels do not reach the matrix.
void add_feature_grad(const ComplexTensor& gx, std::size_t a, std::size_t b, ComplexMatrix& g) {
  const std::size_t n = g.rows();
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i, ++c) g.re(i, i) += gx.re[gx.index(a, b, c, 0)];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++c) {
      g.re(i, j) += gx.re[gx.index(a, b, c, 0)];
      g.im(i, j) += gx.im[gx.index(a, b, c, 0)];
    }
  }
}

Shape4 head_input(const Model& model, std::size_t patch) {
  return {patch, patch, feature_channels(model.net.output_order()), 1};
}

// Unique source pixels of the selected patches, in first-use order.
struct PixelIndex {
  std::vector<std::size_t> pixels;
  std::vector<std::int32_t> slot;  // image pixel -> position in `pixels`, -1 if unused
};

PixelIndex index_pixels(const PatchBatch& set, std::span<const std::size_t> items) {
  PixelIndex idx;
  idx.slot.assign(set.image->pixels.size(), -1);
  for (std::size_t i : items) {
    for (std::size_t a = 0; a < set.patch; ++a) {
      for (std::size_t b = 0; b < set.patch; ++b) {
        const std::size_t p = set.source(i, a, b);
        if (idx.slot[p] < 0) {
          idx.slot[p] = static_cast<std::int32_t>(idx.pixels.size());
          idx.pixels.push_back(p);
        }
      }
    }
  }
  return idx;
}

ComplexTensor patch_tensor(const Model& model, const PatchBatch& set, std::size_t item,
                           const PixelIndex& idx, const std::vector<ComplexMatrix>& logs) {
  ComplexTensor x(head_input(model, set.patch));
  for (std::size_t a = 0; a < set.patch; ++a) {
    for (std::size_t b = 0; b < set.patch; ++b) {
      put_features(logs[static_cast<std::size_t>(idx.slot[set.source(item, a, b)])], x, a, b);
    }
  }
  return x;
}

std::uint16_t arg_max_class(std::span<const double> probs) {
  return static_cast<std::uint16_t>(std::max_element(probs.begin(), probs.end()) - probs.begin() + 1);
}

void add_into(ConvKernel& dst, const ConvKernel& src) {
  for (std::size_t i = 0; i < dst.wre.size(); ++i) {
    dst.wre[i] += src.wre[i];
    dst.wim[i] += src.wim[i];
  }
  for (std::size_t i = 0; i < dst.bre.size(); ++i) {
    dst.bre[i] += src.bre[i];
    dst.bim[i] += src.bim[i];
  }
}

void add_into(HeadGrads& dst, const HeadGrads& src) {
  for (std::size_t l = 0; l < dst.conv.size(); ++l) add_into(dst.conv[l], src.conv[l]);
  for (std::size_t i = 0; i < dst.dense.a.size(); ++i) dst.dense.a[i] += src.dense.a[i];
  for (std::size_t i = 0; i < dst.dense.b.size(); ++i) dst.dense.b[i] += src.dense.b[i];
}

// Visits every (parameter, gradient) array of the head.
template <class F>
void for_head_arrays(HeadParams& head, HeadGrads& g, F&& f) {
  for (std::size_t l = 0; l < head.conv.size(); ++l) {
    auto& k = head.conv[l].kernel;
    auto& gk = g.conv[l];
    f(k.wre, gk.wre);
    f(k.wim, gk.wim);
    f(k.bre, gk.bre);
    f(k.bim, gk.bim);
  }
  f(head.dense.a, g.dense.a);
  f(head.dense.b, g.dense.b);
}

struct Adam {
  double beta1, beta2, eps;
  std::size_t t = 0;
  std::vector<std::vector<double>> m, v;

  // Per-entry step m_hat / (sqrt(v_hat) + eps) for array `slot`.
  void step(std::size_t slot, std::span<const double> g, std::span<double> out) {
    if (m.size() <= slot) {
      m.resize(slot + 1);
      v.resize(slot + 1);
    }
    if (m[slot].empty()) {
      m[slot].assign(g.size(), 0.0);
      v[slot].assign(g.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[slot][i] = beta1 * m[slot][i] + (1.0 - beta1) * g[i];
      v[slot][i] = beta2 * v[slot][i] + (1.0 - beta2) * g[i] * g[i];
      out[i] = (m[slot][i] / c1) / (std::sqrt(v[slot][i] / c2) + eps);
    }
  }
};

void apply_update(const TrainConfig& cfg, Model& model, ModelGrads& g, Adam& adam) {
  ++adam.t;
  std::size_t slot = 0;
  const bool use_adam = cfg.optimizer == Optimizer::Adam;
  for (std::size_t l = 0; l < model.net.layers.size(); ++l) {
    ComplexMatrix& w = model.net.layers[l].w;
    ComplexMatrix dir = g.w[l];
    if (use_adam) {
      std::vector<double> gre(w.rows() * w.cols()), gim(gre.size()), sre(gre.size()), sim(gre.size());
      for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
          gre[i * w.cols() + j] = dir.re(i, j);
          gim[i * w.cols() + j] = dir.im(i, j);
        }
      }
      adam.step(slot++, gre, sre);
      adam.step(slot++, gim, sim);
      for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
          dir.re(i, j) = sre[i * w.cols() + j];
          dir.im(i, j) = sim[i * w.cols() + j];
        }
      }
    }
    w = stiefel_update(w, stiefel_project(w, dir), cfg.lr);
  }
  std::vector<double> step;
  for_head_arrays(model.head, g.head, [&](std::vector<double>& p, std::vector<double>& gp) {
    if (use_adam) {
      step.resize(gp.size());
      adam.step(slot++, gp, step);
    } else {
      step = gp;
    }
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.lr * step[i];
  });
}

void scale_grads(ModelGrads& g, double s) {
  for (auto& w : g.w) w *= s;
  for (auto& k : g.head.conv) {
    for (auto* v : {&k.wre, &k.wim, &k.bre, &k.bim}) {
      for (double& x : *v) x *= s;
    }
  }
  for (double& x : g.head.dense.a) x *= s;
  for (double& x : g.head.dense.b) x *= s;
}

}  // namespace

Optimizer parse_optimizer(std::string_view name) {
  if (name == "adam") return Optimizer::Adam;
  if (name == "sgd") return Optimizer::Sgd;
  throw Error(ErrorCode::BadConfig, "unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(Optimizer o) noexcept { return o == Optimizer::Adam ? "adam" : "sgd"; }

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::BadConfig, what); };
  if (!(lr > 0.0) || !std::isfinite(lr)) bad("lr must be positive");
  if (batch == 0) bad("batch must be positive");
  if (!(ratio > 0.0 && ratio < 1.0)) bad("ratio must lie in (0, 1)");
  if (patch == 0 || patch % 2 == 0) bad("patch must be odd");
  if (!(tau >= 0.0) || !std::isfinite(tau)) bad("tau must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    bad("adam parameters");
  }
  if (dims.empty()) bad("dims must not be empty");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0) bad("dims must be positive");
    if (i > 0 && dims[i] > dims[i - 1]) bad("dims must not increase");
  }
}

ModelGrads zero_grads(const Model& model) {
  ModelGrads g;
  for (const auto& l : model.net.layers) g.w.emplace_back(l.w.rows(), l.w.cols());
  g.head = zero_grads(model.head);
  return g;
}

std::size_t feature_channels(std::size_t order) noexcept { return order * (order + 1) / 2; }

Model init_model(const TrainConfig& cfg, std::size_t classes, double tau) {
  cfg.validate();
  Model m;
  m.net = init_params(cfg.dims, tau, cfg.seed);
  m.head = init_head(Shape4{cfg.patch, cfg.patch, feature_channels(cfg.dims.back()), 1},
                     default_architecture(), classes, cfg.seed + 1, cfg.product);
  m.path = cfg.path;
  m.zero_imag = cfg.zero_imag;
  return m;
}

double default_tau(const PatchBatch& set) {
  if (set.size() == 0) throw Error(ErrorCode::EmptySet, "no pixels for tau");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c : set.centers) {
    const auto& m = set.image->pixels[c];
    n = m.order();
    sum += trace(m.mat()).real();
  }
  return 1e-4 * sum / static_cast<double>(set.size()) / static_cast<double>(n);
}

HpdMatrix ingest_pixel(const Model& model, const HpdMatrix& x) {
  if (!model.zero_imag) return x;
  ComplexMatrix m = x.mat();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) m.im(i, j) = 0.0;
  }
  return HpdMatrix::adopt(std::move(m));
}

ComplexTensor pipeline_features(const Model& model, std::span<const HpdMatrix> patch) {
  const auto p = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(patch.size()))));
  if (p * p != patch.size()) throw Error(ErrorCode::DimensionMismatch, "patch is not square");
  ComplexTensor x(head_input(model, p));
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < p; ++b) {
      put_features(hpdnet_forward(model.net, ingest_pixel(model, patch[a * p + b]), model.path),
                   x, a, b);
    }
  }
  return x;
}

std::vector<double> forward_pipeline(const Model& model, std::span<const HpdMatrix> patch) {
  return head_predict(model.head, pipeline_features(model, patch));
}

BatchOutcome pipeline_batch(const Model& model, const PatchBatch& set,
                            std::span<const std::size_t> items, ModelGrads* grads) {
  const PixelIndex idx = index_pixels(set, items);
  const std::size_t np = idx.pixels.size(), ni = items.size();
  std::vector<ComplexMatrix> logs(np);
  std::vector<LayerTape> tapes(grads ? np : 0);
  parallel_for(np, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const HpdMatrix x = ingest_pixel(model, set.image->pixels[idx.pixels[k]]);
      logs[k] = hpdnet_forward(model.net, x, model.path, grads ? &tapes[k] : nullptr);
    }
  });

  std::vector<double> losses(ni);
  std::vector<unsigned char> hit(ni);
  std::vector<ComplexTensor> input_grads(grads ? ni : 0);
  std::vector<HeadGrads> block_grads(grads ? kBlocks : 0);
  parallel_for(kBlocks, [&](std::size_t bb, std::size_t be) {
    for (std::size_t blk = bb; blk < be; ++blk) {
      if (grads) block_grads[blk] = zero_grads(model.head);
      const auto [lo, hi] = block_range(ni, kBlocks, blk);
      HeadTape tape;
      for (std::size_t t = lo; t < hi; ++t) {
        const std::size_t item = items[t];
        const ComplexTensor x = patch_tensor(model, set, item, idx, logs);
        const std::uint16_t label = set.labels[item];
        if (label == 0 || label > model.classes()) {
          throw Error(ErrorCode::BadLabel, "training patch label " + std::to_string(label));
        }
        const SoftmaxResult r = head_forward(model.head, x, label - 1u, grads ? &tape : nullptr);
        losses[t] = r.loss;
        hit[t] = arg_max_class(r.probs) == label;
        if (grads) {
          head_backward(model.head, tape, 1.0, block_grads[blk]);
          input_grads[t] = std::move(block_grads[blk].input);
        }
      }
    }
  });

  BatchOutcome out;
  for (std::size_t t = 0; t < ni; ++t) {
    out.loss += losses[t];
    out.correct += hit[t];
  }
  if (!grads) return out;
  for (const auto& bg : block_grads) add_into(grads->head, bg);

  const std::size_t order = model.net.output_order();
  std::vector<ComplexMatrix> gpix(np, ComplexMatrix(order, order));
  for (std::size_t t = 0; t < ni; ++t) {
    for (std::size_t a = 0; a < set.patch; ++a) {
      for (std::size_t b = 0; b < set.patch; ++b) {
        add_feature_grad(input_grads[t], a, b,
                         gpix[static_cast<std::size_t>(idx.slot[set.source(items[t], a, b)])]);
      }
    }
  }
  std::vector<std::vector<ComplexMatrix>> block_w(kBlocks);
  parallel_for(kBlocks, [&](std::size_t bb, std::size_t be) {
    for (std::size_t blk = bb; blk < be; ++blk) {
      for (const auto& l : model.net.layers) block_w[blk].emplace_back(l.w.rows(), l.w.cols());
      const auto [lo, hi] = block_range(np, kBlocks, blk);
      for (std::size_t k = lo; k < hi; ++k) {
        const HpdNetGrads g = hpdnet_backward(model.net, tapes[k], hermitian_part(gpix[k]));
        for (std::size_t l = 0; l < g.w.size(); ++l) block_w[blk][l] += g.w[l];
      }
    }
  });
  for (const auto& bw : block_w) {
    for (std::size_t l = 0; l < bw.size(); ++l) grads->w[l] += bw[l];
  }
  return out;
}

std::vector<std::uint16_t> predict(const Model& model, const PatchBatch& set) {
  std::vector<std::size_t> items(set.size());
  std::iota(items.begin(), items.end(), std::size_t{0});
  const PixelIndex idx = index_pixels(set, items);
  std::vector<ComplexMatrix> logs(idx.pixels.size());
  parallel_for(logs.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      logs[k] = hpdnet_forward(model.net, ingest_pixel(model, set.image->pixels[idx.pixels[k]]),
                               model.path);
    }
  });
  std::vector<std::uint16_t> out(set.size());
  parallel_for(set.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = arg_max_class(head_predict(model.head, patch_tensor(model, set, i, idx, logs)));
    }
  });
  return out;
}

TrainResult train(const TrainConfig& cfg, const PatchBatch& train_set, std::size_t classes,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const double tau = cfg.tau > 0.0 ? cfg.tau : default_tau(train_set);
  return train(cfg, train_set, init_model(cfg, classes, tau), on_epoch);
}

TrainResult train(const TrainConfig& cfg, const PatchBatch& train_set, Model start,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.size() == 0) throw Error(ErrorCode::NoLabeledPixels, "empty training set");
  std::vector<std::size_t> per_class(start.classes() + 1, 0);
  for (auto l : train_set.labels) {
    if (l == 0 || l > start.classes()) throw Error(ErrorCode::BadLabel, "training label out of range");
    ++per_class[l];
  }
  for (std::size_t c = 1; c <= start.classes(); ++c) {
    if (per_class[c] == 0) {
      throw Error(ErrorCode::NoLabeledPixels, "no training patch for class " + std::to_string(c));
    }
  }
  TrainResult result{std::move(start), {}};
  Model& model = result.model;
  Adam adam{cfg.beta1, cfg.beta2, cfg.adam_eps, 0, {}, {}};
  std::mt19937_64 rng(cfg.seed + 2);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch) {
      const std::span<const std::size_t> items(order.data() + s, std::min(cfg.batch, order.size() - s));
      ModelGrads g = zero_grads(model);
      const BatchOutcome r = pipeline_batch(model, train_set, items, &g);
      if (!std::isfinite(r.loss)) {
        throw Error(ErrorCode::Diverged, "loss is not finite in epoch " + std::to_string(epoch));
      }
      loss += r.loss;
      correct += r.correct;
      scale_grads(g, 1.0 / static_cast<double>(items.size()));
      try {
        apply_update(cfg, model, g, adam);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::RankDeficient) throw;
        throw Error(ErrorCode::Diverged, std::string("weight update collapsed: ") + e.what());
      }
    }
    const auto n = static_cast<double>(order.size());
    result.history.push_back({epoch, loss / n, static_cast<double>(correct) / n});
    if (on_epoch) on_epoch(result.history.back(), model);
  }
  return result;
}

ConfusionReport report_from_matrix(std::vector<std::vector<std::size_t>> matrix) {
  const std::size_t k = matrix.size();
  for (const auto& row : matrix) {
    if (row.size() != k) throw Error(ErrorCode::DimensionMismatch, "confusion matrix is not square");
  }
  ConfusionReport r;
  r.matrix = std::move(matrix);
  r.per_class_acc.assign(k, 0.0);
  std::vector<double> rows(k, 0.0), cols(k, 0.0);
  double total = 0.0, diag = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto v = static_cast<double>(r.matrix[i][j]);
      rows[i] += v;
      cols[j] += v;
      total += v;
    }
    diag += static_cast<double>(r.matrix[i][i]);
  }
  if (total == 0.0) throw Error(ErrorCode::EmptyTestSet, "no test samples");
  std::size_t present = 0;
  double acc_sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (rows[i] > 0.0) {
      r.per_class_acc[i] = static_cast<double>(r.matrix[i][i]) / rows[i];
      acc_sum += r.per_class_acc[i];
      ++present;
    }
  }
  r.oa = diag / total;
  r.aa = acc_sum / static_cast<double>(present);
  double pe = 0.0;
  for (std::size_t i = 0; i < k; ++i) pe += (rows[i] / total) * (cols[i] / total);
  if (pe >= 1.0) {
    r.kappa = r.oa == 1.0 ? 1.0 : 0.0;
  } else {
    r.kappa = (r.oa - pe) / (1.0 - pe);
  }
  return r;
}

ConfusionReport confusion_report(std::span<const std::uint16_t> truth,
                                 std::span<const std::uint16_t> predicted, std::size_t classes) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorCode::DimensionMismatch, "truth and prediction lengths differ");
  }
  if (truth.empty()) throw Error(ErrorCode::EmptyTestSet, "no test samples");
  std::vector<std::vector<std::size_t>> m(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0 || truth[i] > classes || predicted[i] == 0 || predicted[i] > classes) {
      throw Error(ErrorCode::BadLabel, "class id out of range");
    }
    ++m[truth[i] - 1u][predicted[i] - 1u];
  }
  return report_from_matrix(std::move(m));
}

ConfusionReport evaluate(const Model& model, const PatchBatch& test) {
  if (test.size() == 0) throw Error(ErrorCode::EmptyTestSet, "no test patches");
  const auto pred = predict(model, test);
  return confusion_report(test.labels, pred, model.classes());
}

ClassMap predict_map(const Model& model, std::shared_ptr<const CovImage> img, std::size_t patch) {
  ClassMap map;
  map.height = img->height;
  map.width = img->width;
  map.classes = predict(model, all_pixels(std::move(img), patch));
  return map;
}

void write_model(std::ostream& os, const Model& model) {
  binio::put_magic(os, "HCNN");
  binio::put_u32(os, 1);
  binio::put_u32(os, (model.path == MatrixPath::Fast ? 1u : 0u) | (model.zero_imag ? 2u : 0u));
  write_hpdnet(os, model.net);
  write_head(os, model.head);
}

Model read_model(std::istream& is) {
  binio::expect_magic(is, "HCNN");
  if (binio::get_u32(is) != 1) throw Error(ErrorCode::BadMagic, "unsupported model version");
  const std::uint32_t flags = binio::get_u32(is);
  Model m;
  m.path = (flags & 1u) ? MatrixPath::Fast : MatrixPath::Exact;
  m.zero_imag = (flags & 2u) != 0;
  m.net = read_hpdnet(is);
  m.head = read_head(is);
  if (feature_channels(m.net.output_order()) != m.head.input.c) {
    throw Error(ErrorCode::DimensionMismatch, "network output does not match head input");
  }
  return m;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_model(os, model);
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  return read_model(is);
}

std::size_t worker_count() {
  if (const char* env = std::getenv("THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    if (n > 0) fn(0, n);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    const auto [lo, hi] = block_range(n, workers, t);
    pool.emplace_back([&, lo = lo, hi = hi] {
      try {
        fn(lo, hi);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace hpdcnn
