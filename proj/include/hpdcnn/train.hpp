#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hpdcnn/cvcnn.hpp"
#include "hpdcnn/hpdnet.hpp"
#include "hpdcnn/polsar.hpp"

namespace hpdcnn {

enum class Optimizer { Adam, Sgd };

Optimizer parse_optimizer(std::string_view name);
std::string_view to_string(Optimizer o) noexcept;

struct TrainConfig {
  double lr = 0.005;
  std::size_t epochs = 50;
  std::size_t batch = 64;
  double ratio = 0.1;
  std::size_t patch = 13;
  double tau = 0.0;  // 0: 1e-4 * mean trace / n over the training centers
  std::uint64_t seed = 1;
  MatrixPath path = MatrixPath::Exact;
  Optimizer optimizer = Optimizer::Adam;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::vector<std::size_t> dims{3, 3, 3};
  ConvProduct product = ConvProduct::Standard;
  bool zero_imag = false;  // drop imaginary parts of every input pixel

  /// Throws BadConfig.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Per-pixel HPDnet followed by the complex head.
struct Model {
  HpdNetParams net;
  HeadParams head;
  MatrixPath path = MatrixPath::Exact;
  bool zero_imag = false;

  std::size_t classes() const noexcept { return head.dense.classes; }
  bool operator==(const Model&) const = default;
};

struct ModelGrads {
  std::vector<ComplexMatrix> w;
  HeadGrads head;
};

ModelGrads zero_grads(const Model& model);

/// Channels of a Hermitian matrix: diagonal entries, then the upper
/// off-diagonals row by row (C11, C22, C33, C12, C13, C23 for order 3).
std::size_t feature_channels(std::size_t order) noexcept;

/// Fresh model for P x P patches of order-dims[0] pixels.
Model init_model(const TrainConfig& cfg, std::size_t classes, double tau);

/// Mean trace / n over the given pixels times 1e-4.
double default_tau(const PatchBatch& set);

/// The pixel as the network sees it (imaginary parts dropped if requested).
HpdMatrix ingest_pixel(const Model& model, const HpdMatrix& x);

/// Head input for one patch given as P x P pixels, row-major.
ComplexTensor pipeline_features(const Model& model, std::span<const HpdMatrix> patch);
/// Class probabilities for one patch.
std::vector<double> forward_pipeline(const Model& model, std::span<const HpdMatrix> patch);

/// Summed cross-entropy over the selected patches of `set`; gradients of the
/// sum accumulate into `grads` when it is non-null. Pixels shared between
/// patches are evaluated once.
struct BatchOutcome {
  double loss = 0.0;
  std::size_t correct = 0;
};
BatchOutcome pipeline_batch(const Model& model, const PatchBatch& set,
                            std::span<const std::size_t> items, ModelGrads* grads);

/// Arg-max class id (1-based, lowest id on ties) for every patch of `set`.
std::vector<std::uint16_t> predict(const Model& model, const PatchBatch& set);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_acc = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(const EpochStats&, const Model&)>;

/// Joint training of both stages from a single cross-entropy loss. Throws
/// Diverged, NoLabeledPixels.
TrainResult train(const TrainConfig& cfg, const PatchBatch& train_set, std::size_t classes,
                  const EpochCallback& on_epoch = {});
/// Continues from `start`.
TrainResult train(const TrainConfig& cfg, const PatchBatch& train_set, Model start,
                  const EpochCallback& on_epoch = {});

struct ConfusionReport {
  std::vector<std::vector<std::size_t>> matrix;  // [true - 1][predicted - 1]
  std::vector<double> per_class_acc;
  double oa = 0.0, aa = 0.0, kappa = 0.0;
};

/// Classes without test samples get accuracy 0 and are left out of AA.
/// Throws EmptyTestSet.
ConfusionReport report_from_matrix(std::vector<std::vector<std::size_t>> matrix);
ConfusionReport confusion_report(std::span<const std::uint16_t> truth,
                                 std::span<const std::uint16_t> predicted, std::size_t classes);

/// Throws EmptyTestSet.
ConfusionReport evaluate(const Model& model, const PatchBatch& test);

struct ClassMap {
  std::size_t height = 0, width = 0;
  std::vector<std::uint16_t> classes;  // row-major, 1-based
};

ClassMap predict_map(const Model& model, std::shared_ptr<const CovImage> img, std::size_t patch);

/// Binary PPM with a fixed palette indexed by class id.
void write_ppm(const std::filesystem::path& path, const ClassMap& map);
void write_map_csv(const std::filesystem::path& path, const ClassMap& map);
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history);
std::string report_json(const ConfusionReport& r);
void write_report_json(const std::filesystem::path& path, const ConfusionReport& r);

/// "HCNN" u32 version, u32 flags (bit 0: fast path, bit 1: imaginary parts
/// dropped), then the HPDN and CVHD blocks.
void write_model(std::ostream& os, const Model& model);
Model read_model(std::istream& is);
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

/// Worker count: THREADS if set and positive, else the hardware concurrency.
std::size_t worker_count();

/// Runs fn(begin, end) over [0, n) split into at most worker_count() contiguous
/// ranges.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace hpdcnn
