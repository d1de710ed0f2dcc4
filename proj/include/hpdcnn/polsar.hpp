#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include "hpdcnn/linalg.hpp"

namespace hpdcnn {

inline constexpr double kLoadRegularization = 1e-8;

/// Per-pixel 3x3 covariance image. labels is empty or height * width long;
/// 0 marks an unlabeled pixel.
struct CovImage {
  std::size_t height = 0, width = 0;
  std::vector<HpdMatrix> pixels;  // row-major
  std::vector<std::uint16_t> labels;
  std::size_t class_count = 0;
  double eps = 0.0;  // diagonal loading applied at load time

  bool has_labels() const noexcept { return !labels.empty(); }
  const HpdMatrix& at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

/// C3 format: "PC3\0", u32 version (bit 16: labels present), u32 height,
/// u32 width, u32 K, then per pixel 9 f32 (C11, C22, C33, Re C12, Im C12,
/// Re C13, Im C13, Re C23, Im C23), then u16 labels if present.
/// Each pixel is loaded as C + eps I with eps = 1e-8 * mean diagonal.
/// Throws BadMagic, TruncatedFile, NonFiniteEntry, NotPositiveDefinite.
CovImage load_cov(std::istream& is);
CovImage load_cov(const std::filesystem::path& path);

/// Writes the stored values (the load-time eps is removed again).
void save_cov(std::ostream& os, const CovImage& img);
void save_cov(const std::filesystem::path& path, const CovImage& img);

/// Comma or whitespace separated integers, one image row per line.
std::vector<std::uint16_t> load_labels_csv(const std::filesystem::path& path, std::size_t height,
                                           std::size_t width);
/// Attaches labels and sets class_count to the largest id.
void attach_labels(CovImage& img, std::vector<std::uint16_t> labels);

/// Reflect-101 index into [0, n): -1 -> 1, n -> n - 2.
std::size_t mirror_index(std::ptrdiff_t i, std::size_t n) noexcept;

/// Patches of an image referenced by their center pixels.
struct PatchBatch {
  std::shared_ptr<const CovImage> image;
  std::size_t patch = 1;                 // odd
  std::vector<std::size_t> centers;      // row-major pixel index
  std::vector<std::uint16_t> labels;     // center labels (0 allowed only for prediction sets)

  std::size_t size() const noexcept { return centers.size(); }
  /// Pixel index of patch entry (a, b), mirror-padded at the borders.
  std::size_t source(std::size_t i, std::size_t a, std::size_t b) const noexcept;
  const HpdMatrix& at(std::size_t i, std::size_t a, std::size_t b) const {
    return image->pixels[source(i, a, b)];
  }
};

struct Split {
  PatchBatch train, test;
};

/// One patch per labeled pixel, split per class: round(ratio * n_c) training
/// patches (at least one) chosen by a seeded shuffle, the rest for testing.
/// Throws NoLabeledPixels, BadConfig.
Split extract_patches(std::shared_ptr<const CovImage> img, std::size_t patch, double ratio,
                      std::uint64_t seed);

/// Every pixel of the image, labeled or not.
PatchBatch all_pixels(std::shared_ptr<const CovImage> img, std::size_t patch);

struct Rect {
  std::size_t row = 0, col = 0, rows = 0, cols = 0;
  std::uint16_t label = 0;
};

struct SceneSpec {
  std::size_t height = 0, width = 0;
  std::vector<ComplexMatrix> means;  // class c uses means[c - 1]
  unsigned looks = 4;
  std::vector<Rect> geometry;        // later rectangles win
  std::uint64_t seed = 0;
};

/// Multi-look sample C = (1/L) sum k k^H with k ~ CN(0, Sigma_c) per pixel.
/// Pixels outside every rectangle are unlabeled and drawn from the first
/// class. Throws BadSpec.
CovImage synth_scene(const SceneSpec& spec);

/// 3 classes on a 128 x 128 grid with L = 4: identical diagonals, C13 of
/// magnitude 0.7 sqrt(C11 C33) with phases 0, +2pi/3, -2pi/3. Class 1 fills
/// the left half, classes 2 and 3 the top and bottom of the right half.
SceneSpec default_scene(std::uint64_t seed, std::size_t height = 128, std::size_t width = 128);

}  // namespace hpdcnn
