#include "hpdcnn/polsar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "hpdcnn/binio.hpp"
#include "hpdcnn/errors.hpp"

namespace hpdcnn {

namespace {

constexpr std::uint32_t kC3Version = 1;
constexpr std::uint32_t kLabelsFlag = 1u << 16;
constexpr std::size_t kMaxSide = 1u << 16;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::string pixel_str(std::size_t i, std::size_t width) {
  return "(" + std::to_string(i / width) + ", " + std::to_string(i % width) + ")";
}

}  // namespace

CovImage load_cov(std::istream& is) {
  using namespace binio;
  expect_magic(is, std::string_view("PC3\0", 4));
  const std::uint32_t version = get_u32(is);
  if ((version & 0xFFFFu) != kC3Version || (version & ~(0xFFFFu | kLabelsFlag)) != 0) {
    throw Error(ErrorCode::BadMagic, "unsupported C3 version word " + std::to_string(version));
  }
  CovImage img;
  img.height = get_u32(is);
  img.width = get_u32(is);
  img.class_count = get_u32(is);
  if (img.height == 0 || img.width == 0 || img.height > kMaxSide || img.width > kMaxSide ||
      img.class_count > 0xFFFF) {
    throw Error(ErrorCode::BadDims, "C3 header " + std::to_string(img.height) + "x" +
                                        std::to_string(img.width));
  }
  const std::size_t n = img.height * img.width;
  std::vector<ComplexMatrix> raw(n, ComplexMatrix(3, 3));
  double diag_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    float v[9];
    for (float& x : v) {
      x = get_f32(is);
      if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteEntry, "pixel " + pixel_str(i, img.width));
    }
    ComplexMatrix& c = raw[i];
    c.re(0, 0) = v[0];
    c.re(1, 1) = v[1];
    c.re(2, 2) = v[2];
    const std::size_t pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (int k = 0; k < 3; ++k) {
      const auto [p, q] = pairs[k];
      c.re(p, q) = v[3 + 2 * k];
      c.im(p, q) = v[4 + 2 * k];
      c.re(q, p) = v[3 + 2 * k];
      c.im(q, p) = -static_cast<double>(v[4 + 2 * k]);
    }
    diag_sum += c.re(0, 0) + c.re(1, 1) + c.re(2, 2);
  }
  if (version & kLabelsFlag) {
    img.labels.resize(n);
    for (auto& l : img.labels) {
      l = get_u16(is);
      if (l > img.class_count) {
        throw Error(ErrorCode::BadLabel, "label " + std::to_string(l) + " exceeds K = " +
                                             std::to_string(img.class_count));
      }
    }
  }
  img.eps = kLoadRegularization * diag_sum / static_cast<double>(3 * n);
  img.pixels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    HpdMatrix m = regularize(raw[i], img.eps);
    if (!cholesky(m.mat())) {
      throw Error(ErrorCode::NotPositiveDefinite, "pixel " + pixel_str(i, img.width));
    }
    img.pixels.push_back(std::move(m));
  }
  return img;
}

CovImage load_cov(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return load_cov(is);
}

void save_cov(std::ostream& os, const CovImage& img) {
  using namespace binio;
  put_magic(os, std::string_view("PC3\0", 4));
  put_u32(os, kC3Version | (img.has_labels() ? kLabelsFlag : 0u));
  put_u32(os, static_cast<std::uint32_t>(img.height));
  put_u32(os, static_cast<std::uint32_t>(img.width));
  put_u32(os, static_cast<std::uint32_t>(img.class_count));
  for (const HpdMatrix& p : img.pixels) {
    const ComplexMatrix& c = p.mat();
    for (std::size_t d = 0; d < 3; ++d) put_f32(os, static_cast<float>(c.re(d, d) - img.eps));
    put_f32(os, static_cast<float>(c.re(0, 1)));
    put_f32(os, static_cast<float>(c.im(0, 1)));
    put_f32(os, static_cast<float>(c.re(0, 2)));
    put_f32(os, static_cast<float>(c.im(0, 2)));
    put_f32(os, static_cast<float>(c.re(1, 2)));
    put_f32(os, static_cast<float>(c.im(1, 2)));
  }
  for (std::uint16_t l : img.labels) put_u16(os, l);
}

void save_cov(const std::filesystem::path& path, const CovImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  save_cov(os, img);
  if (!os) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::vector<std::uint16_t> load_labels_csv(const std::filesystem::path& path, std::size_t height,
                                           std::size_t width) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint16_t> out;
  out.reserve(height * width);
  std::string line;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::size_t count = 0;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      long v = -1;
      try {
        v = std::stol(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || v < 0 || v > 0xFFFF) {
        throw Error(ErrorCode::BadLabel, "label '" + tok + "' on line " + std::to_string(row + 1));
      }
      out.push_back(static_cast<std::uint16_t>(v));
      ++count;
    }
    if (count == 0) continue;
    if (count != width) {
      throw Error(ErrorCode::BadDims, "label row " + std::to_string(row + 1) + " has " +
                                          std::to_string(count) + " entries, expected " +
                                          std::to_string(width));
    }
    ++row;
  }
  if (row != height) {
    throw Error(ErrorCode::BadDims,
                "label map has " + std::to_string(row) + " rows, expected " + std::to_string(height));
  }
  return out;
}

void attach_labels(CovImage& img, std::vector<std::uint16_t> labels) {
  if (labels.size() != img.height * img.width) {
    throw Error(ErrorCode::BadDims, "label map size does not match the image");
  }
  img.class_count = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  img.labels = std::move(labels);
}

std::size_t mirror_index(std::ptrdiff_t i, std::size_t n) noexcept {
  if (n <= 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

std::size_t PatchBatch::source(std::size_t i, std::size_t a, std::size_t b) const noexcept {
  const std::size_t w = image->width;
  const auto half = static_cast<std::ptrdiff_t>(patch / 2);
  const auto row = static_cast<std::ptrdiff_t>(centers[i] / w) + static_cast<std::ptrdiff_t>(a) - half;
  const auto col = static_cast<std::ptrdiff_t>(centers[i] % w) + static_cast<std::ptrdiff_t>(b) - half;
  return mirror_index(row, image->height) * w + mirror_index(col, w);
}

Split extract_patches(std::shared_ptr<const CovImage> img, std::size_t patch, double ratio,
                      std::uint64_t seed) {
  if (patch % 2 == 0) throw Error(ErrorCode::BadConfig, "patch size must be odd");
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::BadConfig, "ratio must be in (0, 1)");
  if (!img->has_labels()) throw Error(ErrorCode::NoLabeledPixels, "image has no label map");
  std::vector<std::vector<std::size_t>> by_class(img->class_count + 1);
  for (std::size_t i = 0; i < img->labels.size(); ++i) {
    if (img->labels[i] != 0) by_class[img->labels[i]].push_back(i);
  }
  Split s;
  s.train.image = s.test.image = img;
  s.train.patch = s.test.patch = patch;
  std::vector<std::pair<std::size_t, bool>> chosen;  // pixel, is_train
  std::mt19937_64 rng(seed);
  for (std::size_t c = 1; c < by_class.size(); ++c) {
    auto& pix = by_class[c];
    if (pix.empty()) continue;
    std::shuffle(pix.begin(), pix.end(), rng);
    const auto want = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(pix.size())));
    const std::size_t n_train = std::clamp<std::size_t>(want, 1, pix.size());
    for (std::size_t k = 0; k < pix.size(); ++k) chosen.emplace_back(pix[k], k < n_train);
  }
  if (chosen.empty()) throw Error(ErrorCode::NoLabeledPixels, "every pixel is unlabeled");
  std::sort(chosen.begin(), chosen.end());
  for (const auto& [p, is_train] : chosen) {
    PatchBatch& b = is_train ? s.train : s.test;
    b.centers.push_back(p);
    b.labels.push_back(img->labels[p]);
  }
  return s;
}

PatchBatch all_pixels(std::shared_ptr<const CovImage> img, std::size_t patch) {
  if (patch % 2 == 0) throw Error(ErrorCode::BadConfig, "patch size must be odd");
  PatchBatch b;
  b.image = img;
  b.patch = patch;
  const std::size_t n = img->height * img->width;
  b.centers.resize(n);
  b.labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    b.centers[i] = i;
    if (img->has_labels()) b.labels[i] = img->labels[i];
  }
  return b;
}

CovImage synth_scene(const SceneSpec& spec) {
  if (spec.looks < 3) throw Error(ErrorCode::BadSpec, "at least 3 looks are required");
  if (spec.height == 0 || spec.width == 0 || spec.height > kMaxSide || spec.width > kMaxSide) {
    throw Error(ErrorCode::BadSpec, "scene size");
  }
  if (spec.means.empty() || spec.means.size() > 0xFFFF) {
    throw Error(ErrorCode::BadSpec, "scene needs at least one class mean");
  }
  std::vector<ComplexMatrix> chol;
  for (const auto& m : spec.means) {
    if (m.rows() != 3 || m.cols() != 3 || !satisfies_hpd_invariants(m)) {
      throw Error(ErrorCode::BadSpec, "class means must be 3x3 HPD");
    }
    chol.push_back(*cholesky(m));
  }
  CovImage img;
  img.height = spec.height;
  img.width = spec.width;
  img.class_count = spec.means.size();
  img.labels.assign(spec.height * spec.width, 0);
  for (const Rect& r : spec.geometry) {
    if (r.row + r.rows > spec.height || r.col + r.cols > spec.width) {
      throw Error(ErrorCode::BadSpec, "rectangle outside the scene");
    }
    if (r.label == 0 || r.label > spec.means.size()) {
      throw Error(ErrorCode::BadSpec, "rectangle label " + std::to_string(r.label));
    }
    for (std::size_t i = r.row; i < r.row + r.rows; ++i) {
      for (std::size_t j = r.col; j < r.col + r.cols; ++j) img.labels[i * spec.width + j] = r.label;
    }
  }
  const std::size_t n = spec.height * spec.width;
  img.pixels.resize(n);
  const double inv_looks = 1.0 / spec.looks;
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(i)));
    std::normal_distribution<double> g(0.0, std::sqrt(0.5));
    const ComplexMatrix& l = chol[img.labels[i] == 0 ? 0 : img.labels[i] - 1];
    ComplexMatrix acc(3, 3);
    for (unsigned look = 0; look < spec.looks; ++look) {
      ComplexMatrix w(3, 1);
      for (std::size_t r = 0; r < 3; ++r) {
        w.re(r, 0) = g(rng);
        w.im(r, 0) = g(rng);
      }
      const ComplexMatrix k = l * w;
      acc += k * adjoint(k);
    }
    img.pixels[i] = HpdMatrix::adopt(acc * inv_looks);
  }
  return img;
}

SceneSpec default_scene(std::uint64_t seed, std::size_t height, std::size_t width) {
  SceneSpec spec;
  spec.height = height;
  spec.width = width;
  spec.looks = 4;
  spec.seed = seed;
  const double d[3] = {1.0, 0.25, 0.8};
  const double mag = 0.7 * std::sqrt(d[0] * d[2]);
  for (double phase : {0.0, 2.0 * std::numbers::pi / 3.0, -2.0 * std::numbers::pi / 3.0}) {
    ComplexMatrix m = ComplexMatrix::diagonal(std::span<const double>(d, 3));
    m.re(0, 2) = m.re(2, 0) = mag * std::cos(phase);
    m.im(0, 2) = mag * std::sin(phase);
    m.im(2, 0) = -m.im(0, 2);
    spec.means.push_back(m);
  }
  const std::size_t half_w = width / 2, half_h = height / 2;
  spec.geometry = {{0, 0, height, half_w, 1},
                   {0, half_w, half_h, width - half_w, 2},
                   {half_h, half_w, height - half_h, width - half_w, 3}};
  return spec;
}

}  // namespace hpdcnn
