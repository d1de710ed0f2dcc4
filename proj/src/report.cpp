#include <array>
#include <fstream>

#include "hpdcnn/errors.hpp"
#include "hpdcnn/train.hpp"
#include "json.hpp"

namespace hpdcnn {

namespace {

constexpr std::array<std::array<unsigned char, 3>, 16> kPalette{{
    {0, 0, 0},       {230, 25, 75},   {60, 180, 75},   {0, 130, 200},
    {255, 225, 25},  {245, 130, 48},  {145, 30, 180},  {70, 240, 240},
    {240, 50, 230},  {210, 245, 60},  {250, 190, 212}, {0, 128, 128},
    {220, 190, 255}, {170, 110, 40},  {128, 0, 0},     {128, 128, 128},
}};

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return os;
}

void check_written(const std::ofstream& os, const std::filesystem::path& path) {
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const ClassMap& map) {
  auto os = open_out(path, true);
  os << "P6\n" << map.width << ' ' << map.height << "\n255\n";
  for (auto c : map.classes) {
    const auto& rgb = kPalette[c % kPalette.size()];
    os.write(reinterpret_cast<const char*>(rgb.data()), 3);
  }
  check_written(os, path);
}

void write_map_csv(const std::filesystem::path& path, const ClassMap& map) {
  auto os = open_out(path, false);
  for (std::size_t r = 0; r < map.height; ++r) {
    for (std::size_t c = 0; c < map.width; ++c) {
      if (c) os << ',';
      os << map.classes[r * map.width + c];
    }
    os << '\n';
  }
  check_written(os, path);
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
  auto os = open_out(path, false);
  os.precision(17);
  os << "epoch,mean_loss,train_acc\n";
  for (const auto& h : history) os << h.epoch << ',' << h.mean_loss << ',' << h.train_acc << '\n';
  check_written(os, path);
}

std::string report_json(const ConfusionReport& r) {
  nlohmann::ordered_json j;
  j["oa"] = r.oa;
  j["aa"] = r.aa;
  j["kappa"] = r.kappa;
  j["per_class_acc"] = r.per_class_acc;
  j["confusion"] = r.matrix;
  return j.dump(2);
}

void write_report_json(const std::filesystem::path& path, const ConfusionReport& r) {
  auto os = open_out(path, false);
  os << report_json(r) << '\n';
  check_written(os, path);
}

}  // namespace hpdcnn
