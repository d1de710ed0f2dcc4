#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include "CLI11.hpp"
#include "hpdcnn/bench.hpp"
#include "hpdcnn/config.hpp"
#include "hpdcnn/errors.hpp"
#include "hpdcnn/metrics.hpp"
#include "hpdcnn/polsar.hpp"
#include "hpdcnn/train.hpp"

namespace fs = std::filesystem;
using namespace hpdcnn;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

void need_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::IoError, std::string(what) + " not found: " + path);
}

void need_parent(const std::string& path) {
  if (path.empty()) return;
  const fs::path parent = fs::absolute(path).parent_path();
  if (!fs::is_directory(parent)) throw Error(ErrorCode::IoError, "output directory missing: " + parent.string());
}

std::shared_ptr<CovImage> load_image(const std::string& input, const std::string& labels) {
  auto img = std::make_shared<CovImage>(load_cov(fs::path(input)));
  if (!labels.empty()) attach_labels(*img, load_labels_csv(labels, img->height, img->width));
  return img;
}

struct TrainArgs {
  std::string input, labels, config, model, history, report, effective;
  std::map<std::string, std::string> overrides;
};

TrainConfig resolve_config(const std::string& file, const std::map<std::string, std::string>& overrides) {
  KeyValues kv = file.empty() ? KeyValues{} : load_key_values(file);
  for (const auto& [k, v] : overrides) {
    if (!v.empty()) kv[k] = v;
  }
  return train_config_from(kv);
}

void add_config_options(CLI::App* app, std::map<std::string, std::string>& overrides) {
  for (const auto& key : train_config_keys()) {
    app->add_option("--" + key, overrides[key], "override config key '" + key + "'");
  }
}

int run_synth(std::uint64_t seed, std::size_t h, std::size_t w, unsigned looks, const std::string& out,
              const std::string& labels_csv) {
  need_parent(out);
  need_parent(labels_csv);
  auto spec = default_scene(seed, h, w);
  spec.looks = looks;
  const CovImage img = synth_scene(spec);
  save_cov(fs::path(out), img);
  if (!labels_csv.empty()) write_map_csv(labels_csv, ClassMap{img.height, img.width, img.labels});
  std::cerr << "synth: " << h << "x" << w << " scene, " << img.class_count << " classes -> " << out << "\n";
  return kOk;
}

int run_train(const TrainArgs& a) {
  need_file(a.input, "input");
  if (!a.labels.empty()) need_file(a.labels, "labels");
  if (!a.config.empty()) need_file(a.config, "config");
  for (const auto* p : {&a.model, &a.history, &a.report, &a.effective}) need_parent(*p);
  const TrainConfig cfg = resolve_config(a.config, a.overrides);
  const std::string effective = a.effective.empty() ? a.model + ".cfg" : a.effective;
  need_parent(effective);

  auto img = load_image(a.input, a.labels);
  if (!img->has_labels()) throw Error(ErrorCode::NoLabeledPixels, "training needs labels");
  const Split split = extract_patches(img, cfg.patch, cfg.ratio, cfg.seed);
  {
    std::ofstream os(effective);
    os << dump_key_values(to_key_values(cfg));
    if (!os) throw Error(ErrorCode::IoError, "cannot write " + effective);
  }
  std::cerr << "train: " << split.train.size() << " training, " << split.test.size() << " test patches\n";
  const TrainResult r = train(cfg, split.train, img->class_count, [](const EpochStats& e, const Model&) {
    std::fprintf(stderr, "epoch %zu  loss %.6f  train acc %.4f\n", e.epoch, e.mean_loss, e.train_acc);
  });
  save_model(a.model, r.model);
  if (!a.history.empty()) write_history_csv(a.history, r.history);
  if (!a.report.empty()) {
    if (split.test.size() == 0) throw Error(ErrorCode::EmptyTestSet, "no test patches for the report");
    const auto rep = evaluate(r.model, split.test);
    write_report_json(a.report, rep);
    std::printf("OA %.4f  AA %.4f  kappa %.4f\n", rep.oa, rep.aa, rep.kappa);
  }
  return kOk;
}

int run_eval(const std::string& model_path, const std::string& input, const std::string& labels,
             const std::string& config, const std::map<std::string, std::string>& overrides,
             const std::string& split_name, const std::string& report) {
  need_file(model_path, "model");
  need_file(input, "input");
  if (!labels.empty()) need_file(labels, "labels");
  if (!config.empty()) need_file(config, "config");
  need_parent(report);
  const Model model = load_model(model_path);
  TrainConfig cfg = resolve_config(config, overrides);
  cfg.patch = model.head.input.h;
  auto img = load_image(input, labels);
  if (!img->has_labels()) throw Error(ErrorCode::NoLabeledPixels, "evaluation needs labels");
  PatchBatch set;
  if (split_name == "all") {
    set = all_pixels(img, cfg.patch);
    std::vector<std::size_t> keep;
    std::vector<std::uint16_t> lab;
    for (std::size_t i = 0; i < set.centers.size(); ++i) {
      if (img->labels[set.centers[i]] != 0) {
        keep.push_back(set.centers[i]);
        lab.push_back(img->labels[set.centers[i]]);
      }
    }
    set.centers = std::move(keep);
    set.labels = std::move(lab);
  } else {
    set = extract_patches(img, cfg.patch, cfg.ratio, cfg.seed).test;
  }
  const auto rep = evaluate(model, set);
  if (!report.empty()) write_report_json(report, rep);
  std::printf("OA %.4f  AA %.4f  kappa %.4f\n", rep.oa, rep.aa, rep.kappa);
  return kOk;
}

int run_predict(const std::string& model_path, const std::string& input, const std::string& ppm,
                const std::string& csv) {
  need_file(model_path, "model");
  need_file(input, "input");
  need_parent(ppm);
  need_parent(csv);
  if (ppm.empty() && csv.empty()) throw Error(ErrorCode::BadConfig, "predict needs --ppm or --csv");
  const Model model = load_model(model_path);
  const auto img = load_image(input, "");
  const ClassMap map = predict_map(model, img, model.head.input.h);
  if (!ppm.empty()) write_ppm(ppm, map);
  if (!csv.empty()) write_map_csv(csv, map);
  std::cerr << "predict: " << map.height << "x" << map.width << " map written\n";
  return kOk;
}

int run_dist(const std::string& metric, const std::string& input) {
  need_file(input, "input");
  const MetricKind kind = parse_metric(metric);
  const auto ms = load_matrices(input);
  if (ms.size() < 2) throw Error(ErrorCode::EmptySet, "dist needs at least two matrices");
  for (std::size_t i = 1; i < ms.size(); ++i) {
    std::printf("%.6f\n", distance(kind, ms[i - 1], ms[i]));
  }
  return kOk;
}

int run_bench(std::size_t n, std::size_t order, double cmin, double cmax, std::uint64_t seed,
              int repeats, const std::string& json) {
  need_parent(json);
  const BenchReport r = bench_fastpath(n, order, cmin, cmax, seed, repeats);
  std::printf("%-6s %14s %14s %10s %12s\n", "op", "exact us/mat", "fast us/mat", "speedup", "max dev");
  auto row = [&](const char* name, double e, double f, double d) {
    const double per = 1e6 / static_cast<double>(n);
    std::printf("%-6s %14.3f %14.3f %10.3f %12.3e\n", name, e * per, f * per, e / f, d);
  };
  row("sqrt", r.exact_sqrt, r.fast_sqrt, r.dev_sqrt);
  row("log", r.exact_log, r.fast_log, r.dev_log);
  row("clamp", r.exact_clamp, r.fast_clamp, r.dev_clamp);
  row("total", r.exact_total(), r.fast_total(), r.max_deviation());
  if (!json.empty()) {
    std::ofstream os(json);
    os << bench_json(r) << "\n";
    if (!os) throw Error(ErrorCode::IoError, "cannot write " + json);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Riemannian complex HPD network for PolSAR classification"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::size_t height = 128, width = 128;
  unsigned looks = 4;
  std::string out, labels_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic labeled scene");
  synth->add_option("--seed", seed, "random seed");
  synth->add_option("--height", height, "rows")->check(CLI::PositiveNumber);
  synth->add_option("--width", width, "columns")->check(CLI::PositiveNumber);
  synth->add_option("--looks", looks, "looks per pixel");
  synth->add_option("--out", out, "C3 output file")->required();
  synth->add_option("--labels-csv", labels_out, "also write the labels as CSV");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train a model on a labeled scene");
  tr->add_option("--input", ta.input, "C3 scene")->required();
  tr->add_option("--labels", ta.labels, "label CSV (else the labels stored in the scene)");
  tr->add_option("--config", ta.config, "key = value configuration file");
  tr->add_option("--model", ta.model, "model output file")->required();
  tr->add_option("--history", ta.history, "per-epoch CSV");
  tr->add_option("--report", ta.report, "test-split JSON report");
  tr->add_option("--effective-config", ta.effective, "resolved configuration (default <model>.cfg)");
  add_config_options(tr, ta.overrides);

  std::string model, input, labels, config, split = "test", report;
  std::map<std::string, std::string> ev_overrides;
  auto* ev = app.add_subcommand("eval", "confusion matrix, OA, AA and kappa");
  ev->add_option("--model", model, "model file")->required();
  ev->add_option("--input", input, "C3 scene")->required();
  ev->add_option("--labels", labels, "label CSV");
  ev->add_option("--config", config, "configuration used for training (split ratio and seed)");
  ev->add_option("--split", split, "test or all")->check(CLI::IsMember({"test", "all"}));
  ev->add_option("--report", report, "JSON report");
  add_config_options(ev, ev_overrides);

  std::string ppm, csv;
  auto* pr = app.add_subcommand("predict", "classify every pixel");
  pr->add_option("--model", model, "model file")->required();
  pr->add_option("--input", input, "C3 scene")->required();
  pr->add_option("--ppm", ppm, "indexed color map");
  pr->add_option("--csv", csv, "class ids");

  std::string metric = "log-euclidean";
  auto* di = app.add_subcommand("dist", "distances between consecutive matrices of a text file");
  di->add_option("--metric", metric, "euclidean, log-euclidean or airm");
  di->add_option("--input", input, "matrix text file")->required();

  std::size_t n = 1024, order = 3;
  double cmin = 1.0, cmax = 100.0;
  int repeats = 3;
  std::string json;
  auto* be = app.add_subcommand("bench", "exact versus Newton-Schulz matrix functions");
  be->add_option("--n", n, "population size (at least 100)");
  be->add_option("--order", order, "matrix order");
  be->add_option("--cond-min", cmin, "smallest condition number");
  be->add_option("--cond-max", cmax, "largest condition number");
  be->add_option("--seed", seed, "random seed");
  be->add_option("--repeats", repeats, "timing repetitions (best is kept)");
  be->add_option("--json", json, "JSON report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return run_synth(seed, height, width, looks, out, labels_out);
    if (*tr) return run_train(ta);
    if (*ev) return run_eval(model, input, labels, config, ev_overrides, split, report);
    if (*pr) return run_predict(model, input, ppm, csv);
    if (*di) return run_dist(metric, input);
    if (*be) return run_bench(n, order, cmin, cmax, seed, repeats, json);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.error_class()) {
      case ErrorClass::Usage: return kUsage;
      case ErrorClass::Data: return kData;
      case ErrorClass::Numeric: return kNumeric;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
