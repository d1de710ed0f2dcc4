#include <sstream>

#include "doctest.h"
#include "hpdcnn/bench.hpp"
#include "hpdcnn/config.hpp"
#include "hpdcnn/errors.hpp"
#include "hpdcnn/metrics.hpp"

using namespace hpdcnn;

namespace {

KeyValues parse(const std::string& text) {
  std::istringstream is(text);
  return parse_key_values(is);
}

std::vector<HpdMatrix> matrices(const std::string& text) {
  std::istringstream is(text);
  return parse_matrices(is);
}

}  // namespace

TEST_CASE("key-value parsing") {
  const auto kv = parse("# comment\nlr = 0.01\n\n  epochs=3  # trailing\npath = fast\n");
  CHECK(kv.size() == 3);
  CHECK(kv.at("epochs") == "3");
  CHECK_THROWS_AS(parse("lr 0.1\n"), Error);
  CHECK_THROWS_AS(parse("lr = 1\nlr = 2\n"), Error);
  CHECK_THROWS_AS(parse(" = 2\n"), Error);
  CHECK(merge(kv, {{"lr", "0.5"}}).at("lr") == "0.5");
}

TEST_CASE("train config from keys") {
  const auto cfg = train_config_from(parse("lr = 0.01\ndims = 3, 2\npath = fast\nzero_imag = true\n"));
  CHECK(cfg.lr == 0.01);
  CHECK(cfg.dims == std::vector<std::size_t>{3, 2});
  CHECK(cfg.path == MatrixPath::Fast);
  CHECK(cfg.zero_imag);
  CHECK(cfg.epochs == 50);
  CHECK_THROWS_AS(train_config_from(parse("learning_rate = 0.1\n")), Error);
  CHECK_THROWS_AS(train_config_from(parse("epochs = -1\n")), Error);
  CHECK_THROWS_AS(train_config_from(parse("lr = fast\n")), Error);
  CHECK_THROWS_AS(train_config_from(parse("patch = 4\n")), Error);
  try {
    train_config_from(parse("bogus = 1\n"));
  } catch (const Error& e) {
    CHECK(e.error_class() == ErrorClass::Usage);
  }
}

TEST_CASE("effective config dump re-parses to the same configuration") {
  TrainConfig cfg;
  cfg.lr = 0.1 + 0.2;
  cfg.tau = 1.0 / 3.0;
  cfg.seed = 123456789012345ull;
  cfg.optimizer = Optimizer::Sgd;
  cfg.product = ConvProduct::Alternate;
  cfg.dims = {3, 2, 1};
  const std::string text = dump_key_values(to_key_values(cfg));
  const auto back = train_config_from(parse(text));
  CHECK(back == cfg);
  CHECK(dump_key_values(to_key_values(back)) == text);
  CHECK(to_key_values(cfg).size() == train_config_keys().size());
  CHECK(train_config_from(parse(dump_key_values(to_key_values(TrainConfig{})))) == TrainConfig{});
}

TEST_CASE("matrix text") {
  const auto ms = matrices("2 0\n0 2\n\n3 0\n0 3\n");
  REQUIRE(ms.size() == 2);
  CHECK(dist_log_euclidean(ms[0], ms[1]) == doctest::Approx(0.573).epsilon(0.002));
  const auto c = matrices("2 1+0.5j\n1-0.5j 3\n");
  REQUIRE(c.size() == 1);
  CHECK(c[0].mat().im(0, 1) == 0.5);
  CHECK(c[0].mat().im(1, 0) == -0.5);
  const auto e = matrices("1 -2e-1j\n2e-1j 1\n");
  CHECK(e[0].mat().im(0, 1) == -0.2);
  CHECK_THROWS_AS(matrices("1 2\n3 4\n"), Error);
  CHECK_THROWS_AS(matrices("1 x\n0 1\n"), Error);
  CHECK_THROWS_AS(matrices("1 0\n0\n"), Error);
}

TEST_CASE("bench_fastpath") {
  CHECK_THROWS_AS(bench_fastpath(0), Error);
  CHECK_THROWS_AS(bench_fastpath(99), Error);
  const auto r = bench_fastpath(128, 3, 1.0, 100.0, 2, 1);
  CHECK(r.count == 128);
  CHECK(r.max_deviation() < 1e-3);
  CHECK(r.exact_total() > 0.0);
  CHECK(r.fast_total() > 0.0);
  CHECK(bench_json(r).find("speedup") != std::string::npos);
}
