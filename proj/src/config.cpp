#include "hpdcnn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hpdcnn/errors.hpp"

namespace hpdcnn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::BadConfig, what); }

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key + ": not a number '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key + ": not a count '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(key + ": expected true or false");
}

std::string from_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

KeyValues parse_key_values(std::istream& is) {
  KeyValues kv;
  std::string line;
  std::size_t no = 0;
  while (std::getline(is, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad("line " + std::to_string(no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) bad("line " + std::to_string(no) + ": empty key");
    if (!kv.emplace(key, value).second) bad("line " + std::to_string(no) + ": repeated key " + key);
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  return parse_key_values(is);
}

std::string dump_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

KeyValues merge(KeyValues base, const KeyValues& overrides) {
  for (const auto& [k, v] : overrides) base[k] = v;
  return base;
}

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys{
      "adam_eps", "batch", "beta1",   "beta2", "dims",      "epochs",   "lr",  "optimizer",
      "patch",    "path",  "product", "ratio", "seed",      "tau",      "zero_imag"};
  return keys;
}

TrainConfig train_config_from(const KeyValues& kv) {
  TrainConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "lr") c.lr = to_double(k, v);
    else if (k == "epochs") c.epochs = to_uint(k, v);
    else if (k == "batch") c.batch = to_uint(k, v);
    else if (k == "ratio") c.ratio = to_double(k, v);
    else if (k == "patch") c.patch = to_uint(k, v);
    else if (k == "tau") c.tau = to_double(k, v);
    else if (k == "seed") c.seed = to_uint(k, v);
    else if (k == "path") c.path = parse_path(v);
    else if (k == "optimizer") c.optimizer = parse_optimizer(v);
    else if (k == "beta1") c.beta1 = to_double(k, v);
    else if (k == "beta2") c.beta2 = to_double(k, v);
    else if (k == "adam_eps") c.adam_eps = to_double(k, v);
    else if (k == "product") c.product = parse_conv_product(v);
    else if (k == "zero_imag") c.zero_imag = to_bool(k, v);
    else if (k == "dims") {
      c.dims.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) c.dims.push_back(to_uint(k, trim(item)));
    } else {
      bad("unknown key '" + k + "'");
    }
  }
  c.validate();
  return c;
}

KeyValues to_key_values(const TrainConfig& c) {
  std::string dims;
  for (std::size_t i = 0; i < c.dims.size(); ++i) dims += (i ? "," : "") + std::to_string(c.dims[i]);
  return {
      {"lr", from_double(c.lr)},
      {"epochs", std::to_string(c.epochs)},
      {"batch", std::to_string(c.batch)},
      {"ratio", from_double(c.ratio)},
      {"patch", std::to_string(c.patch)},
      {"tau", from_double(c.tau)},
      {"seed", std::to_string(c.seed)},
      {"path", std::string(to_string(c.path))},
      {"optimizer", std::string(to_string(c.optimizer))},
      {"beta1", from_double(c.beta1)},
      {"beta2", from_double(c.beta2)},
      {"adam_eps", from_double(c.adam_eps)},
      {"dims", dims},
      {"product", std::string(to_string(c.product))},
      {"zero_imag", c.zero_imag ? "true" : "false"},
  };
}

namespace {

std::complex<double> parse_entry(const std::string& tok) {
  auto number = [&](const std::string& s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw Error(ErrorCode::BadSpec, "bad matrix entry '" + tok + "'");
    }
    return v;
  };
  if (tok.empty() || (tok.back() != 'j' && tok.back() != 'i')) return {number(tok), 0.0};
  const std::string body = tok.substr(0, tok.size() - 1);
  // split at the last sign that is not the leading one or part of an exponent
  for (std::size_t k = body.size(); k-- > 1;) {
    if ((body[k] == '+' || body[k] == '-') && body[k - 1] != 'e' && body[k - 1] != 'E') {
      std::string im = body.substr(k);
      if (im[0] == '+') im.erase(0, 1);
      if (im.empty() || im == "-") im += "1";
      return {number(body.substr(0, k)), number(im)};
    }
  }
  std::string im = body[0] == '+' ? body.substr(1) : body;
  if (im.empty() || im == "-") im += "1";
  return {0.0, number(im)};
}

HpdMatrix finish(const std::vector<std::vector<std::complex<double>>>& rows) {
  const std::size_t n = rows.size();
  ComplexMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) throw Error(ErrorCode::BadDims, "matrix rows of unequal length");
    for (std::size_t j = 0; j < n; ++j) {
      m.re(i, j) = rows[i][j].real();
      m.im(i, j) = rows[i][j].imag();
    }
  }
  if (!satisfies_hpd_invariants(m)) {
    throw Error(ErrorCode::BadSpec, "matrix is not Hermitian positive definite");
  }
  return make_hermitian(m);
}

}  // namespace

std::vector<HpdMatrix> parse_matrices(std::istream& is) {
  std::vector<HpdMatrix> out;
  std::vector<std::vector<std::complex<double>>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::complex<double>> row;
    std::string tok;
    while (ls >> tok) row.push_back(parse_entry(tok));
    if (row.empty()) {
      if (!rows.empty()) out.push_back(finish(rows));
      rows.clear();
    } else {
      rows.push_back(std::move(row));
    }
  }
  if (!rows.empty()) out.push_back(finish(rows));
  return out;
}

std::vector<HpdMatrix> load_matrices(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  return parse_matrices(is);
}

}  // namespace hpdcnn
