#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hpdcnn/linalg.hpp"
#include "hpdcnn/train.hpp"

namespace hpdcnn {

/// Flat configuration: one "key = value" per line, '#' starts a comment.
/// Keys are kept sorted so a dump is canonical.
using KeyValues = std::map<std::string, std::string>;

/// Throws BadConfig on malformed lines or repeated keys.
KeyValues parse_key_values(std::istream& is);
KeyValues load_key_values(const std::filesystem::path& path);
std::string dump_key_values(const KeyValues& kv);

/// Later entries win.
KeyValues merge(KeyValues base, const KeyValues& overrides);

/// Keys: lr, epochs, batch, ratio, patch, tau, seed, path, optimizer, beta1,
/// beta2, adam_eps, dims (comma separated), product, zero_imag. Missing keys
/// keep their defaults; unknown keys throw BadConfig.
TrainConfig train_config_from(const KeyValues& kv);
/// Every key, with doubles printed so they parse back exactly.
KeyValues to_key_values(const TrainConfig& cfg);
const std::vector<std::string>& train_config_keys();

/// Text matrices separated by blank lines; one row per line, entries as
/// "a", "a+bj", "a-bj" or "bj". Each must be Hermitian positive definite.
std::vector<HpdMatrix> parse_matrices(std::istream& is);
std::vector<HpdMatrix> load_matrices(const std::filesystem::path& path);

}  // namespace hpdcnn
