#ifndef CSGNN_CONFIG_HPP
#define CSGNN_CONFIG_HPP

#include "csgnn/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace csgnn {

/// Malformed config text, unknown key or bad value.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/**
 * Plain `key = value` text, one pair per line, `#` starts a comment. Later
 * assignments override earlier ones. Reads are tracked so callers can reject
 * keys nobody consumed.
 */
class KeyValueConfig {
public:
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::filesystem::path& file);

  /// Applies one `key=value` override.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Keys present but never read.
  std::vector<std::string> unused_keys() const;
  /// Throws ConfigError listing unused keys, if any.
  void require_all_used() const;

  const std::map<std::string, std::string>& values() const { return values_; }

private:
  const std::string* lookup(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

/**
 * TrainConfig keys: epochs, hidden, layers, h, alpha, lambda, lr_embedding,
 * lr_node, lr_adjacency, wd_embedding, wd_node, wd_adjacency, dropout_p,
 * share_weights, train_alpha, parameterization (learn_k | learn_w),
 * leaky_slope, k1_rule (standard | slope_corrected), patience, seed.
 */
TrainConfig train_config_from(const KeyValueConfig& kv, const TrainConfig& defaults = {});

/// Writes every TrainConfig key, loadable by train_config_from.
void write_train_config(std::ostream& os, const TrainConfig& cfg);

}  // namespace csgnn

#endif  // CSGNN_CONFIG_HPP
