#include "csgnn/config.hpp"

#include "csgnn/graph_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace csgnn {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::pair<std::string, std::string> split_assignment(const std::string& text, const std::string& where) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + text + "'");
  std::string key = trim(text.substr(0, eq)), value = trim(text.substr(eq + 1));
  if (key.empty()) throw ConfigError(where + ": empty key");
  return {std::move(key), std::move(value)};
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& origin) {
  KeyValueConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto [k, v] = split_assignment(line, origin + ":" + std::to_string(line_no));
    cfg.values_[k] = v;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config " + file.string());
  return parse(in, file.string());
}

void KeyValueConfig::set(const std::string& assignment) {
  auto [k, v] = split_assignment(assignment, "--set");
  values_[k] = v;
}

const std::string* KeyValueConfig::lookup(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = lookup(key);
  return v ? *v : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + *v + "'");
  }
  return out;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + *v + "'");
  }
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes") return true;
  if (*v == "0" || *v == "false" || *v == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) out.push_back(k);
  }
  return out;
}

void KeyValueConfig::require_all_used() const {
  const auto unused = unused_keys();
  if (unused.empty()) return;
  std::string msg = "unknown config key(s):";
  for (const auto& k : unused) msg += " " + k;
  throw ConfigError(msg);
}

TrainConfig train_config_from(const KeyValueConfig& kv, const TrainConfig& d) {
  TrainConfig c = d;
  c.epochs = static_cast<int>(kv.get_int("epochs", d.epochs));
  c.hidden = kv.get_int("hidden", d.hidden);
  c.layers = kv.get_int("layers", d.layers);
  c.h = kv.get_double("h", d.h);
  c.alpha = kv.get_double("alpha", d.alpha);
  c.lambda = kv.get_double("lambda", d.lambda);
  c.lr_embedding = kv.get_double("lr_embedding", d.lr_embedding);
  c.lr_node = kv.get_double("lr_node", d.lr_node);
  c.lr_adjacency = kv.get_double("lr_adjacency", d.lr_adjacency);
  c.wd_embedding = kv.get_double("wd_embedding", d.wd_embedding);
  c.wd_node = kv.get_double("wd_node", d.wd_node);
  c.wd_adjacency = kv.get_double("wd_adjacency", d.wd_adjacency);
  c.dropout_p = kv.get_double("dropout_p", d.dropout_p);
  c.share_weights = kv.get_bool("share_weights", d.share_weights);
  c.train_alpha = kv.get_bool("train_alpha", d.train_alpha);
  const std::string param = kv.get_string(
      "parameterization", d.parameterization == Parameterization::LearnW_IdentityK ? "learn_w" : "learn_k");
  if (param == "learn_w") {
    c.parameterization = Parameterization::LearnW_IdentityK;
  } else if (param == "learn_k") {
    c.parameterization = Parameterization::IdentityW_LearnK;
  } else {
    throw ConfigError("config key 'parameterization': expected learn_k or learn_w, got '" + param + "'");
  }
  c.leaky_slope = kv.get_double("leaky_slope", d.leaky_slope);
  const std::string rule = kv.get_string("k1_rule", d.k1_rule == K1Rule::Standard ? "standard" : "slope_corrected");
  if (rule == "standard") {
    c.k1_rule = K1Rule::Standard;
  } else if (rule == "slope_corrected") {
    c.k1_rule = K1Rule::SlopeCorrected;
  } else {
    throw ConfigError("config key 'k1_rule': expected standard or slope_corrected, got '" + rule + "'");
  }
  c.patience = static_cast<int>(kv.get_int("patience", d.patience));
  const long long seed = kv.get_int("seed", static_cast<long long>(d.seed));
  if (seed < 0) throw ConfigError("config key 'seed' must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void write_train_config(std::ostream& os, const TrainConfig& c) {
  auto num = [](double x) { return format_double(x); };
  os << "epochs = " << c.epochs << '\n'
     << "hidden = " << c.hidden << '\n'
     << "layers = " << c.layers << '\n'
     << "h = " << num(c.h) << '\n'
     << "alpha = " << num(c.alpha) << '\n'
     << "lambda = " << num(c.lambda) << '\n'
     << "lr_embedding = " << num(c.lr_embedding) << '\n'
     << "lr_node = " << num(c.lr_node) << '\n'
     << "lr_adjacency = " << num(c.lr_adjacency) << '\n'
     << "wd_embedding = " << num(c.wd_embedding) << '\n'
     << "wd_node = " << num(c.wd_node) << '\n'
     << "wd_adjacency = " << num(c.wd_adjacency) << '\n'
     << "dropout_p = " << num(c.dropout_p) << '\n'
     << "share_weights = " << (c.share_weights ? "true" : "false") << '\n'
     << "train_alpha = " << (c.train_alpha ? "true" : "false") << '\n'
     << "parameterization = "
     << (c.parameterization == Parameterization::LearnW_IdentityK ? "learn_w" : "learn_k") << '\n'
     << "leaky_slope = " << num(c.leaky_slope) << '\n'
     << "k1_rule = " << (c.k1_rule == K1Rule::Standard ? "standard" : "slope_corrected") << '\n'
     << "patience = " << c.patience << '\n'
     << "seed = " << c.seed << '\n';
}

}  // namespace csgnn
