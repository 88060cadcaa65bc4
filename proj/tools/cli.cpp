#include "cli.hpp"

#include "csgnn/checkpoint.hpp"
#include "csgnn/config.hpp"
#include "csgnn/graph_io.hpp"
#include "csgnn/robustness.hpp"
#include "csgnn/sbm.hpp"
#include "csgnn/verify.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

namespace csgnn::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string graph;
  std::string checkpoint;
};

KeyValueConfig load_config(const CommonOptions& o) {
  KeyValueConfig kv;
  if (!o.config.empty()) kv = KeyValueConfig::load(o.config);
  for (const auto& s : o.sets) kv.set(s);
  if (o.seed) kv.set("seed", std::to_string(*o.seed));
  return kv;
}

fs::path require_out(const CommonOptions& o) {
  if (o.out.empty()) throw UsageError("--out DIR is required");
  fs::create_directories(o.out);
  return o.out;
}

Graph require_graph(const CommonOptions& o) {
  if (o.graph.empty()) throw UsageError("--graph DIR is required");
  if (!fs::is_directory(o.graph)) throw UsageError("--graph: no such directory " + o.graph);
  return read_graph(o.graph);
}

std::ofstream open(const fs::path& file) {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  return os;
}

std::vector<double> parse_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError(key + ": bad number '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

int gen_sbm(const CommonOptions& o, std::ostream& out) {
  KeyValueConfig kv = load_config(o);
  SbmConfig s;
  s.n = kv.get_int("n", s.n);
  s.classes = static_cast<int>(kv.get_int("classes", s.classes));
  s.p_in = kv.get_double("p_in", s.p_in);
  s.p_out = kv.get_double("p_out", s.p_out);
  s.feat_dim = kv.get_int("feat_dim", s.feat_dim);
  s.signal = kv.get_double("signal", s.signal);
  s.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  kv.require_all_used();
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const fs::path dir = require_out(o);
  const Graph g = generate_sbm(s);
  write_graph(g, dir);
  out << "wrote " << g.num_nodes() << " nodes, " << undirected_edge_count(g.adjacency) << " edges to "
      << dir.string() << '\n';
  return kSuccess;
}

int train_cmd(const CommonOptions& o, std::ostream& out) {
  KeyValueConfig kv = load_config(o);
  const TrainConfig cfg = train_config_from(kv);
  kv.require_all_used();
  const Graph g = require_graph(o);
  const fs::path dir = require_out(o);
  const TrainResult r = train(g, cfg);
  {
    auto os = open(dir / "config.txt");
    write_train_config(os, cfg);
  }
  {
    auto os = open(dir / "history.csv");
    write_history_csv(os, r.history);
  }
  save_checkpoint(dir / "checkpoint.txt", r.params);
  const auto eval = forward(g, r.params);
  out << "best_epoch " << r.best_epoch << '\n'
      << "val_acc " << format_double(masked_accuracy(eval.logits, g.labels, g.val_mask)) << '\n'
      << "test_acc " << format_double(masked_accuracy(eval.logits, g.labels, g.test_mask)) << '\n';
  if (r.diverged) {
    out << "diverged " << r.divergence_message << '\n';
    return kRuntimeError;
  }
  return kSuccess;
}

int attack_sweep(const CommonOptions& o, std::ostream& out) {
  KeyValueConfig kv = load_config(o);
  const AttackKind kind = parse_attack_kind(kv.get_string("attack", "random_edges"));
  const std::vector<double> ratios = parse_list(kv.get_string("ratios", "0,1"), "ratios");
  const std::vector<double> epss = parse_list(kv.get_string("feat_eps", "0"), "feat_eps");
  const int n_seeds = static_cast<int>(kv.get_int("n_seeds", 10));
  const auto attack_seed = static_cast<std::uint64_t>(kv.get_int("attack_seed", 0));
  std::string models = kv.get_string("models", "csgnn,gcn");

  ModelSpec csgnn{"csgnn", ModelSpec::Kind::Csgnn, train_config_from(kv), {}};
  ModelSpec gcn{"gcn", ModelSpec::Kind::Gcn, {}, {}};
  GcnConfig& gc = gcn.gcn;
  gc.epochs = static_cast<int>(kv.get_int("gcn_epochs", gc.epochs));
  gc.hidden = kv.get_int("gcn_hidden", gc.hidden);
  gc.lr = kv.get_double("gcn_lr", gc.lr);
  gc.weight_decay = kv.get_double("gcn_weight_decay", gc.weight_decay);
  gc.dropout_p = kv.get_double("gcn_dropout_p", gc.dropout_p);
  gc.patience = static_cast<int>(kv.get_int("gcn_patience", gc.patience));
  gc.seed = csgnn.csgnn.seed;
  kv.require_all_used();
  if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");

  std::vector<ModelSpec> specs;
  std::stringstream ms(models);
  std::string name;
  while (std::getline(ms, name, ',')) {
    if (name == "csgnn") specs.push_back(csgnn);
    else if (name == "gcn") specs.push_back(gcn);
    else throw ConfigError("models: unknown model '" + name + "' (csgnn | gcn)");
  }

  std::vector<AttackSpec> attacks;
  auto add = [&](double ratio, double eps) {
    AttackSpec a;
    a.kind = kind;
    a.edge_ratio = ratio;
    a.feat_eps = eps;
    a.seed = attack_seed;
    try {
      a.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    attacks.push_back(a);
  };
  if (kind == AttackKind::RandomEdges) for (double r : ratios) add(r, 0.0);
  if (kind == AttackKind::FeatureNoise) for (double e : epss) add(0.0, e);
  if (kind == AttackKind::Both)
    for (double r : ratios)
      for (double e : epss) add(r, e);

  const Graph g = require_graph(o);
  const fs::path dir = require_out(o);
  const auto rows = evaluate_robustness(g, attacks, specs, n_seeds);
  auto os = open(dir / "robustness.csv");
  write_robustness_csv(os, rows);
  write_robustness_csv(out, rows);
  return kSuccess;
}

int verify_cmd(const CommonOptions& o, std::ostream& out) {
  KeyValueConfig kv = load_config(o);
  VerifyOptions v;
  v.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  v.leaky_slope = kv.get_double("leaky_slope", v.leaky_slope);
  const std::string rule = kv.get_string("k1_rule", "standard");
  if (rule == "standard") v.k1_rule = K1Rule::Standard;
  else if (rule == "slope_corrected") v.k1_rule = K1Rule::SlopeCorrected;
  else throw ConfigError("k1_rule: expected standard | slope_corrected");
  try {
    v.fault = parse_fault(kv.get_string("fault", "none"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  kv.require_all_used();

  std::ostringstream report;
  report << "verify seed=" << v.seed << " leaky_slope=" << format_double(v.leaky_slope) << " k1_rule=" << rule
         << " fault=" << to_string(v.fault) << '\n';
  const bool ok = write_verify_report(report, run_verification(v));
  out << report.str();
  if (!o.out.empty()) {
    auto os = open(require_out(o) / "verify.txt");
    os << report.str();
  }
  return ok ? kSuccess : kVerificationFailure;
}

int certify(const CommonOptions& o, std::ostream& out) {
  KeyValueConfig kv = load_config(o);
  const double eps_feat = kv.get_double("eps_feat", 0.0);
  const double eps_adj = kv.get_double("eps_adj", 0.0);
  const int samples = static_cast<int>(kv.get_int("lipschitz_samples", 20));
  const auto seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  kv.require_all_used();
  PerturbationBudget raw;
  try {
    raw = PerturbationBudget(eps_feat, eps_adj);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (o.checkpoint.empty()) throw UsageError("--checkpoint PATH is required");
  const Graph g = require_graph(o);
  const NetworkParams p = load_checkpoint(fs::path(o.checkpoint));
  if (g.num_features() != p.input_dim()) throw UsageError("checkpoint input width does not match the graph");

  const ForwardResult clean = forward(g, p);
  const auto& fs_ = clean.trace.feature_states;
  const auto& as_ = clean.trace.adjacency_states;
  Rng rng(seed);
  Eigen::JacobiSVD<Matrix> svd(p.encoder);
  const double enc_norm = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  const PerturbationBudget budget(enc_norm * raw.eps_feat, raw.eps_adj);

  out << "eps_feat " << format_double(raw.eps_feat) << " encoder_norm " << format_double(enc_norm)
      << " eps_feat_hidden " << format_double(budget.eps_feat) << '\n'
      << "eps_adj " << format_double(budget.eps_adj) << '\n'
      << "layer h_feature h_safe h_adjacency h_hat h_hat_margin lipschitz_lower lipschitz_upper\n";
  std::vector<double> hs, lips;
  for (Index l = 0; l < p.depth(); ++l) {
    const CoupledLayer& layer = p.layers[l];
    const double h_safe = feature_step_bound(as_[l], layer.feature).h_safe;
    const double h_hat = step_ceiling_or_inf(layer.adjacency.coeffs);
    const LipschitzDomain dom = budget.eps_adj > 0 ? LipschitzDomain::l1_ball(as_[l], budget.eps_adj)
                                                  : LipschitzDomain::hull({as_[l]});
    const LipschitzEstimate est =
        estimate_mixed_lipschitz(fs_[l], layer.feature, dom, samples, rng, layer.adjacency.activation);
    hs.push_back(layer.feature.h);
    lips.push_back(est.upper);
    out << l + 1 << ' ' << format_double(layer.feature.h) << ' ' << format_double(h_safe) << ' '
        << format_double(layer.adjacency.h) << ' ' << format_double(h_hat) << ' '
        << format_double(h_hat - layer.adjacency.h) << ' ' << format_double(est.lower) << ' '
        << format_double(est.upper) << '\n';
  }
  out << "bound " << format_double(expansivity_bound(hs, lips, budget)) << '\n';
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Coupled contractive graph neural network tools", "csgnn"};
  app.require_subcommand(1);
  CommonOptions o;
  auto common = [&o](CLI::App* sub, bool graph, bool checkpoint) {
    sub->add_option("--config", o.config, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", o.sets, "override, key=value (repeatable)");
    sub->add_option("--seed", o.seed, "random seed (overrides the seed key)");
    sub->add_option("--out", o.out, "output directory");
    if (graph) sub->add_option("--graph", o.graph, "graph directory");
    if (checkpoint) sub->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  };
  auto* gen = app.add_subcommand("gen-sbm", "write a stochastic block model graph");
  auto* tr = app.add_subcommand("train", "train on a graph, write checkpoint and history");
  auto* sweep = app.add_subcommand("attack-sweep", "poisoning attack sweep, CSV of mean/std accuracy");
  auto* ver = app.add_subcommand("verify", "run the property suites");
  auto* cert = app.add_subcommand("certify", "per-layer margins and output distance bound");
  common(gen, false, false);
  common(tr, true, false);
  common(sweep, true, false);
  common(ver, false, false);
  common(cert, true, true);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kUsageError;
  }

  try {
    if (gen->parsed()) return gen_sbm(o, out);
    if (tr->parsed()) return train_cmd(o, out);
    if (sweep->parsed()) return attack_sweep(o, out);
    if (ver->parsed()) return verify_cmd(o, out);
    return certify(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace csgnn::cli
