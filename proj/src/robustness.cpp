#include "csgnn/robustness.hpp"

#include "csgnn/graph_io.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

namespace csgnn {

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::RandomEdges: return "random_edges";
    case AttackKind::FeatureNoise: return "feature_noise";
    case AttackKind::Both: return "both";
  }
  return "?";
}

AttackKind parse_attack_kind(const std::string& s) {
  if (s == "random_edges") return AttackKind::RandomEdges;
  if (s == "feature_noise") return AttackKind::FeatureNoise;
  if (s == "both") return AttackKind::Both;
  throw std::invalid_argument("unknown attack kind '" + s + "'");
}

void AttackSpec::validate() const {
  if (!(edge_ratio >= 0.0) || !(feat_eps >= 0.0)) {
    throw std::invalid_argument("AttackSpec: ratios and budgets must be nonnegative");
  }
}

Index undirected_edge_count(const Matrix& adjacency) {
  Index m = 0;
  for (Index j = 0; j < adjacency.cols(); ++j)
    for (Index i = 0; i < j; ++i) m += adjacency(i, j) != 0.0;
  return m;
}

Graph random_edge_attack(const Graph& g, const AttackSpec& spec) {
  spec.validate();
  g.validate();
  const Matrix& a = g.adjacency;
  if (!is_symmetric(a) || !((a.array() == 0.0) || (a.array() == 1.0)).all()) {
    throw std::invalid_argument("random_edge_attack: graph must be binary and symmetric");
  }
  const Index n = a.rows();
  const auto budget = static_cast<Index>(std::floor(spec.edge_ratio * static_cast<double>(undirected_edge_count(a))));
  std::vector<std::pair<Index, Index>> free;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (a(i, j) == 0.0) free.emplace_back(i, j);
  if (budget > static_cast<Index>(free.size())) {
    throw std::invalid_argument("random_edge_attack: not enough non-edges for the requested budget");
  }
  Rng rng(spec.seed);
  Graph out = g;
  for (Index k = 0; k < budget; ++k) {  // partial Fisher-Yates
    const auto remaining = static_cast<std::uint64_t>(free.size()) - static_cast<std::uint64_t>(k);
    const auto pick = static_cast<std::size_t>(k) + static_cast<std::size_t>(rng() % remaining);
    std::swap(free[static_cast<std::size_t>(k)], free[pick]);
    const auto [i, j] = free[static_cast<std::size_t>(k)];
    out.adjacency(i, j) = out.adjacency(j, i) = 1.0;
  }
  return out;
}

Graph feature_noise_attack(const Graph& g, const AttackSpec& spec, Rng& rng) {
  spec.validate();
  Graph out = g;
  if (spec.feat_eps == 0.0 || g.features.size() == 0) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix dir(g.features.rows(), g.features.cols());
  do {
    for (Index j = 0; j < dir.cols(); ++j)
      for (Index i = 0; i < dir.rows(); ++i) dir(i, j) = normal(rng);
  } while (dir.norm() == 0.0);
  out.features += (spec.feat_eps * (1.0 - 1e-9) / dir.norm()) * dir;
  return out;
}

Graph apply_attack(const Graph& g, const AttackSpec& spec) {
  switch (spec.kind) {
    case AttackKind::RandomEdges: return random_edge_attack(g, spec);
    case AttackKind::FeatureNoise: {
      Rng rng(spec.seed);
      return feature_noise_attack(g, spec, rng);
    }
    case AttackKind::Both: {
      Rng rng(spec.seed);
      return feature_noise_attack(random_edge_attack(g, spec), spec, rng);
    }
  }
  return g;
}

Matrix normalized_adjacency(const Matrix& adjacency) {
  detail::require_square(adjacency, "normalized_adjacency");
  const Index n = adjacency.rows();
  const Matrix a_tilde = adjacency + Matrix::Identity(n, n);
  const Vector d = a_tilde.rowwise().sum().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * a_tilde * d.asDiagonal();
}

namespace {

void check_gcn_shapes(const Matrix& features, const Matrix& adjacency, const GcnParams& w) {
  detail::require_square(adjacency, "gcn");
  if (features.rows() != adjacency.rows()) throw ShapeError("gcn: features must have n rows");
  if (features.cols() != w.w1.rows() || w.w1.cols() != w.w2.rows()) throw ShapeError("gcn: weight shapes");
}

Matrix keep_mask(Index rows, Index cols, double p, Rng& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return m;
}

}  // namespace

Matrix gcn_baseline_forward(const Matrix& features, const Matrix& adjacency, const GcnParams& w) {
  check_gcn_shapes(features, adjacency, w);
  const Matrix a_hat = normalized_adjacency(adjacency);
  return a_hat * (a_hat * features * w.w1).cwiseMax(0.0) * w.w2;
}

Matrix gcn_forward_train(const Matrix& features, const Matrix& adjacency, const GcnParams& w, double dropout_p,
                         Rng& rng, GcnTrace& tr) {
  check_gcn_shapes(features, adjacency, w);
  tr.a_hat = normalized_adjacency(adjacency);
  tr.input_mask = dropout_p > 0.0 ? keep_mask(features.rows(), features.cols(), dropout_p, rng) : Matrix();
  tr.dropped_input = dropout_p > 0.0 ? Matrix(features.cwiseProduct(tr.input_mask)) : features;
  tr.pre = tr.a_hat * tr.dropped_input * w.w1;
  const Matrix relu = tr.pre.cwiseMax(0.0);
  tr.hidden_mask = dropout_p > 0.0 ? keep_mask(relu.rows(), relu.cols(), dropout_p, rng) : Matrix();
  tr.hidden = dropout_p > 0.0 ? Matrix(relu.cwiseProduct(tr.hidden_mask)) : relu;
  return tr.a_hat * tr.hidden * w.w2;
}

GcnParams gcn_backward(const GcnTrace& tr, const GcnParams& w, const Matrix& logit_grad) {
  GcnParams g;
  const Matrix ah_t_g = tr.a_hat.transpose() * logit_grad;
  g.w2 = tr.hidden.transpose() * ah_t_g;
  Matrix g_hidden = ah_t_g * w.w2.transpose();
  if (tr.hidden_mask.size() > 0) g_hidden = g_hidden.cwiseProduct(tr.hidden_mask);
  const Matrix g_pre = (tr.pre.array() > 0.0).select(g_hidden, 0.0);
  g.w1 = (tr.a_hat * tr.dropped_input).transpose() * g_pre;
  return g;
}

void GcnConfig::validate() const {
  if (epochs < 0 || hidden < 1 || patience < 1) throw std::invalid_argument("GcnConfig: bad sizes");
  if (!(lr > 0.0) || !(weight_decay >= 0.0)) throw std::invalid_argument("GcnConfig: bad optimiser settings");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("GcnConfig: dropout_p must lie in [0, 1)");
}

GcnResult train_gcn(const Graph& g, const GcnConfig& cfg) {
  g.validate();
  cfg.validate();
  Rng rng(cfg.seed);
  auto glorot = [&rng](Index rows, Index cols) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = limit * u(rng);
    return m;
  };
  GcnResult result;
  GcnParams w{glorot(g.num_features(), cfg.hidden), glorot(cfg.hidden, g.num_classes())};
  result.params = w;
  std::array<Matrix, 2> m{Matrix::Zero(w.w1.rows(), w.w1.cols()), Matrix::Zero(w.w2.rows(), w.w2.cols())};
  std::array<Matrix, 2> v = m;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double best_val = -1.0;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    GcnTrace tr;
    const Matrix logits = gcn_forward_train(g.features, g.adjacency, w, cfg.dropout_p, rng, tr);
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = masked_cross_entropy(logits, g.labels, g.train_mask);
    const GcnParams grad = gcn_backward(tr, w, masked_cross_entropy_grad(logits, g.labels, g.train_mask));
    const double bc1 = 1.0 - std::pow(b1, epoch), bc2 = 1.0 - std::pow(b2, epoch);
    Matrix* params[2] = {&w.w1, &w.w2};
    const Matrix* grads[2] = {&grad.w1, &grad.w2};
    for (int i = 0; i < 2; ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * *grads[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grads[i]->cwiseAbs2();
      *params[i] -= cfg.lr * cfg.weight_decay * *params[i];
      params[i]->array() -= cfg.lr * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + eps);
    }
    const Matrix eval = gcn_baseline_forward(g.features, g.adjacency, w);
    em.train_acc = masked_accuracy(eval, g.labels, g.train_mask);
    em.val_loss = g.val_mask.any() ? masked_cross_entropy(eval, g.labels, g.val_mask) : 0.0;
    em.val_acc = masked_accuracy(eval, g.labels, g.val_mask);
    em.test_acc = masked_accuracy(eval, g.labels, g.test_mask);
    result.history.push_back(em);
    if (em.val_acc > best_val) {
      best_val = em.val_acc;
      result.params = w;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

std::vector<RobustnessRow> evaluate_robustness(const Graph& clean, const std::vector<AttackSpec>& specs,
                                               const std::vector<ModelSpec>& models, int n_seeds) {
  if (n_seeds < 1) throw std::invalid_argument("evaluate_robustness: n_seeds must be >= 1");
  clean.validate();
  if (!clean.train_mask.any() || !clean.test_mask.any()) {
    throw std::invalid_argument("evaluate_robustness: clean graph needs train and test masks");
  }
  std::vector<RobustnessRow> rows;
  for (const auto& spec : specs) {
    spec.validate();
    std::vector<Graph> attacked;
    for (int s = 0; s < n_seeds; ++s) {
      AttackSpec seeded = spec;
      seeded.seed = spec.seed + static_cast<std::uint64_t>(s);
      attacked.push_back(apply_attack(clean, seeded));
    }
    for (const auto& model : models) {
      RobustnessRow row;
      row.model = model.name;
      row.attack_kind = spec.kind;
      switch (spec.kind) {
        case AttackKind::RandomEdges: row.budget = format_double(spec.edge_ratio); break;
        case AttackKind::FeatureNoise: row.budget = format_double(spec.feat_eps); break;
        case AttackKind::Both:
          row.budget = format_double(spec.edge_ratio) + ";" + format_double(spec.feat_eps);
          break;
      }
      row.seed_count = n_seeds;
      for (int s = 0; s < n_seeds; ++s) {
        const Graph& g = attacked[static_cast<std::size_t>(s)];
        double acc = 0.0;
        if (model.kind == ModelSpec::Kind::Csgnn) {
          TrainConfig cfg = model.csgnn;
          cfg.seed += static_cast<std::uint64_t>(s);
          const TrainResult r = train(g, cfg);
          acc = masked_accuracy(forward(g, r.params).logits, g.labels, g.test_mask);
        } else {
          GcnConfig cfg = model.gcn;
          cfg.seed += static_cast<std::uint64_t>(s);
          const GcnResult r = train_gcn(g, cfg);
          acc = masked_accuracy(gcn_baseline_forward(g.features, g.adjacency, r.params), g.labels, g.test_mask);
        }
        row.accuracies.push_back(acc);
      }
      double mean = 0.0;
      for (double a : row.accuracies) mean += a;
      mean /= n_seeds;
      double var = 0.0;
      for (double a : row.accuracies) var += (a - mean) * (a - mean);
      row.mean_acc = mean;
      row.std_acc = std::sqrt(var / n_seeds);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_robustness_csv(std::ostream& os, const std::vector<RobustnessRow>& rows) {
  os << "model,attack_kind,budget,seed_count,mean_acc,std_acc\n";
  for (const auto& r : rows) {
    os << r.model << ',' << to_string(r.attack_kind) << ',' << r.budget << ',' << r.seed_count << ','
       << format_double(r.mean_acc) << ',' << format_double(r.std_acc) << '\n';
  }
}

}  // namespace csgnn
