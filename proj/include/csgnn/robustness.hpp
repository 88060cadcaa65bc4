#ifndef CSGNN_ROBUSTNESS_HPP
#define CSGNN_ROBUSTNESS_HPP

#include "csgnn/training.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace csgnn {

enum class AttackKind { RandomEdges, FeatureNoise, Both };

std::string to_string(AttackKind k);
AttackKind parse_attack_kind(const std::string& s);

struct AttackSpec {
  AttackKind kind = AttackKind::RandomEdges;
  double edge_ratio = 0.0;  ///< fraction of the original undirected edge count to add
  double feat_eps = 0.0;    ///< Frobenius budget of the feature change
  std::uint64_t seed = 0;

  void validate() const;
};

/// Number of undirected edges (i < j with A_ij != 0).
Index undirected_edge_count(const Matrix& adjacency);

/**
 * Adds floor(edge_ratio * m) distinct undirected non-edges chosen uniformly
 * (seeded by spec.seed). Never removes edges or adds self loops. Throws when
 * there are not enough non-edges.
 */
Graph random_edge_attack(const Graph& g, const AttackSpec& spec);

/// Adds a Gaussian direction scaled to Frobenius norm feat_eps (1 - 1e-9).
Graph feature_noise_attack(const Graph& g, const AttackSpec& spec, Rng& rng);

/// Applies the attack described by spec.kind; feature noise draws from a generator seeded with spec.seed.
Graph apply_attack(const Graph& g, const AttackSpec& spec);

/// Two-layer GCN on A^ = D~^{-1/2} (A + I) D~^{-1/2}: A^ relu(A^ F W1) W2.
struct GcnParams {
  Matrix w1;  ///< c_in x hidden
  Matrix w2;  ///< hidden x c_out
};

Matrix normalized_adjacency(const Matrix& adjacency);

struct GcnTrace {
  Matrix a_hat;
  Matrix dropped_input;  ///< dropout(F)
  Matrix input_mask;
  Matrix pre;            ///< A^ dropout(F) W1
  Matrix hidden;         ///< dropout(relu(pre))
  Matrix hidden_mask;
};

Matrix gcn_baseline_forward(const Matrix& features, const Matrix& adjacency, const GcnParams& w);
/// Forward with dropout (p at the input and the hidden layer), recording what backward needs.
Matrix gcn_forward_train(const Matrix& features, const Matrix& adjacency, const GcnParams& w, double dropout_p,
                         Rng& rng, GcnTrace& trace);
/// Gradients {dW1, dW2} for the given dL/dlogits.
GcnParams gcn_backward(const GcnTrace& trace, const GcnParams& w, const Matrix& logit_grad);

struct GcnConfig {
  int epochs = 200;
  Index hidden = 16;
  double lr = 1e-2;
  double weight_decay = 5e-4;
  double dropout_p = 0.5;
  int patience = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GcnResult {
  GcnParams params;
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
};

/// Adam with decoupled weight decay, best-validation selection, same early stopping rule as train().
GcnResult train_gcn(const Graph& g, const GcnConfig& cfg);

struct ModelSpec {
  enum class Kind { Csgnn, Gcn };
  std::string name;
  Kind kind = Kind::Csgnn;
  TrainConfig csgnn;
  GcnConfig gcn;
};

struct RobustnessRow {
  std::string model;
  AttackKind attack_kind = AttackKind::RandomEdges;
  std::string budget;
  int seed_count = 0;
  double mean_acc = 0.0;
  double std_acc = 0.0;          ///< population standard deviation over seeds
  std::vector<double> accuracies;
};

/**
 * For every (spec, model) and seed s in 0..n_seeds-1: attack the clean graph
 * with seed spec.seed + s, train on the attacked graph with seed cfg.seed + s
 * (poisoning) and record the best-validation model's test accuracy.
 */
std::vector<RobustnessRow> evaluate_robustness(const Graph& clean, const std::vector<AttackSpec>& specs,
                                               const std::vector<ModelSpec>& models, int n_seeds = 10);

/// CSV with columns model,attack_kind,budget,seed_count,mean_acc,std_acc.
void write_robustness_csv(std::ostream& os, const std::vector<RobustnessRow>& rows);

}  // namespace csgnn

#endif  // CSGNN_ROBUSTNESS_HPP
