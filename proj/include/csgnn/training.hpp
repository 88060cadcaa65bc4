#ifndef CSGNN_TRAINING_HPP
#define CSGNN_TRAINING_HPP

#include "csgnn/network.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace csgnn {

/// Mean over masked nodes of -log softmax(logits)[label], max-subtracted.
double masked_cross_entropy(const Matrix& logits, const IntVector& labels, const Mask& mask);

/// d(masked_cross_entropy)/d(logits).
Matrix masked_cross_entropy_grad(const Matrix& logits, const IntVector& labels, const Mask& mask);

/// Fraction of masked nodes whose argmax logit equals the label (first maximum wins ties).
double masked_accuracy(const Matrix& logits, const IntVector& labels, const Mask& mask);

struct LayerGradients {
  Matrix W;
  Matrix K;
  EquivariantCoeffs<double>::Coeffs k = EquivariantCoeffs<double>::Coeffs::Zero();
  double alpha = 0.0;
};

/// Same layout as NetworkParams. With share_weights, layer 0 holds the summed gradient of every layer.
struct Gradients {
  Matrix encoder;
  std::vector<LayerGradients> layers;
  Matrix classifier;
  Vector bias;

  static Gradients zeros_like(const NetworkParams& p);
};

/**
 * Reverse-mode pass through a recorded forward. `logit_grad` is dL/dlogits.
 * Gradients are w.r.t. W and K (as stored, K unsymmetrised), k2..k9 and alpha
 * (through the derived k1, with d|k|/dk = 0 at k = 0), encoder, classifier
 * and bias. Step sizes are treated as constants.
 */
Gradients backward(const ForwardTrace& trace, const NetworkParams& params, const Matrix& logit_grad);

enum class ParamGroup { Embedding, Node, Adjacency };

/// Which tensors are updated by the optimiser.
struct TrainableSet {
  bool alpha = false;
};

/// Flat view of one trainable tensor and its gradient.
struct ParamView {
  std::string name;
  ParamGroup group;
  double* value;
  const double* grad;
  Index size;
};

/**
 * Trainable tensors in a fixed order: encoder, per-layer W (LearnW) or K
 * (LearnK), k2..k9, alpha when enabled, classifier, bias. With share_weights
 * only layer 0 is listed.
 */
std::vector<ParamView> parameter_views(NetworkParams& params, const Gradients& grads,
                                       const TrainableSet& trainable);

/// Copies layer 0's shared tensors into every other layer.
void sync_shared_layers(NetworkParams& params);

/// Worst per-tensor relative error of backward() against central differences.
struct GradientCheck {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  Index entries_checked = 0;
};

/**
 * Central differences (step `fd_step`) of the masked cross-entropy with
 * respect to every entry of every trainable tensor (see parameter_views;
 * alpha is included when every layer has alpha < -fd_step). The loss is
 * evaluated in long double, replaying the dropout masks drawn from
 * `dropout_seed`. The error of a tensor is
 * max|fd - analytic| / max(max|fd|, max|analytic|, 1e-8).
 */
GradientCheck finite_difference_check(const Matrix& features, const Matrix& adjacency, const IntVector& labels,
                                      const Mask& mask, const NetworkParams& params, std::uint64_t dropout_seed,
                                      double fd_step = 1e-6);

enum class K1Rule { Standard, SlopeCorrected };

struct TrainConfig {
  int epochs = 200;
  Index hidden = 16;
  Index layers = 2;
  double h = 0.5;
  double alpha = -0.5;
  double lambda = 1.0;  ///< K = lambda I in LearnW mode
  double lr_embedding = 5e-3, lr_node = 5e-3, lr_adjacency = 1e-3;
  double wd_embedding = 5e-4, wd_node = 5e-4, wd_adjacency = 5e-4;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double dropout_p = 0.5;
  bool share_weights = false;
  bool train_alpha = false;
  Parameterization parameterization = Parameterization::IdentityW_LearnK;
  double leaky_slope = 0.1;
  K1Rule k1_rule = K1Rule::Standard;
  int patience = 50;
  std::uint64_t seed = 0;

  /// Range checks, including lr in [1e-5, 1e-2] and weight decay in [5e-8, 5e-2].
  void validate() const;
  double lr(ParamGroup g) const;
  double weight_decay(ParamGroup g) const;
};

struct AdamState {
  std::vector<Vector> m;
  std::vector<Vector> v;
  long t = 0;
};

/**
 * Bias-corrected Adam with decoupled weight decay per group, then: shared
 * layers re-synced, alpha projected to <= 0, and the step sizes re-clamped
 * along the adjacency trajectories of `graphs` (adjacency h needs none).
 * Throws if the contractive invariants fail afterwards.
 */
void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state, const TrainConfig& cfg,
               std::span<const Matrix> graphs);

/// Random initial parameters for the given sizes, steps clamped on `adjacency`.
NetworkParams init_network(Index c_in, Index c_out, const TrainConfig& cfg, const Matrix& adjacency, Rng& rng);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainResult {
  NetworkParams params;  ///< best validation accuracy seen (initial params if epochs = 0)
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  bool diverged = false;
  std::string divergence_message;
};

/// Full-batch training on `g` (the only graph the model sees). Deterministic given cfg.seed.
TrainResult train(const Graph& g, const TrainConfig& cfg);

/// CSV with columns epoch,train_loss,val_acc,test_acc.
void write_history_csv(std::ostream& os, const std::vector<EpochMetrics>& history);

}  // namespace csgnn

#endif  // CSGNN_TRAINING_HPP
