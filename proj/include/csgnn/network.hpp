#ifndef CSGNN_NETWORK_HPP
#define CSGNN_NETWORK_HPP

#include "csgnn/equivariant.hpp"
#include "csgnn/feature_dynamics.hpp"
#include "csgnn/graph.hpp"

#include <array>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace csgnn {

using Rng = std::mt19937_64;

/// One coupled layer: a feature step driven by A^(l-1), then an adjacency step.
struct CoupledLayer {
  LayerParams<double> feature;
  AdjacencyStepConfig<double> adjacency;
};

/**
 * Encoder (c_in x c), L coupled layers, linear classifier (c x c_out) with bias.
 *
 * With share_weights every layer carries the same W, K and coefficients; only
 * the step sizes may differ per layer. Training keeps the copies in sync.
 */
struct NetworkParams {
  Matrix encoder;
  std::vector<CoupledLayer> layers;
  Matrix classifier;
  Vector bias;
  double dropout_p = 0.0;
  bool share_weights = false;

  Index depth() const { return static_cast<Index>(layers.size()); }
  Index input_dim() const { return encoder.rows(); }
  Index hidden_dim() const { return encoder.cols(); }
  Index num_outputs() const { return classifier.cols(); }

  void validate() const;
};

/// Forward pass hit a non-finite value.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Mode { Train, Eval };

/**
 * States F^(0..L), A^(0..L) plus what backward needs: the (scaled) dropout
 * masks and the dropped-out inputs of each site.
 */
struct ForwardTrace {
  std::vector<Matrix> feature_states;
  std::vector<Matrix> adjacency_states;
  Matrix input_mask;                 ///< n x c_in, empty when dropout is off
  std::vector<Matrix> layer_masks;   ///< L masks of n x c
  Matrix output_mask;                ///< n x c
  Matrix dropped_input;              ///< dropout(X)
  std::vector<Matrix> layer_inputs;  ///< dropout(F^(l-1)), l = 1..L
  Matrix dropped_output;             ///< dropout(F^(L))
  bool adjacency_frozen = false;
};

struct ForwardOptions {
  Mode mode = Mode::Eval;
  /// Skip the adjacency steps, A^(l) = A^(0). Used to compare with a feature-only network.
  bool freeze_adjacency = false;
};

struct ForwardResult {
  Matrix logits;
  ForwardTrace trace;
};

/// Runs the network. `rng` is only drawn from in Train mode with dropout_p > 0.
ForwardResult forward(const Matrix& features, const Matrix& adjacency, const NetworkParams& params,
                      Rng& rng, ForwardOptions opts = {});
ForwardResult forward(const Graph& g, const NetworkParams& params, Mode mode, Rng& rng);
/// Eval-mode convenience overload.
ForwardResult forward(const Graph& g, const NetworkParams& params);

/// The coupled map alone, (F^(0), A^(0)) -> (F^(L), A^(L)), without encoder, dropout or classifier.
std::pair<Matrix, Matrix> coupled_map(const Matrix& f0, const Matrix& a0, const NetworkParams& params);

/// Adjacency trajectory A^(0..L); independent of the features.
std::vector<Matrix> adjacency_trajectory(const Matrix& a0, const NetworkParams& params);

/**
 * Sets every layer's step sizes to their contractive values along the
 * adjacency trajectory of each given graph:
 *   feature h   = min(h_cfg, h_safe(A^(l-1))) over all graphs,
 *   adjacency h = min(h_cfg, max_step_adjacency).
 * Layers are processed in order since A^(l) depends on the earlier steps.
 */
void clamp_steps(NetworkParams& params, double h_cfg, std::span<const Matrix> adjacencies);

/// m1 ||F - F*||_F + m2 ||vec(A) - vec(A*)||_1.
double weighted_distance(double m1, double m2, const Matrix& f, const Matrix& a, const Matrix& f_star,
                         const Matrix& a_star);

/// eps_feat + eps_adj (1 + sum_i lip_i h_i).
double expansivity_bound(std::span<const double> h, std::span<const double> lip,
                         const PerturbationBudget& budget);

/**
 * Set of adjacency matrices over which the mixed Lipschitz bound is taken:
 * the convex hull of `anchors`, or the l1 ball of radius `radius` around
 * anchors[0] when radius > 0.
 */
struct LipschitzDomain {
  std::vector<Matrix> anchors;
  double radius = 0.0;

  static LipschitzDomain hull(std::vector<Matrix> anchors);
  static LipschitzDomain l1_ball(Matrix center, double radius);

  void validate() const;
  /// Uniformly weighted random point of the domain.
  Matrix sample(Rng& rng) const;
};

struct LipschitzEstimate {
  double lower = 0.0;
  double upper = 0.0;
};

/// Frobenius operator norm bound of F -> G(A)F: sqrt(2 max_i (off-diagonal row_i + col_i sum of squares)).
double graph_gradient_norm_bound(const Matrix& a);

/**
 * Lipschitz constant of A -> X(F, A) (Frobenius out, vectorised l1 in) over
 * the domain. lower: sampled difference quotients with step 1e-4 along
 * segments inside the domain. upper: ||W|| ||K~|| dmax(FW) (sqrt(2) R_F + g_R).
 */
LipschitzEstimate estimate_mixed_lipschitz(const Matrix& f, const LayerParams<double>& layer,
                                           const LipschitzDomain& domain, int n_samples, Rng& rng,
                                           const LeakyRelu<double>& act = {});

/// Result of the (m1, m2) grid search for a contracting weighted distance.
struct WeightSearch {
  bool found = false;
  double m1 = 0.0, m2 = 0.0;
  double success_rate = 0.0;  ///< best rate over the grid
};

/**
 * Given per-trial distance pairs before/after a layer, searches m1, m2 over
 * {10^j : j = -3..3}^2 for the smallest pair (by m1 + m2, then m1) under which
 * the weighted distance decreases on at least `required_rate` of the trials.
 * Each entry is {dF_before, dA_before, dF_after, dA_after}.
 */
WeightSearch search_contracting_weights(std::span<const std::array<double, 4>> trials,
                                        double required_rate = 0.95);

}  // namespace csgnn

#endif  // CSGNN_NETWORK_HPP
