#ifndef CSGNN_SBM_HPP
#define CSGNN_SBM_HPP

#include "csgnn/graph.hpp"

#include <cstdint>

namespace csgnn {

struct SbmConfig {
  Index n = 100;
  int classes = 2;
  double p_in = 0.3;
  double p_out = 0.02;
  Index feat_dim = 8;
  double signal = 1.0;
  std::uint64_t seed = 0;

  /// 0 <= p_out < p_in <= 1, n >= classes >= 1, feat_dim >= classes, signal >= 0.
  void validate() const;
};

/**
 * Stochastic block model. Node i belongs to class floor(i * classes / n).
 * Features are standard normal plus `signal` on the coordinate of the node's
 * class. A random 10% / 10% / 80% train / val / test split (rounded down for
 * train and val). Binary, symmetric, no self loops.
 */
Graph generate_sbm(const SbmConfig& cfg);

}  // namespace csgnn

#endif  // CSGNN_SBM_HPP
