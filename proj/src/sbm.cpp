#include "csgnn/sbm.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

namespace csgnn {

void SbmConfig::validate() const {
  if (classes < 1 || n < classes) throw std::invalid_argument("sbm: need n >= classes >= 1");
  if (!(p_out >= 0.0 && p_out < p_in && p_in <= 1.0)) {
    throw std::invalid_argument("sbm: need 0 <= p_out < p_in <= 1");
  }
  if (feat_dim < classes) throw std::invalid_argument("sbm: feat_dim must be >= classes");
  if (!(signal >= 0.0)) throw std::invalid_argument("sbm: signal must be >= 0");
}

Graph generate_sbm(const SbmConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = cfg.n;

  Graph g;
  g.binary = true;
  g.labels.resize(n);
  for (Index i = 0; i < n; ++i) g.labels(i) = static_cast<int>(i * cfg.classes / n);

  g.adjacency = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double p = g.labels(i) == g.labels(j) ? cfg.p_in : cfg.p_out;
      if (u(rng) < p) g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
    }
  }

  g.features.resize(n, cfg.feat_dim);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < cfg.feat_dim; ++j) g.features(i, j) = normal(rng);
  for (Index i = 0; i < n; ++i) g.features(i, g.labels(i)) += cfg.signal;

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index(0));
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  const Index n_train = n / 10, n_val = n / 10;
  g.train_mask = Mask::Constant(n, false);
  g.val_mask = Mask::Constant(n, false);
  g.test_mask = Mask::Constant(n, false);
  for (Index r = 0; r < n; ++r) {
    Mask& m = r < n_train ? g.train_mask : (r < n_train + n_val ? g.val_mask : g.test_mask);
    m(order[r]) = true;
  }
  g.validate();
  return g;
}

}  // namespace csgnn
