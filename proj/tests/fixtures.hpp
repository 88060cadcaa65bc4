#ifndef CSGNN_TESTS_FIXTURES_HPP
#define CSGNN_TESTS_FIXTURES_HPP

#include "csgnn/network.hpp"
#include "test_util.hpp"

namespace csgnn::testing {

struct NetSpec {
  Index c_in = 3, hidden = 3, c_out = 2, layers = 2;
  Parameterization mode = Parameterization::IdentityW_LearnK;
  bool share = false;
  double dropout = 0.0;
  double h = 0.5;
  double slope = 0.1;
};

inline EquivariantCoeffs<double> random_coeffs(Rng& rng, double scale = 0.3) {
  std::uniform_real_distribution<double> u(-scale, scale), a(-1.0, -0.05);
  EquivariantCoeffs<double>::Coeffs k;
  for (int i = 0; i < 8; ++i) k(i) = u(rng);
  return EquivariantCoeffs<double>(k, a(rng));
}

/// Random parameters with steps clamped along `adjacency`.
inline NetworkParams random_network(const NetSpec& s, const Matrix& adjacency, Rng& rng) {
  NetworkParams p;
  p.encoder = random_matrix(s.c_in, s.hidden, rng);
  std::uniform_real_distribution<double> lam(0.5, 2.0);
  for (Index l = 0; l < s.layers; ++l) {
    if (s.share && l > 0) {
      p.layers.push_back(p.layers.front());
      continue;
    }
    CoupledLayer layer;
    layer.feature = s.mode == Parameterization::LearnW_IdentityK
                        ? LayerParams<double>::learn_w(random_matrix(s.hidden, s.hidden, rng), 0.0, lam(rng))
                        : LayerParams<double>::learn_k(random_matrix(s.hidden, s.hidden, rng), 0.0);
    layer.adjacency.coeffs = random_coeffs(rng);
    layer.adjacency.activation = LeakyRelu<double>(s.slope);
    p.layers.push_back(std::move(layer));
  }
  p.classifier = random_matrix(s.hidden, s.c_out, rng);
  p.bias = random_matrix(s.c_out, 1, rng);
  p.dropout_p = s.dropout;
  p.share_weights = s.share;
  clamp_steps(p, s.h, std::span<const Matrix>(&adjacency, 1));
  return p;
}

}  // namespace csgnn::testing

#endif  // CSGNN_TESTS_FIXTURES_HPP
