#include "csgnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace csgnn {

namespace {

void require_finite(const Matrix& m, const std::string& where) {
  if (!m.allFinite()) throw DivergenceError("non-finite values in " + where);
}

Matrix dropout_mask(Index rows, Index cols, double p, Rng& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = keep(rng) ? scale : 0.0;
  return m;
}

bool same_shared(const CoupledLayer& a, const CoupledLayer& b) {
  return a.feature.W == b.feature.W && a.feature.K == b.feature.K &&
         a.adjacency.coeffs.k == b.adjacency.coeffs.k &&
         a.adjacency.coeffs.alpha == b.adjacency.coeffs.alpha &&
         a.adjacency.coeffs.slope_floor == b.adjacency.coeffs.slope_floor;
}

}  // namespace

void NetworkParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("NetworkParams: need at least one layer");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw std::invalid_argument("NetworkParams: dropout_p must lie in [0, 1)");
  }
  const Index c = hidden_dim();
  if (classifier.rows() != c) throw ShapeError("NetworkParams: classifier must have c rows");
  if (bias.size() != classifier.cols()) throw ShapeError("NetworkParams: bias must have c_out entries");
  for (const auto& layer : layers) {
    layer.feature.validate();
    if (layer.feature.channels() != c) throw ShapeError("NetworkParams: layer width differs from encoder");
    check_adjacency_step(layer.adjacency);
    if (share_weights && !same_shared(layer, layers.front())) {
      throw std::invalid_argument("NetworkParams: share_weights set but layer parameters differ");
    }
  }
}

ForwardResult forward(const Matrix& features, const Matrix& adjacency, const NetworkParams& params,
                      Rng& rng, ForwardOptions opts) {
  params.validate();
  detail::require_square(adjacency, "forward");
  if (features.rows() != adjacency.rows()) throw ShapeError("forward: features must have n rows");
  if (features.cols() != params.input_dim()) throw ShapeError("forward: feature width does not match encoder");

  const Index n = features.rows(), c = params.hidden_dim();
  const bool drop = opts.mode == Mode::Train && params.dropout_p > 0.0;
  ForwardResult out;
  ForwardTrace& tr = out.trace;
  tr.adjacency_frozen = opts.freeze_adjacency;

  if (drop) {
    tr.input_mask = dropout_mask(n, features.cols(), params.dropout_p, rng);
    tr.dropped_input = features.cwiseProduct(tr.input_mask);
  } else {
    tr.dropped_input = features;
  }
  tr.feature_states.push_back(tr.dropped_input * params.encoder);
  tr.adjacency_states.push_back(adjacency);

  for (Index l = 0; l < params.depth(); ++l) {
    const CoupledLayer& layer = params.layers[l];
    const Matrix& f_prev = tr.feature_states.back();
    const Matrix& a_prev = tr.adjacency_states.back();
    Matrix fd;
    if (drop) {
      tr.layer_masks.push_back(dropout_mask(n, c, params.dropout_p, rng));
      fd = f_prev.cwiseProduct(tr.layer_masks.back());
    } else {
      fd = f_prev;
    }
    Matrix f_next = feature_step(fd, a_prev, layer.feature, layer.adjacency.activation);
    Matrix a_next = opts.freeze_adjacency ? a_prev : adjacency_step(a_prev, layer.adjacency);
    require_finite(f_next, "features after layer " + std::to_string(l + 1));
    require_finite(a_next, "adjacency after layer " + std::to_string(l + 1));
    tr.layer_inputs.push_back(std::move(fd));
    tr.feature_states.push_back(std::move(f_next));
    tr.adjacency_states.push_back(std::move(a_next));
  }

  if (drop) {
    tr.output_mask = dropout_mask(n, c, params.dropout_p, rng);
    tr.dropped_output = tr.feature_states.back().cwiseProduct(tr.output_mask);
  } else {
    tr.dropped_output = tr.feature_states.back();
  }
  out.logits = (tr.dropped_output * params.classifier).rowwise() + params.bias.transpose();
  require_finite(out.logits, "logits");
  return out;
}

ForwardResult forward(const Graph& g, const NetworkParams& params, Mode mode, Rng& rng) {
  ForwardOptions opts;
  opts.mode = mode;
  return forward(g.features, g.adjacency, params, rng, opts);
}

ForwardResult forward(const Graph& g, const NetworkParams& params) {
  Rng unused(0);
  return forward(g, params, Mode::Eval, unused);
}

std::pair<Matrix, Matrix> coupled_map(const Matrix& f0, const Matrix& a0, const NetworkParams& params) {
  Matrix f = f0, a = a0;
  for (const auto& layer : params.layers) {
    Matrix f_next = feature_step(f, a, layer.feature, layer.adjacency.activation);
    a = adjacency_step(a, layer.adjacency);
    f = std::move(f_next);
  }
  return {std::move(f), std::move(a)};
}

std::vector<Matrix> adjacency_trajectory(const Matrix& a0, const NetworkParams& params) {
  std::vector<Matrix> out{a0};
  for (const auto& layer : params.layers) out.push_back(adjacency_step(out.back(), layer.adjacency));
  return out;
}

void clamp_steps(NetworkParams& params, double h_cfg, std::span<const Matrix> adjacencies) {
  if (!(h_cfg >= 0.0) || !std::isfinite(h_cfg)) throw std::invalid_argument("clamp_steps: bad h");
  std::vector<Matrix> current(adjacencies.begin(), adjacencies.end());
  for (auto& layer : params.layers) {
    double hf = h_cfg;
    for (const auto& a : current) hf = std::min(hf, feature_step_bound(a, layer.feature).h_safe);
    layer.feature.h = hf;
    layer.adjacency.h = std::min(h_cfg, step_ceiling_or_inf(layer.adjacency.coeffs));
    for (auto& a : current) a = adjacency_step(a, layer.adjacency);
  }
}

double weighted_distance(double m1, double m2, const Matrix& f, const Matrix& a, const Matrix& f_star,
                         const Matrix& a_star) {
  if (!(m1 > 0.0) || !(m2 > 0.0)) throw std::invalid_argument("weighted_distance: weights must be > 0");
  return m1 * frobenius_distance(f, f_star) + m2 * l1_vec_distance(a, a_star);
}

double expansivity_bound(std::span<const double> h, std::span<const double> lip,
                         const PerturbationBudget& budget) {
  if (h.size() != lip.size()) throw ShapeError("expansivity_bound: h and lip lengths differ");
  if (!(budget.eps_feat >= 0.0) || !(budget.eps_adj >= 0.0)) {
    throw std::invalid_argument("expansivity_bound: negative budget");
  }
  double growth = 1.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!(h[i] >= 0.0) || !(lip[i] >= 0.0)) throw std::invalid_argument("expansivity_bound: negative input");
    growth += lip[i] * h[i];
  }
  return budget.eps_feat + budget.eps_adj * growth;
}

LipschitzDomain LipschitzDomain::hull(std::vector<Matrix> anchors) {
  LipschitzDomain d;
  d.anchors = std::move(anchors);
  d.validate();
  return d;
}

LipschitzDomain LipschitzDomain::l1_ball(Matrix center, double radius) {
  LipschitzDomain d;
  d.anchors.push_back(std::move(center));
  d.radius = radius;
  d.validate();
  return d;
}

void LipschitzDomain::validate() const {
  if (anchors.empty()) throw std::invalid_argument("LipschitzDomain: no anchors");
  if (!(radius >= 0.0)) throw std::invalid_argument("LipschitzDomain: negative radius");
  for (const auto& a : anchors) detail::require_same_shape(a, anchors.front(), "LipschitzDomain");
  detail::require_square(anchors.front(), "LipschitzDomain");
}

Matrix LipschitzDomain::sample(Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (radius > 0.0) {
    const Matrix& c = anchors.front();
    Matrix dir(c.rows(), c.cols());
    for (Index j = 0; j < c.cols(); ++j)
      for (Index i = 0; i < c.rows(); ++i) dir(i, j) = 2.0 * u(rng) - 1.0;
    const double l1 = dir.cwiseAbs().sum();
    if (l1 == 0.0) return c;
    return c + (radius * u(rng) / l1) * dir;
  }
  std::vector<double> w(anchors.size());
  double total = 0.0;
  for (auto& x : w) total += (x = -std::log(1.0 - u(rng)));  // flat Dirichlet weights
  Matrix out = Matrix::Zero(anchors.front().rows(), anchors.front().cols());
  for (std::size_t i = 0; i < anchors.size(); ++i) out += (w[i] / total) * anchors[i];
  return out;
}

double graph_gradient_norm_bound(const Matrix& a) {
  detail::require_square(a, "graph_gradient_norm_bound");
  if (a.size() == 0) return 0.0;
  Matrix sq = a.cwiseAbs2();
  sq.diagonal().setZero();
  const Vector per_node = sq.rowwise().sum() + sq.colwise().sum().transpose();
  return std::sqrt(2.0 * per_node.maxCoeff());
}

namespace {

double max_row_distance(const Matrix& y) {
  double best = 0.0;
  for (Index i = 0; i < y.rows(); ++i)
    for (Index j = i + 1; j < y.rows(); ++j) best = std::max(best, (y.row(i) - y.row(j)).norm());
  return best;
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace

LipschitzEstimate estimate_mixed_lipschitz(const Matrix& f, const LayerParams<double>& layer,
                                           const LipschitzDomain& domain, int n_samples, Rng& rng,
                                           const LeakyRelu<double>& act) {
  if (n_samples < 1) throw std::invalid_argument("estimate_mixed_lipschitz: n_samples must be >= 1");
  domain.validate();
  layer.validate();
  if (f.rows() != domain.anchors.front().rows()) throw ShapeError("estimate_mixed_lipschitz: node count mismatch");

  double r_f = 0.0, g_r = 0.0;
  if (domain.radius > 0.0) {
    r_f = domain.anchors.front().norm() + domain.radius;
    g_r = graph_gradient_norm_bound(domain.anchors.front()) + std::sqrt(2.0) * domain.radius;
  } else {
    for (const auto& a : domain.anchors) {
      r_f = std::max(r_f, a.norm());
      g_r = std::max(g_r, graph_gradient_norm_bound(a));
    }
  }
  LipschitzEstimate out;
  out.upper = spectral_norm(layer.W) * spectral_norm(layer.K_sym()) * max_row_distance(f * layer.W) *
              (std::sqrt(2.0) * r_f + g_r);

  constexpr double t = 1e-4;
  for (int s = 0; s < n_samples; ++s) {
    const Matrix a1 = domain.sample(rng), a2 = domain.sample(rng);
    const double gap = (a2 - a1).cwiseAbs().sum();
    if (gap <= t) continue;  // the step would leave the segment
    const Matrix a_t = a1 + (t / gap) * (a2 - a1);
    const double q = (feature_field(f, a_t, layer, act) - feature_field(f, a1, layer, act)).norm() / t;
    out.lower = std::max(out.lower, q);
  }
  if (out.lower > out.upper * (1.0 + 1e-9) + 1e-12) {
    throw std::logic_error("estimate_mixed_lipschitz: sampled lower bound exceeds the analytic bound");
  }
  return out;
}

WeightSearch search_contracting_weights(std::span<const std::array<double, 4>> trials,
                                        double required_rate) {
  WeightSearch best;
  if (trials.empty()) return best;
  struct Candidate {
    double m1, m2;
  };
  std::vector<Candidate> grid;
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j) grid.push_back({std::pow(10.0, i), std::pow(10.0, j)});
  std::stable_sort(grid.begin(), grid.end(), [](const Candidate& x, const Candidate& y) {
    return x.m1 + x.m2 != y.m1 + y.m2 ? x.m1 + x.m2 < y.m1 + y.m2 : x.m1 < y.m1;
  });
  for (const auto& cand : grid) {
    std::size_t ok = 0;
    for (const auto& t : trials) {
      if (cand.m1 * t[2] + cand.m2 * t[3] < cand.m1 * t[0] + cand.m2 * t[1]) ++ok;
    }
    const double rate = static_cast<double>(ok) / static_cast<double>(trials.size());
    if (!best.found && rate > best.success_rate) best.success_rate = rate;
    if (!best.found && rate >= required_rate) {
      best = {true, cand.m1, cand.m2, rate};
    }
  }
  return best;
}

}  // namespace csgnn
