#include "csgnn/training.hpp"

#include "csgnn/graph_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace csgnn {

namespace {

void check_targets(const Matrix& logits, const IntVector& labels, const Mask& mask, const char* where) {
  if (labels.size() != logits.rows() || mask.size() != logits.rows()) {
    throw ShapeError(std::string(where) + ": labels/mask must have one entry per row");
  }
  if (!mask.any()) throw std::invalid_argument(std::string(where) + ": empty mask");
  for (Index i = 0; i < logits.rows(); ++i) {
    if (mask(i) && (labels(i) < 0 || labels(i) >= logits.cols())) {
      throw std::invalid_argument(std::string(where) + ": label out of range on a masked node");
    }
  }
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// Feature layer backward. Accumulates into g_w, g_k, g_a and returns dL/dFd.
Matrix feature_layer_backward(const Matrix& fd, const Matrix& a, const LayerParams<double>& p,
                              const LeakyRelu<double>& act, const Matrix& g_f, Matrix& g_w, Matrix& g_k,
                              Matrix& g_a) {
  const Index n = a.rows(), c = p.channels();
  const Matrix k_sym = p.K_sym();
  const Matrix y = fd * p.W;
  const auto z = graph_gradient(a, y);
  const auto s = z.map([&act](double v) { return act(v); });
  const Matrix q = graph_gradient_adjoint(a, s);
  const Matrix r = q * p.W.transpose();

  // F = Fd - h R K~
  const Matrix g_r = -p.h * g_f * k_sym;
  const Matrix g_ksym = -p.h * r.transpose() * g_f;
  g_k += (g_ksym + g_ksym.transpose()) / 2.0;
  // R = Q W^T
  const Matrix g_q = g_r * p.W;
  g_w += g_r.transpose() * q;
  // Q = G(A)^T S, linear in both A and S
  auto g_s = graph_gradient(a, g_q);
  for (Index k = 0; k < c; ++k) {
    const Vector col = g_q.col(k);
    const Vector ones = Vector::Ones(n);
    g_a += s.slice(k).cwiseProduct(col * ones.transpose() - ones * col.transpose());
  }
  // S = sigma(Z), Z = G(A) Y
  for (Index k = 0; k < c; ++k) g_s.slice(k) = g_s.slice(k).cwiseProduct(act.derivative(z.slice(k)));
  const Matrix g_y = graph_gradient_adjoint(a, g_s);
  for (Index k = 0; k < c; ++k) {
    const Vector col = y.col(k);
    const Vector ones = Vector::Ones(n);
    g_a += g_s.slice(k).cwiseProduct(col * ones.transpose() - ones * col.transpose());
  }
  // Y = Fd W, plus the residual path
  g_w += fd.transpose() * g_y;
  return g_f + g_y * p.W.transpose();
}

/// Adjacency step backward for A' = A + h sigma(M(A)). Returns dL/dA.
Matrix adjacency_layer_backward(const Matrix& a, const AdjacencyStepConfig<double>& cfg, const Matrix& g_next,
                                LayerGradients& g) {
  const auto& co = cfg.coeffs;
  const Matrix pre = equivariant_linear(a, co);
  const Matrix g_u = cfg.h * g_next.cwiseProduct(cfg.activation.derivative(pre));
  const double g_k1 = g_u.cwiseProduct(a).sum();  // B_1 is the identity
  for (int i = 2; i <= 9; ++i) {
    g.k(i - 2) += g_u.cwiseProduct(basis_term(a, i)).sum() - sign(co.k(i - 2)) * g_k1 / co.slope_floor;
  }
  g.alpha += g_k1 / co.slope_floor;
  return g_next + equivariant_linear_adjoint(g_u, co);
}

}  // namespace

double masked_cross_entropy(const Matrix& logits, const IntVector& labels, const Mask& mask) {
  check_targets(logits, labels, mask, "masked_cross_entropy");
  double total = 0.0;
  Index count = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    if (!mask(i)) continue;
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    total += lse - logits(i, labels(i));
    ++count;
  }
  return total / static_cast<double>(count);
}

Matrix masked_cross_entropy_grad(const Matrix& logits, const IntVector& labels, const Mask& mask) {
  check_targets(logits, labels, mask, "masked_cross_entropy_grad");
  const double inv = 1.0 / static_cast<double>(mask.count());
  Matrix g = Matrix::Zero(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    if (!mask(i)) continue;
    const Eigen::RowVectorXd e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    g.row(i) = e / e.sum();
    g(i, labels(i)) -= 1.0;
    g.row(i) *= inv;
  }
  return g;
}

double masked_accuracy(const Matrix& logits, const IntVector& labels, const Mask& mask) {
  if (labels.size() != logits.rows() || mask.size() != logits.rows()) {
    throw ShapeError("masked_accuracy: labels/mask must have one entry per row");
  }
  if (!mask.any()) return 0.0;
  Index hits = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    if (!mask(i)) continue;
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    hits += arg == labels(i);
  }
  return static_cast<double>(hits) / static_cast<double>(mask.count());
}

Gradients Gradients::zeros_like(const NetworkParams& p) {
  Gradients g;
  g.encoder = Matrix::Zero(p.encoder.rows(), p.encoder.cols());
  for (const auto& layer : p.layers) {
    LayerGradients lg;
    lg.W = Matrix::Zero(layer.feature.W.rows(), layer.feature.W.cols());
    lg.K = Matrix::Zero(layer.feature.K.rows(), layer.feature.K.cols());
    g.layers.push_back(std::move(lg));
  }
  g.classifier = Matrix::Zero(p.classifier.rows(), p.classifier.cols());
  g.bias = Vector::Zero(p.bias.size());
  return g;
}

Gradients backward(const ForwardTrace& trace, const NetworkParams& params, const Matrix& logit_grad) {
  const Index depth = params.depth();
  if (static_cast<Index>(trace.feature_states.size()) != depth + 1 ||
      static_cast<Index>(trace.adjacency_states.size()) != depth + 1 ||
      static_cast<Index>(trace.layer_inputs.size()) != depth) {
    throw ShapeError("backward: trace does not match the network depth");
  }
  detail::require_same_shape(logit_grad, Matrix(trace.dropped_output * params.classifier), "backward");

  Gradients g = Gradients::zeros_like(params);
  g.classifier = trace.dropped_output.transpose() * logit_grad;
  g.bias = logit_grad.colwise().sum().transpose();
  Matrix g_f = logit_grad * params.classifier.transpose();
  if (trace.output_mask.size() > 0) g_f = g_f.cwiseProduct(trace.output_mask);

  const Index n = trace.adjacency_states.front().rows();
  Matrix g_a = Matrix::Zero(n, n);  // A^(L) does not reach the logits
  for (Index l = depth - 1; l >= 0; --l) {
    const CoupledLayer& layer = params.layers[l];
    const Matrix& a_prev = trace.adjacency_states[l];
    LayerGradients& lg = g.layers[l];
    Matrix g_a_prev = Matrix::Zero(n, n);
    const Matrix g_fd = feature_layer_backward(trace.layer_inputs[l], a_prev, layer.feature,
                                               layer.adjacency.activation, g_f, lg.W, lg.K, g_a_prev);
    g_a_prev += trace.adjacency_frozen ? g_a : adjacency_layer_backward(a_prev, layer.adjacency, g_a, lg);
    g_a = std::move(g_a_prev);
    g_f = trace.layer_masks.empty() ? g_fd : Matrix(g_fd.cwiseProduct(trace.layer_masks[l]));
  }
  g.encoder = trace.dropped_input.transpose() * g_f;

  if (params.share_weights) {
    for (Index l = 1; l < depth; ++l) {
      g.layers[0].W += g.layers[l].W;
      g.layers[0].K += g.layers[l].K;
      g.layers[0].k += g.layers[l].k;
      g.layers[0].alpha += g.layers[l].alpha;
    }
  }
  return g;
}

std::vector<ParamView> parameter_views(NetworkParams& params, const Gradients& grads,
                                       const TrainableSet& trainable) {
  std::vector<ParamView> out;
  auto add = [&out](std::string name, ParamGroup group, auto& value, const auto& grad) {
    if (value.size() != grad.size()) throw ShapeError("parameter_views: gradient shape mismatch for " + name);
    out.push_back({std::move(name), group, value.data(), grad.data(), static_cast<Index>(value.size())});
  };
  if (grads.layers.size() != params.layers.size()) throw ShapeError("parameter_views: layer count mismatch");
  add("encoder", ParamGroup::Embedding, params.encoder, grads.encoder);
  const Index listed = params.share_weights ? std::min<Index>(1, params.depth()) : params.depth();
  for (Index l = 0; l < listed; ++l) {
    auto& layer = params.layers[l];
    const auto& lg = grads.layers[l];
    const std::string tag = "layer" + std::to_string(l) + ".";
    if (layer.feature.parameterization == Parameterization::LearnW_IdentityK) {
      add(tag + "W", ParamGroup::Node, layer.feature.W, lg.W);
    } else {
      add(tag + "K", ParamGroup::Node, layer.feature.K, lg.K);
    }
    add(tag + "k", ParamGroup::Adjacency, layer.adjacency.coeffs.k, lg.k);
    if (trainable.alpha) {
      out.push_back({tag + "alpha", ParamGroup::Adjacency, &layer.adjacency.coeffs.alpha, &lg.alpha, 1});
    }
  }
  add("classifier", ParamGroup::Embedding, params.classifier, grads.classifier);
  add("bias", ParamGroup::Embedding, params.bias, grads.bias);
  return out;
}

void sync_shared_layers(NetworkParams& params) {
  if (!params.share_weights) return;
  for (Index l = 1; l < params.depth(); ++l) {
    auto& dst = params.layers[l];
    const auto& src = params.layers[0];
    dst.feature.W = src.feature.W;
    dst.feature.K = src.feature.K;
    dst.adjacency.coeffs = src.adjacency.coeffs;
  }
}

void TrainConfig::validate() const {
  auto in = [](double x, double lo, double hi) { return x >= lo && x <= hi; };
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  if (hidden < 1) throw std::invalid_argument("TrainConfig: hidden must be >= 1");
  if (layers < 1) throw std::invalid_argument("TrainConfig: layers must be >= 1");
  if (!(h >= 0.0) || !std::isfinite(h)) throw std::invalid_argument("TrainConfig: h must be finite and >= 0");
  if (!(alpha <= 0.0)) throw std::invalid_argument("TrainConfig: alpha must be <= 0");
  if (!(lambda > 0.0)) throw std::invalid_argument("TrainConfig: lambda must be > 0");
  for (double lr_g : {lr_embedding, lr_node, lr_adjacency}) {
    if (!in(lr_g, 1e-5, 1e-2)) throw std::invalid_argument("TrainConfig: learning rates must lie in [1e-5, 1e-2]");
  }
  for (double wd : {wd_embedding, wd_node, wd_adjacency}) {
    if (!in(wd, 5e-8, 5e-2)) throw std::invalid_argument("TrainConfig: weight decay must lie in [5e-8, 5e-2]");
  }
  if (!in(beta1, 0.0, 1.0) || beta1 == 1.0 || !in(beta2, 0.0, 1.0) || beta2 == 1.0 || !(adam_eps > 0.0)) {
    throw std::invalid_argument("TrainConfig: bad Adam constants");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("TrainConfig: dropout_p must lie in [0, 1)");
  if (!(leaky_slope > 0.0 && leaky_slope <= 1.0)) throw std::invalid_argument("TrainConfig: leaky_slope must lie in (0, 1]");
  if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
}

double TrainConfig::lr(ParamGroup g) const {
  switch (g) {
    case ParamGroup::Embedding: return lr_embedding;
    case ParamGroup::Node: return lr_node;
    case ParamGroup::Adjacency: return lr_adjacency;
  }
  return 0.0;
}

double TrainConfig::weight_decay(ParamGroup g) const {
  switch (g) {
    case ParamGroup::Embedding: return wd_embedding;
    case ParamGroup::Node: return wd_node;
    case ParamGroup::Adjacency: return wd_adjacency;
  }
  return 0.0;
}

void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state, const TrainConfig& cfg,
               std::span<const Matrix> graphs) {
  auto views = parameter_views(params, grads, TrainableSet{cfg.train_alpha});
  if (state.m.empty()) {
    for (const auto& v : views) {
      state.m.push_back(Vector::Zero(v.size));
      state.v.push_back(Vector::Zero(v.size));
    }
  }
  if (state.m.size() != views.size()) throw ShapeError("adam_step: optimiser state does not match parameters");
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& pv = views[i];
    if (state.m[i].size() != pv.size) throw ShapeError("adam_step: buffer shape mismatch for " + pv.name);
    Eigen::Map<Vector> value(pv.value, pv.size);
    const Eigen::Map<const Vector> grad(pv.grad, pv.size);
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    const double lr = cfg.lr(pv.group);
    value -= lr * cfg.weight_decay(pv.group) * value;
    value.array() -= lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + cfg.adam_eps);
  }
  for (auto& layer : params.layers) {
    layer.adjacency.coeffs.alpha = std::min(layer.adjacency.coeffs.alpha, 0.0);
  }
  sync_shared_layers(params);
  clamp_steps(params, cfg.h, graphs);
  for (const auto& layer : params.layers) {
    const double ceiling = step_ceiling_or_inf(layer.adjacency.coeffs);
    if (!(layer.adjacency.coeffs.alpha <= 0.0) || layer.adjacency.h > ceiling) {
      throw std::logic_error("adam_step: contractive constraints violated after update");
    }
  }
}

NetworkParams init_network(Index c_in, Index c_out, const TrainConfig& cfg, const Matrix& adjacency, Rng& rng) {
  cfg.validate();
  const Index c = cfg.hidden;
  auto glorot = [&rng](Index rows, Index cols) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = limit * u(rng);
    return m;
  };
  std::uniform_real_distribution<double> small(-0.1, 0.1);
  const double floor = cfg.k1_rule == K1Rule::SlopeCorrected ? cfg.leaky_slope : 1.0;

  NetworkParams p;
  p.encoder = glorot(c_in, c);
  for (Index l = 0; l < cfg.layers; ++l) {
    if (cfg.share_weights && l > 0) {
      p.layers.push_back(p.layers.front());
      continue;
    }
    CoupledLayer layer;
    layer.feature = cfg.parameterization == Parameterization::LearnW_IdentityK
                        ? LayerParams<double>::learn_w(glorot(c, c), 0.0, cfg.lambda)
                        : LayerParams<double>::learn_k(Matrix::Identity(c, c), 0.0);
    EquivariantCoeffs<double>::Coeffs k;
    for (Index i = 0; i < 8; ++i) k(i) = small(rng);
    layer.adjacency.coeffs = EquivariantCoeffs<double>(k, cfg.alpha, floor);
    layer.adjacency.activation = LeakyRelu<double>(cfg.leaky_slope);
    p.layers.push_back(std::move(layer));
  }
  p.classifier = glorot(c, c_out);
  p.bias = Vector::Zero(c_out);
  p.dropout_p = cfg.dropout_p;
  p.share_weights = cfg.share_weights;
  clamp_steps(p, cfg.h, std::span<const Matrix>(&adjacency, 1));
  p.validate();
  return p;
}

TrainResult train(const Graph& g, const TrainConfig& cfg) {
  g.validate();
  cfg.validate();
  if (!g.train_mask.any()) throw std::invalid_argument("train: empty training mask");
  Rng rng(cfg.seed);
  TrainResult result;
  result.params = init_network(g.num_features(), g.num_classes(), cfg, g.adjacency, rng);
  NetworkParams current = result.params;
  AdamState state;
  double best_val = -1.0;
  int since_best = 0;
  const std::span<const Matrix> graphs(&g.adjacency, 1);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    try {
      auto fwd = forward(g, current, Mode::Train, rng);
      m.train_loss = masked_cross_entropy(fwd.logits, g.labels, g.train_mask);
      if (!std::isfinite(m.train_loss)) throw DivergenceError("non-finite training loss");
      const Gradients grads =
          backward(fwd.trace, current, masked_cross_entropy_grad(fwd.logits, g.labels, g.train_mask));
      adam_step(current, grads, state, cfg, graphs);
      const auto eval = forward(g, current);
      m.train_acc = masked_accuracy(eval.logits, g.labels, g.train_mask);
      m.val_loss = g.val_mask.any() ? masked_cross_entropy(eval.logits, g.labels, g.val_mask) : 0.0;
      m.val_acc = masked_accuracy(eval.logits, g.labels, g.val_mask);
      m.test_acc = masked_accuracy(eval.logits, g.labels, g.test_mask);
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.divergence_message = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    result.history.push_back(m);
    if (m.val_acc > best_val) {
      best_val = m.val_acc;
      result.params = current;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

namespace {

/// Masked cross-entropy of the network in extended precision, replaying the trace's dropout masks.
long double extended_loss(const Matrix& features, const Matrix& adjacency, const IntVector& labels,
                          const Mask& mask, const NetworkParams& p, const ForwardTrace& masks) {
  using S = long double;
  using M = Mat<S>;
  auto dropped = [](const M& x, const Matrix& m) { return m.size() == 0 ? x : M(x.cwiseProduct(m.cast<S>())); };
  M f = dropped(features.cast<S>(), masks.input_mask) * p.encoder.cast<S>();
  M a = adjacency.cast<S>();
  for (Index l = 0; l < p.depth(); ++l) {
    const CoupledLayer& layer = p.layers[l];
    LayerParams<S> fp;
    fp.W = layer.feature.W.cast<S>();
    fp.K = layer.feature.K.cast<S>();
    fp.h = layer.feature.h;
    AdjacencyStepConfig<S> ap;
    ap.coeffs.k = layer.adjacency.coeffs.k.cast<S>();
    ap.coeffs.alpha = layer.adjacency.coeffs.alpha;
    ap.coeffs.slope_floor = layer.adjacency.coeffs.slope_floor;
    ap.h = layer.adjacency.h;
    ap.activation = LeakyRelu<S>(layer.adjacency.activation.slope);
    ap.policy = StepPolicy::Unchecked;
    const M fd = masks.layer_masks.empty() ? f : dropped(f, masks.layer_masks[l]);
    f = feature_step(fd, a, fp, ap.activation);
    if (!masks.adjacency_frozen) a = adjacency_step(a, ap);
  }
  const M logits = (dropped(f, masks.output_mask) * p.classifier.cast<S>()).rowwise() +
                   p.bias.cast<S>().transpose();
  S total = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    if (!mask(i)) continue;
    const S mx = logits.row(i).maxCoeff();
    total += mx + std::log((logits.row(i).array() - mx).exp().sum()) - logits(i, labels(i));
  }
  return total / static_cast<S>(mask.count());
}

}  // namespace

GradientCheck finite_difference_check(const Matrix& features, const Matrix& adjacency, const IntVector& labels,
                                      const Mask& mask, const NetworkParams& params, std::uint64_t dropout_seed,
                                      double fd_step) {
  Rng rng(dropout_seed);
  const auto fwd = forward(features, adjacency, params, rng, {Mode::Train, false});
  const Gradients grads = backward(fwd.trace, params, masked_cross_entropy_grad(fwd.logits, labels, mask));

  const bool alpha_movable = std::all_of(params.layers.begin(), params.layers.end(), [fd_step](const auto& l) {
    return l.adjacency.coeffs.alpha < -fd_step;
  });
  NetworkParams base = params;
  const auto views = parameter_views(base, grads, TrainableSet{alpha_movable});

  GradientCheck out;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& view = views[v];
    double diff = 0.0, scale = 1e-8;
    for (Index i = 0; i < view.size; ++i) {
      NetworkParams probe = base;
      double& x = parameter_views(probe, grads, TrainableSet{alpha_movable})[v].value[i];
      const double saved = x;
      x = saved + fd_step;
      const double x_up = x;
      sync_shared_layers(probe);
      const long double up = extended_loss(features, adjacency, labels, mask, probe, fwd.trace);
      x = saved - fd_step;
      const double x_down = x;
      sync_shared_layers(probe);
      const long double down = extended_loss(features, adjacency, labels, mask, probe, fwd.trace);
      const double fd = static_cast<double>((up - down) / static_cast<long double>(x_up - x_down));
      diff = std::max(diff, std::abs(fd - view.grad[i]));
      scale = std::max({scale, std::abs(fd), std::abs(view.grad[i])});
    }
    out.entries_checked += view.size;
    const double rel = diff / scale;
    if (rel >= out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_tensor = view.name;
    }
  }
  return out;
}

void write_history_csv(std::ostream& os, const std::vector<EpochMetrics>& history) {
  os << "epoch,train_loss,val_acc,test_acc\n";
  for (const auto& m : history) {
    os << m.epoch << ',' << format_double(m.train_loss) << ',' << format_double(m.val_acc) << ','
       << format_double(m.test_acc) << '\n';
  }
}

}  // namespace csgnn
