#ifndef CSGNN_GRAPH_HPP
#define CSGNN_GRAPH_HPP

#include "csgnn/types.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace csgnn {

/**
 * A dense graph: real adjacency, node features, labels (-1 = unlabeled) and
 * the train/val/test split.
 *
 * When `binary` is set every adjacency entry must be exactly 0 or 1.
 */
template <typename Scalar>
struct BasicGraph {
  Mat<Scalar> adjacency;
  Mat<Scalar> features;
  IntVector labels;
  Mask train_mask;
  Mask val_mask;
  Mask test_mask;
  bool binary = false;

  Index num_nodes() const { return adjacency.rows(); }
  Index num_features() const { return features.cols(); }

  int num_classes() const {
    return labels.size() == 0 ? 0 : std::max(labels.maxCoeff() + 1, 0);
  }

  /// Throws ShapeError / std::invalid_argument when an invariant is broken.
  void validate() const {
    detail::require_square(adjacency, "Graph");
    const Index n = adjacency.rows();
    if (features.rows() != n) throw ShapeError("Graph: features must have one row per node");
    if (labels.size() != n) throw ShapeError("Graph: labels must have one entry per node");
    for (const Mask* m : {&train_mask, &val_mask, &test_mask}) {
      if (m->size() != n) throw ShapeError("Graph: masks must have one entry per node");
    }
    if (((train_mask && val_mask) || (train_mask && test_mask) || (val_mask && test_mask)).any()) {
      throw std::invalid_argument("Graph: train/val/test masks must be disjoint");
    }
    if ((labels.array() < -1).any()) throw std::invalid_argument("Graph: labels must be >= -1");
    if (binary && !((adjacency.array() == Scalar(0)) || (adjacency.array() == Scalar(1))).all()) {
      throw std::invalid_argument("Graph: binary flag set but adjacency has non 0/1 entries");
    }
  }
};

using Graph = BasicGraph<double>;

/// Builds an unlabeled graph with empty masks around the given matrices.
template <typename Scalar>
BasicGraph<Scalar> make_graph(Mat<Scalar> adjacency, Mat<Scalar> features) {
  BasicGraph<Scalar> g;
  const Index n = adjacency.rows();
  g.adjacency = std::move(adjacency);
  g.features = std::move(features);
  g.labels = IntVector::Constant(n, -1);
  g.train_mask = Mask::Constant(n, false);
  g.val_mask = Mask::Constant(n, false);
  g.test_mask = Mask::Constant(n, false);
  return g;
}

/**
 * A node relabelling. Acting on a vector x it produces (Px)_i = x_{perm[i]},
 * so P A P^T has entries A_{perm[i], perm[j]}.
 */
class Permutation {
public:
  Permutation() = default;

  explicit Permutation(std::vector<Index> perm) : perm_(std::move(perm)) {
    std::vector<bool> seen(perm_.size(), false);
    for (Index p : perm_) {
      if (p < 0 || p >= static_cast<Index>(perm_.size()) || seen[p]) {
        throw std::invalid_argument("Permutation: not a bijection on {0..n-1}");
      }
      seen[p] = true;
    }
  }

  static Permutation identity(Index n) {
    std::vector<Index> p(n);
    for (Index i = 0; i < n; ++i) p[i] = i;
    return Permutation(std::move(p));
  }

  /// Uniformly random permutation (Fisher-Yates driven by `rng`).
  template <typename Rng>
  static Permutation random(Index n, Rng& rng) {
    std::vector<Index> p(n);
    for (Index i = 0; i < n; ++i) p[i] = i;
    for (Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(p[i], p[j]);
    }
    return Permutation(std::move(p));
  }

  Index size() const { return static_cast<Index>(perm_.size()); }
  Index operator[](Index i) const { return perm_[i]; }
  const std::vector<Index>& indices() const { return perm_; }

  /// Matrix of `then` applied after `*this`, i.e. Q*P for then = Q.
  Permutation then(const Permutation& q) const {
    if (q.size() != size()) throw ShapeError("Permutation: length mismatch in composition");
    std::vector<Index> r(perm_.size());
    for (Index i = 0; i < size(); ++i) r[i] = perm_[q[i]];
    return Permutation(std::move(r));
  }

  template <typename Scalar>
  Mat<Scalar> matrix() const {
    Mat<Scalar> P = Mat<Scalar>::Zero(size(), size());
    for (Index i = 0; i < size(); ++i) P(i, perm_[i]) = Scalar(1);
    return P;
  }

  /// Rows permuted: (PX)_{i,:} = X_{perm[i],:}.
  template <typename Derived>
  Mat<typename Derived::Scalar> permute_rows(const Eigen::MatrixBase<Derived>& x) const {
    if (x.rows() != size()) throw ShapeError("Permutation: length mismatch");
    Mat<typename Derived::Scalar> out(x.rows(), x.cols());
    for (Index i = 0; i < size(); ++i) out.row(i) = x.row(perm_[i]);
    return out;
  }

  /// P X P^T.
  template <typename Derived>
  Mat<typename Derived::Scalar> conjugate(const Eigen::MatrixBase<Derived>& x) const {
    detail::require_square(x, "Permutation::conjugate");
    if (x.rows() != size()) throw ShapeError("Permutation: length mismatch");
    Mat<typename Derived::Scalar> out(x.rows(), x.cols());
    for (Index j = 0; j < size(); ++j)
      for (Index i = 0; i < size(); ++i) out(i, j) = x(perm_[i], perm_[j]);
    return out;
  }

  template <typename T>
  Eigen::Matrix<T, Eigen::Dynamic, 1> permute_vector(
      const Eigen::Matrix<T, Eigen::Dynamic, 1>& v) const {
    if (v.size() != size()) throw ShapeError("Permutation: length mismatch");
    Eigen::Matrix<T, Eigen::Dynamic, 1> out(v.size());
    for (Index i = 0; i < size(); ++i) out(i) = v(perm_[i]);
    return out;
  }

  Mask permute_mask(const Mask& m) const {
    if (m.size() != size()) throw ShapeError("Permutation: length mismatch");
    Mask out(m.size());
    for (Index i = 0; i < size(); ++i) out(i) = m(perm_[i]);
    return out;
  }

  friend bool operator==(const Permutation&, const Permutation&) = default;

private:
  std::vector<Index> perm_;
};

/// Attack budget: Frobenius bound on the feature change, vectorised-l1 bound on the adjacency change.
struct PerturbationBudget {
  double eps_feat = 0.0;
  double eps_adj = 0.0;

  PerturbationBudget() = default;
  PerturbationBudget(double feat, double adj) : eps_feat(feat), eps_adj(adj) {
    if (!(feat >= 0.0) || !(adj >= 0.0)) {
      throw std::invalid_argument("PerturbationBudget: budgets must be nonnegative");
    }
  }
};

/// Number of entries that differ (exact comparison).
template <typename DA, typename DB>
Index l0_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  detail::require_same_shape(a, b, "l0_distance");
  return (a.array() != b.array()).count();
}

/// ||vec(A) - vec(B)||_1.
template <typename DA, typename DB>
typename DA::Scalar l1_vec_distance(const Eigen::MatrixBase<DA>& a,
                                    const Eigen::MatrixBase<DB>& b) {
  detail::require_same_shape(a, b, "l1_vec_distance");
  return (a - b).cwiseAbs().sum();
}

template <typename DA, typename DB>
typename DA::Scalar frobenius_distance(const Eigen::MatrixBase<DA>& a,
                                       const Eigen::MatrixBase<DB>& b) {
  detail::require_same_shape(a, b, "frobenius_distance");
  return (a - b).norm();
}

/// Relabels the nodes: adjacency -> P A P^T, features -> P F, labels and masks alike.
template <typename Scalar>
BasicGraph<Scalar> permute_graph(const BasicGraph<Scalar>& g, const Permutation& p) {
  if (p.size() != g.num_nodes()) throw ShapeError("permute_graph: permutation length mismatch");
  BasicGraph<Scalar> out;
  out.adjacency = p.conjugate(g.adjacency);
  out.features = p.permute_rows(g.features);
  out.labels = p.permute_vector(g.labels);
  out.train_mask = p.permute_mask(g.train_mask);
  out.val_mask = p.permute_mask(g.val_mask);
  out.test_mask = p.permute_mask(g.test_mask);
  out.binary = g.binary;
  return out;
}

/// True when the matrix equals its transpose exactly.
template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a) {
  return a.rows() == a.cols() && a == a.transpose();
}

}  // namespace csgnn

#endif  // CSGNN_GRAPH_HPP
