#ifndef CSGNN_FEATURE_DYNAMICS_HPP
#define CSGNN_FEATURE_DYNAMICS_HPP

#include "csgnn/activation.hpp"
#include "csgnn/types.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <vector>

namespace csgnn {

/**
 * Edge-indexed tensor O in R^{n x n x c}, stored as c dense n x n slices.
 * Produced by graph_gradient it is zero wherever A_ij = 0.
 */
template <typename Scalar>
class EdgeTensor {
public:
  EdgeTensor() = default;
  EdgeTensor(Index n, Index c) : slices_(c, Mat<Scalar>::Zero(n, n)), n_(n) {}

  Index nodes() const { return n_; }
  Index channels() const { return static_cast<Index>(slices_.size()); }

  Scalar& operator()(Index i, Index j, Index k) { return slices_[k](i, j); }
  Scalar operator()(Index i, Index j, Index k) const { return slices_[k](i, j); }

  Mat<Scalar>& slice(Index k) { return slices_[k]; }
  const Mat<Scalar>& slice(Index k) const { return slices_[k]; }

  Scalar dot(const EdgeTensor& o) const {
    Scalar s = Scalar(0);
    for (Index k = 0; k < channels(); ++k) s += slices_[k].cwiseProduct(o.slices_[k]).sum();
    return s;
  }
  Scalar squared_norm() const { return dot(*this); }

  template <typename F>
  EdgeTensor map(F&& f) const {
    EdgeTensor out(n_, channels());
    for (Index k = 0; k < channels(); ++k) out.slices_[k] = slices_[k].unaryExpr(f);
    return out;
  }

private:
  std::vector<Mat<Scalar>> slices_;
  Index n_ = 0;
};

/// (G(A)F)_{ijk} = A_ij (F_ik - F_jk).
template <typename DA, typename DF>
EdgeTensor<typename DA::Scalar> graph_gradient(const Eigen::MatrixBase<DA>& a,
                                               const Eigen::MatrixBase<DF>& f) {
  using Scalar = typename DA::Scalar;
  detail::require_square(a, "graph_gradient");
  if (f.rows() != a.rows()) throw ShapeError("graph_gradient: features must have n rows");
  const Index n = a.rows();
  EdgeTensor<Scalar> out(n, f.cols());
  const auto ones = Vec<Scalar>::Ones(n);
  for (Index k = 0; k < f.cols(); ++k) {
    out.slice(k) = a.cwiseProduct(f.col(k) * ones.transpose() - ones * f.col(k).transpose());
  }
  return out;
}

/// (G(A)^T O)_{ik} = sum_j A_ij O_ijk - A_ji O_jik.
template <typename DA>
Mat<typename DA::Scalar> graph_gradient_adjoint(const Eigen::MatrixBase<DA>& a,
                                                const EdgeTensor<typename DA::Scalar>& o) {
  using Scalar = typename DA::Scalar;
  detail::require_square(a, "graph_gradient_adjoint");
  if (o.nodes() != a.rows()) throw ShapeError("graph_gradient_adjoint: tensor/adjacency mismatch");
  Mat<Scalar> out(a.rows(), o.channels());
  for (Index k = 0; k < o.channels(); ++k) {
    const Mat<Scalar> weighted = a.cwiseProduct(o.slice(k));
    out.col(k) = weighted.rowwise().sum() - weighted.colwise().sum().transpose();
  }
  return out;
}

enum class Parameterization {
  LearnW_IdentityK,  ///< W learned, K fixed to lambda * I
  IdentityW_LearnK,  ///< W = I, K learned
};

/**
 * Parameters of one node-feature Euler step
 *   F <- F - h (G(A)^T sigma(G(A) F W) W^T) K~,   K~ = (K + K^T) / 2.
 * W and K are c x c. K is stored raw; symmetrisation happens on use.
 */
template <typename Scalar>
struct LayerParams {
  Mat<Scalar> W;
  Mat<Scalar> K;
  Scalar h = Scalar(0);
  Parameterization parameterization = Parameterization::IdentityW_LearnK;

  static LayerParams learn_w(Mat<Scalar> w, Scalar h, Scalar lambda = Scalar(1)) {
    LayerParams p;
    p.K = lambda * Mat<Scalar>::Identity(w.rows(), w.rows());
    p.W = std::move(w);
    p.h = h;
    p.parameterization = Parameterization::LearnW_IdentityK;
    p.validate();
    return p;
  }

  static LayerParams learn_k(Mat<Scalar> k, Scalar h) {
    LayerParams p;
    p.W = Mat<Scalar>::Identity(k.rows(), k.rows());
    p.K = std::move(k);
    p.h = h;
    p.parameterization = Parameterization::IdentityW_LearnK;
    p.validate();
    return p;
  }

  Index channels() const { return W.rows(); }
  Mat<Scalar> K_sym() const { return (K + K.transpose()) / Scalar(2); }

  /// lambda when K is a positive multiple of the identity, 0 otherwise.
  Scalar k_scale() const {
    const Index c = K.rows();
    const Scalar lambda = c > 0 ? K(0, 0) : Scalar(0);
    return (K - lambda * Mat<Scalar>::Identity(c, c)).isZero(Scalar(0)) && lambda > Scalar(0)
               ? lambda
               : Scalar(0);
  }

  void validate() const {
    if (W.rows() != W.cols() || K.rows() != K.cols() || W.rows() != K.rows()) {
      throw ShapeError("LayerParams: W and K must both be c x c");
    }
    if (!(h >= Scalar(0)) || !std::isfinite(h)) {
      throw std::invalid_argument("LayerParams: h must be finite and >= 0");
    }
    if (parameterization == Parameterization::IdentityW_LearnK) {
      if (W != Mat<Scalar>::Identity(W.rows(), W.cols())) {
        throw std::invalid_argument("LayerParams: IdentityW_LearnK requires W = I");
      }
    } else if (k_scale() <= Scalar(0)) {
      throw std::invalid_argument("LayerParams: LearnW_IdentityK requires K = lambda I, lambda > 0");
    }
  }
};

/// X(F, A) = -(G(A)^T sigma(G(A) F W) W^T) K~.
template <typename DF, typename DA>
Mat<typename DF::Scalar> feature_field(const Eigen::MatrixBase<DF>& f,
                                       const Eigen::MatrixBase<DA>& a,
                                       const LayerParams<typename DF::Scalar>& p,
                                       const LeakyRelu<typename DF::Scalar>& act) {
  using Scalar = typename DF::Scalar;
  if (f.cols() != p.W.rows()) throw ShapeError("feature_step: feature width does not match W");
  const Mat<Scalar> fw = f * p.W;
  const auto z = graph_gradient(a, fw);
  const auto s = z.map([&act](Scalar v) { return act(v); });
  return -(graph_gradient_adjoint(a, s) * p.W.transpose()) * p.K_sym();
}

/// One explicit Euler step of the node-feature dynamics.
template <typename DF, typename DA>
Mat<typename DF::Scalar> feature_step(const Eigen::MatrixBase<DF>& f,
                                      const Eigen::MatrixBase<DA>& a,
                                      const LayerParams<typename DF::Scalar>& p,
                                      const LeakyRelu<typename DF::Scalar>& act = {}) {
  if (!std::isfinite(p.h)) throw std::invalid_argument("feature_step: h must be finite");
  if (p.h == typename DF::Scalar(0)) return f;
  return f + p.h * feature_field(f, a, p, act);
}

/// E_A(F) = sum of gamma(G(A) F W) over all entries, gamma' = sigma, gamma(0) = 0.
template <typename DA, typename DF, typename DW>
typename DF::Scalar energy(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DF>& f,
                           const Eigen::MatrixBase<DW>& w,
                           const LeakyRelu<typename DF::Scalar>& act = {}) {
  using Scalar = typename DF::Scalar;
  if (f.cols() != w.rows()) throw ShapeError("energy: feature width does not match W");
  const auto z = graph_gradient(a, f * w);
  Scalar e = Scalar(0);
  for (Index k = 0; k < z.channels(); ++k) {
    e += z.slice(k).unaryExpr([&act](Scalar v) { return act.antiderivative(v); }).sum();
  }
  return e;
}

/// ||step(F + dF) - step(F)||_F <= ||dF||_F + slack.
template <typename Scalar>
bool check_feature_contraction(const Mat<Scalar>& f, const Mat<Scalar>& df, const Mat<Scalar>& a,
                               const LayerParams<Scalar>& p, const LeakyRelu<Scalar>& act = {},
                               Scalar slack = Scalar(1e-9)) {
  detail::require_same_shape(f, df, "check_feature_contraction");
  const Mat<Scalar> f2 = f + df;
  return (feature_step(f2, a, p, act) - feature_step(f, a, p, act)).norm() <= df.norm() + slack;
}

/// Result of the step-size analysis for one feature layer.
template <typename Scalar>
struct FeatureStepBound {
  Scalar gradient_lipschitz = Scalar(0);  ///< ||F -> G(A)(FW)||_2^2
  Scalar lambda_est = Scalar(0);          ///< Lipschitz estimate of the field X(., A)
  Scalar h_safe = std::numeric_limits<Scalar>::infinity();
};

/**
 * ||B||_2^2 for B: F -> G(A)(F W). Since G(A)^T G(A) F = 2 L_S F with L_S the
 * Laplacian of S = (A o A + (A o A)^T) / 2, this is lambda_max(2 L_S) ||W||_2^2.
 * It is the Lipschitz constant of grad E_A with sigma' replaced by its upper
 * bound 1. lambda_max is exact for n <= kExactSpectrumNodes; above that the
 * Gershgorin bound 2 max_i (2 L_S)_ii is used, which is at most twice too large.
 */
inline constexpr Index kExactSpectrumNodes = 400;

template <typename Scalar>
Scalar gradient_operator_norm_sq(const Mat<Scalar>& a, const Mat<Scalar>& w) {
  detail::require_square(a, "gradient_operator_norm_sq");
  const Index n = a.rows(), c = w.rows();
  if (n == 0 || c == 0) return Scalar(0);
  Mat<Scalar> s = a.cwiseAbs2();
  s = (s + s.transpose()).eval();  // 2 S
  s.diagonal().setZero();
  Mat<Scalar> lap = -s;
  lap.diagonal() = s.rowwise().sum();  // 2 L_S

  Scalar lambda = Scalar(0);
  if (n <= kExactSpectrumNodes) {
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(lap, Eigen::EigenvaluesOnly);
    lambda = es.eigenvalues().maxCoeff();
  } else {
    lambda = Scalar(2) * lap.diagonal().maxCoeff();  // Gershgorin
  }
  Eigen::JacobiSVD<Mat<Scalar>> svd(w);
  const Scalar w_norm = svd.singularValues()(0);
  return std::max(lambda, Scalar(0)) * w_norm * w_norm;
}

/**
 * h_safe = 1 / (lambda_est + eps), with lambda_est = ||B||^2 ||K~|| max(1, cond K~)
 * when K~ is positive definite, ||B||^2 ||K~|| otherwise. For K = lambda I this is
 * lambda ||B||^2, half the step at which Euler on a convex, ||B||^2-smooth energy
 * stops being nonexpansive.
 */
template <typename Scalar>
FeatureStepBound<Scalar> feature_step_bound(const Mat<Scalar>& a, const LayerParams<Scalar>& p,
                                            Scalar eps = Scalar(1e-12)) {
  FeatureStepBound<Scalar> out;
  out.gradient_lipschitz = gradient_operator_norm_sq(a, p.W);
  const Mat<Scalar> ks = p.K_sym();
  Scalar k_norm = Scalar(0), cond = Scalar(1);
  if (ks.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(ks, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    k_norm = ev.cwiseAbs().maxCoeff();
    if (ev.minCoeff() > Scalar(0)) cond = ev.maxCoeff() / ev.minCoeff();
  }
  out.lambda_est = out.gradient_lipschitz * k_norm * std::max(Scalar(1), cond);
  out.h_safe = out.lambda_est == Scalar(0) ? std::numeric_limits<Scalar>::infinity()
                                           : Scalar(1) / (out.lambda_est + eps);
  return out;
}

}  // namespace csgnn

#endif  // CSGNN_FEATURE_DYNAMICS_HPP
