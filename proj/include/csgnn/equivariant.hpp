#ifndef CSGNN_EQUIVARIANT_HPP
#define CSGNN_EQUIVARIANT_HPP

#include "csgnn/activation.hpp"
#include "csgnn/types.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace csgnn {

/**
 * Coefficients of the nine-term permutation-equivariant, symmetry-preserving
 * linear map M on n x n matrices.
 *
 * Only k2..k9 and the margin alpha <= 0 are stored. The identity coefficient
 * is always derived: k1 = (alpha - sum_{i>=2} |k_i|) / slope_floor.
 *
 * slope_floor = 1 gives the standard rule k1 = alpha - sum |k_i|. That rule
 * only yields an l1-contractive step when sigma' is identical on every entry
 * (e.g. sigma linear); with LeakyReLU of slope a < 1 the column sums of
 * I + h diag(sigma') T can exceed one. Setting slope_floor = a (the smallest
 * value sigma' takes) restores contraction for h <= max_step_adjacency.
 */
template <typename Scalar>
struct EquivariantCoeffs {
  using Coeffs = Eigen::Matrix<Scalar, 8, 1>;

  Coeffs k = Coeffs::Zero();  ///< k(0) is k2, ..., k(7) is k9.
  Scalar alpha = Scalar(0);
  Scalar slope_floor = Scalar(1);

  EquivariantCoeffs() = default;
  EquivariantCoeffs(const Coeffs& k2_to_k9, Scalar margin, Scalar floor = Scalar(1))
      : k(k2_to_k9), alpha(margin), slope_floor(floor) {
    validate();
  }

  void validate() const {
    if (!(alpha <= Scalar(0))) throw std::invalid_argument("EquivariantCoeffs: alpha must be <= 0");
    if (!k.allFinite()) throw std::invalid_argument("EquivariantCoeffs: non-finite coefficient");
    if (!(slope_floor > Scalar(0)) || slope_floor > Scalar(1)) {
      throw std::invalid_argument("EquivariantCoeffs: slope_floor must lie in (0, 1]");
    }
  }

  Scalar abs_sum() const { return k.cwiseAbs().sum(); }
  Scalar k1() const { return (alpha - abs_sum()) / slope_floor; }

  /// Coefficient i in 1..9.
  Scalar coefficient(int i) const { return i == 1 ? k1() : k(i - 2); }

  std::array<Scalar, 9> full() const {
    std::array<Scalar, 9> out{};
    for (int i = 1; i <= 9; ++i) out[i - 1] = coefficient(i);
    return out;
  }

  bool is_zero_map() const { return alpha == Scalar(0) && abs_sum() == Scalar(0); }
};

/// The step-size ceiling does not exist (every coefficient and alpha are zero).
class UnboundedStep : public std::domain_error {
public:
  UnboundedStep() : std::domain_error("unbounded step: all coefficients and alpha are zero") {}
};

/// Finite-difference probe landed on (or next to) an activation kink.
class NonSmoothPoint : public std::domain_error {
public:
  NonSmoothPoint() : std::domain_error("non-smooth point: pre-activation at an activation kink") {}
};

enum class StepPolicy {
  Checked,    ///< reject h above the contractive ceiling
  Unchecked,  ///< allow any h >= 0 (fault injection, necessity demonstrations)
};

template <typename Scalar>
struct AdjacencyStepConfig {
  EquivariantCoeffs<Scalar> coeffs;
  Scalar h = Scalar(0);
  LeakyRelu<Scalar> activation;
  StepPolicy policy = StepPolicy::Checked;
};

/**
 * B_i(A) for i in 1..9, the i-th basis map of M, so that
 * M(A) = sum_i k_i B_i(A).
 */
template <typename Derived>
Mat<typename Derived::Scalar> basis_term(const Eigen::MatrixBase<Derived>& a, int i) {
  using Scalar = typename Derived::Scalar;
  detail::require_square(a, "basis_term");
  const Index n = a.rows();
  const Scalar nn = Scalar(n);
  const Mat<Scalar> ones = Mat<Scalar>::Ones(n, n);
  const Mat<Scalar> eye = Mat<Scalar>::Identity(n, n);
  switch (i) {
    case 1:
      return a;
    case 2:
      return a.diagonal().asDiagonal();
    case 3: {
      const Vec<Scalar> r = a.rowwise().sum();
      const Vec<Scalar> c = a.colwise().sum().transpose();
      return (r * Vec<Scalar>::Ones(n).transpose() + Vec<Scalar>::Ones(n) * c.transpose()) /
             (Scalar(2) * nn);
    }
    case 4:
      return Vec<Scalar>(a.rowwise().sum()).asDiagonal();
    case 5:
      return a.sum() / (nn * nn) * ones;
    case 6:
      return a.sum() / nn * eye;
    case 7:
      return a.trace() / (nn * nn) * ones;
    case 8:
      return a.trace() / nn * eye;
    case 9: {
      const Vec<Scalar> d = a.diagonal();
      return (d * Vec<Scalar>::Ones(n).transpose() + Vec<Scalar>::Ones(n) * d.transpose()) /
             (Scalar(2) * nn);
    }
    default:
      throw std::out_of_range("basis_term: index must be in 1..9");
  }
}

/// Adjoint of B_i under the Frobenius inner product: <B_i(A), G> = <A, B_i^*(G)>.
template <typename Derived>
Mat<typename Derived::Scalar> basis_term_adjoint(const Eigen::MatrixBase<Derived>& g, int i) {
  using Scalar = typename Derived::Scalar;
  detail::require_square(g, "basis_term_adjoint");
  const Index n = g.rows();
  const Scalar nn = Scalar(n);
  switch (i) {
    case 4:
      return g.diagonal() * Vec<Scalar>::Ones(n).transpose();
    case 6:
      return g.trace() / nn * Mat<Scalar>::Ones(n, n);
    case 7:
      return g.sum() / (nn * nn) * Mat<Scalar>::Identity(n, n);
    case 9: {
      const Vec<Scalar> s = g.rowwise().sum() + g.colwise().sum().transpose();
      return Vec<Scalar>(s / (Scalar(2) * nn)).asDiagonal();
    }
    default:
      return basis_term(g, i);  // self-adjoint terms
  }
}

namespace detail {

/// M(A) for an arbitrary 9-vector k (k1 not tied to alpha). Test harness use only.
template <typename Derived, typename Scalar = typename Derived::Scalar>
Mat<Scalar> apply_basis(const Eigen::MatrixBase<Derived>& a, const std::array<Scalar, 9>& k) {
  detail::require_square(a, "equivariant_linear");
  if (a.rows() < 1) throw ShapeError("equivariant_linear: empty matrix");
  Mat<Scalar> out = Mat<Scalar>::Zero(a.rows(), a.cols());
  for (int i = 1; i <= 9; ++i) {
    if (k[i - 1] != Scalar(0)) out.noalias() += k[i - 1] * basis_term(a, i);
  }
  return out;
}

template <typename Derived, typename Scalar = typename Derived::Scalar>
Mat<Scalar> apply_basis_adjoint(const Eigen::MatrixBase<Derived>& g,
                                const std::array<Scalar, 9>& k) {
  detail::require_square(g, "equivariant_linear_adjoint");
  Mat<Scalar> out = Mat<Scalar>::Zero(g.rows(), g.cols());
  for (int i = 1; i <= 9; ++i) {
    if (k[i - 1] != Scalar(0)) out.noalias() += k[i - 1] * basis_term_adjoint(g, i);
  }
  return out;
}

/// T += scale * kron(X, Y), skipping zero entries of X.
template <typename Scalar>
void add_kron(Mat<Scalar>& t, Scalar scale, const Mat<Scalar>& x, const Mat<Scalar>& y) {
  const Index br = y.rows(), bc = y.cols();
  for (Index b = 0; b < x.cols(); ++b)
    for (Index a = 0; a < x.rows(); ++a)
      if (x(a, b) != Scalar(0)) t.block(a * br, b * bc, br, bc) += (scale * x(a, b)) * y;
}

inline constexpr Index kMaxTMatrixNodes = 64;

/// Dense T with vec(M(A)) = T vec(A) (column-major vec), assembled from Kronecker products.
template <typename Scalar>
Mat<Scalar> build_T_raw(const std::array<Scalar, 9>& k, Index n) {
  if (n < 1 || n > kMaxTMatrixNodes) {
    throw std::invalid_argument("build_T: n must lie in 1.." + std::to_string(kMaxTMatrixNodes));
  }
  using M = Mat<Scalar>;
  const Scalar nn = Scalar(n);
  const Index n2 = n * n;
  const M eye = M::Identity(n, n);
  const M ones = M::Ones(n, n);
  auto unit = [n](Index i, Index j) {
    M e = M::Zero(n, n);
    e(i, j) = Scalar(1);
    return e;
  };
  auto e_ones_row = [n](Index i) {  // e_i 1^T
    M e = M::Zero(n, n);
    e.row(i).setOnes();
    return e;
  };
  auto ones_e_col = [n](Index i) {  // 1 e_i^T
    M e = M::Zero(n, n);
    e.col(i).setOnes();
    return e;
  };

  M t = k[0] * M::Identity(n2, n2);
  const Scalar k2 = k[1], k3 = k[2], k4 = k[3], k5 = k[4], k6 = k[5], k7 = k[6], k8 = k[7],
               k9 = k[8];
  if (k3 != Scalar(0)) {
    add_kron<Scalar>(t, k3 / (Scalar(2) * nn), ones, eye);
    add_kron<Scalar>(t, k3 / (Scalar(2) * nn), eye, ones);
  }
  if (k5 != Scalar(0)) add_kron<Scalar>(t, k5 / (nn * nn), ones, ones);
  for (Index i = 0; i < n; ++i) {
    const M eii = unit(i, i);
    if (k2 != Scalar(0)) add_kron<Scalar>(t, k2, eii, eii);
    if (k4 != Scalar(0)) add_kron<Scalar>(t, k4, e_ones_row(i), eii);
    if (k6 != Scalar(0)) add_kron<Scalar>(t, k6 / nn, e_ones_row(i), e_ones_row(i));
    if (k7 != Scalar(0)) add_kron<Scalar>(t, k7 / (nn * nn), ones_e_col(i), ones_e_col(i));
    if (k8 != Scalar(0)) {
      for (Index j = 0; j < n; ++j) add_kron<Scalar>(t, k8 / nn, unit(j, i), unit(j, i));
    }
    if (k9 != Scalar(0)) {
      add_kron<Scalar>(t, k9 / (Scalar(2) * nn), ones_e_col(i), eii);
      add_kron<Scalar>(t, k9 / (Scalar(2) * nn), eii, ones_e_col(i));
    }
  }
  return t;
}

}  // namespace detail

/// M(A) evaluated term by term with the derived k1.
template <typename Derived>
Mat<typename Derived::Scalar> equivariant_linear(
    const Eigen::MatrixBase<Derived>& a, const EquivariantCoeffs<typename Derived::Scalar>& c) {
  return detail::apply_basis(a, c.full());
}

/// M^*(G), the Frobenius adjoint of M.
template <typename Derived>
Mat<typename Derived::Scalar> equivariant_linear_adjoint(
    const Eigen::MatrixBase<Derived>& g, const EquivariantCoeffs<typename Derived::Scalar>& c) {
  return detail::apply_basis_adjoint(g, c.full());
}

/// The n^2 x n^2 matrix of M acting on column-major vec(A). Requires n <= 64.
template <typename Scalar>
Mat<Scalar> build_T(const EquivariantCoeffs<Scalar>& c, Index n) {
  return detail::build_T_raw(c.full(), n);
}

/// Matrix l1 norm: maximum absolute column sum.
template <typename Derived>
typename Derived::Scalar operator_l1_norm(const Eigen::MatrixBase<Derived>& t) {
  if (t.size() == 0) return typename Derived::Scalar(0);
  return t.cwiseAbs().colwise().sum().maxCoeff();
}

/**
 * Step ceiling 2 / (S + |k1|) with S = sum_{i>=2} |k_i|, i.e. 2 / (2S - alpha)
 * under the standard rule. Throws UnboundedStep for the zero map.
 */
template <typename Scalar>
Scalar max_step_adjacency(const EquivariantCoeffs<Scalar>& c) {
  c.validate();
  const Scalar denom = c.abs_sum() - c.k1();
  if (denom == Scalar(0)) throw UnboundedStep();
  return Scalar(2) / denom;
}

/// Ceiling or +inf for the zero map.
template <typename Scalar>
Scalar step_ceiling_or_inf(const EquivariantCoeffs<Scalar>& c) {
  return c.is_zero_map() ? std::numeric_limits<Scalar>::infinity() : max_step_adjacency(c);
}

template <typename Scalar>
void check_adjacency_step(const AdjacencyStepConfig<Scalar>& cfg) {
  cfg.coeffs.validate();
  if (!(cfg.h >= Scalar(0))) throw std::invalid_argument("adjacency_step: h must be >= 0");
  if (cfg.policy == StepPolicy::Checked) {
    const Scalar ceiling = step_ceiling_or_inf(cfg.coeffs);
    const Scalar rel = Scalar(64) * std::numeric_limits<Scalar>::epsilon();
    if (cfg.h > ceiling * (Scalar(1) + rel)) {
      throw std::domain_error("adjacency_step: h exceeds the contractive ceiling");
    }
  }
}

/// One explicit Euler step A + h sigma(M(A)).
template <typename Derived>
Mat<typename Derived::Scalar> adjacency_step(
    const Eigen::MatrixBase<Derived>& a, const AdjacencyStepConfig<typename Derived::Scalar>& cfg) {
  detail::require_square(a, "adjacency_step");
  check_adjacency_step(cfg);
  return a + cfg.h * cfg.activation.apply(equivariant_linear(a, cfg.coeffs));
}

/// Exact Jacobian of the vectorised step, I + h diag(sigma'(T a)) T. Small n only.
template <typename Derived>
Mat<typename Derived::Scalar> adjacency_step_jacobian(
    const Eigen::MatrixBase<Derived>& a, const AdjacencyStepConfig<typename Derived::Scalar>& cfg) {
  using Scalar = typename Derived::Scalar;
  detail::require_square(a, "adjacency_step_jacobian");
  const Index n = a.rows();
  const Mat<Scalar> t = build_T(cfg.coeffs, n);
  const Mat<Scalar> pre = equivariant_linear(a, cfg.coeffs);
  const Vec<Scalar> d = cfg.activation.derivative(pre).reshaped();
  return Mat<Scalar>::Identity(n * n, n * n) + cfg.h * d.asDiagonal() * t;
}

/**
 * l1 operator norm of the step map's Jacobian, estimated by central finite
 * differences (step 1e-5). Rejects points where some |M(A)| entry is below
 * 1e-6, where the activation is not differentiable.
 */
template <typename Derived>
typename Derived::Scalar jacobian_l1_probe(
    const Eigen::MatrixBase<Derived>& a, const AdjacencyStepConfig<typename Derived::Scalar>& cfg,
    typename Derived::Scalar fd_step = typename Derived::Scalar(1e-5),
    typename Derived::Scalar kink_tol = typename Derived::Scalar(1e-6)) {
  using Scalar = typename Derived::Scalar;
  detail::require_square(a, "jacobian_l1_probe");
  check_adjacency_step(cfg);
  if (cfg.coeffs.is_zero_map()) return Scalar(1);  // the field vanishes, Jacobian is I
  const Mat<Scalar> pre = equivariant_linear(a, cfg.coeffs);
  if (pre.cwiseAbs().minCoeff() < kink_tol) throw NonSmoothPoint();

  const Index n = a.rows();
  Mat<Scalar> base = a;
  Scalar worst = Scalar(0);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      Mat<Scalar> plus = base, minus = base;
      plus(i, j) += fd_step;
      minus(i, j) -= fd_step;
      const Scalar col = ((adjacency_step(plus, cfg) - adjacency_step(minus, cfg)) /
                          (Scalar(2) * fd_step))
                             .cwiseAbs()
                             .sum();
      worst = std::max(worst, col);
    }
  }
  return worst;
}

}  // namespace csgnn

#endif  // CSGNN_EQUIVARIANT_HPP
