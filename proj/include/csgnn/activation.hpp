#ifndef CSGNN_ACTIVATION_HPP
#define CSGNN_ACTIVATION_HPP

#include "csgnn/types.hpp"

namespace csgnn {

/**
 * LeakyReLU with negative slope in (0, 1]. Its derivative lies in [slope, 1],
 * which is inside the [0, 1] range both contraction results need. Slope 1 is
 * the identity and is used for hand-checkable cases.
 */
template <typename Scalar>
struct LeakyRelu {
  Scalar slope = Scalar(0.1);

  LeakyRelu() = default;
  explicit LeakyRelu(Scalar s) : slope(s) {
    if (!(s > Scalar(0)) || s > Scalar(1)) {
      throw std::invalid_argument("LeakyRelu: slope must lie in (0, 1]");
    }
  }

  Scalar operator()(Scalar s) const { return s >= Scalar(0) ? s : slope * s; }
  Scalar derivative(Scalar s) const { return s >= Scalar(0) ? Scalar(1) : slope; }
  /// gamma with gamma' = sigma and gamma(0) = 0.
  Scalar antiderivative(Scalar s) const {
    return s >= Scalar(0) ? s * s / Scalar(2) : slope * s * s / Scalar(2);
  }

  template <typename Derived>
  Mat<Scalar> apply(const Eigen::MatrixBase<Derived>& x) const {
    return x.unaryExpr([this](Scalar s) { return (*this)(s); });
  }
  template <typename Derived>
  Mat<Scalar> derivative(const Eigen::MatrixBase<Derived>& x) const {
    return x.unaryExpr([this](Scalar s) { return derivative(s); });
  }
};

}  // namespace csgnn

#endif  // CSGNN_ACTIVATION_HPP
