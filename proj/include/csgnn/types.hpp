#ifndef CSGNN_TYPES_HPP
#define CSGNN_TYPES_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace csgnn {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = Mat<double>;
using Vector = Vec<double>;
using IntVector = Eigen::VectorXi;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Thrown when operand shapes do not agree.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

template <typename A, typename B>
void require_same_shape(const Eigen::EigenBase<A>& a, const Eigen::EigenBase<B>& b,
                        const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(where) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

template <typename A>
void require_square(const Eigen::EigenBase<A>& a, const char* where) {
  if (a.rows() != a.cols()) {
    throw ShapeError(std::string(where) + ": expected a square matrix, got " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

}  // namespace detail
}  // namespace csgnn

#endif  // CSGNN_TYPES_HPP
