#ifndef CSGNN_VERIFY_HPP
#define CSGNN_VERIFY_HPP

#include "csgnn/training.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace csgnn {

/// Outcome of one randomized property suite.
struct SuiteResult {
  std::string id;
  std::string property;
  long trials = 0;
  long violations = 0;
  double worst_slack = 0.0;  ///< max over trials of (measured - allowed); <= tolerance means pass
  double tolerance = 0.0;

  bool passed() const { return violations == 0; }
};

/// Deliberate misconfigurations used to check that the suites can fail.
enum class Fault {
  None,
  AdjacencyStepAboveCeiling,  ///< adjacency h = 2.5 h_hat
  FeatureStepAboveSafe,       ///< feature h = 1000 h_safe
};

Fault parse_fault(const std::string& s);
std::string to_string(Fault f);

struct VerifyOptions {
  std::uint64_t seed = 0;
  double leaky_slope = 0.1;
  K1Rule k1_rule = K1Rule::Standard;
  Fault fault = Fault::None;
};

/**
 * Runs every property suite: adjacency_contraction, adjacency_equivariance,
 * adjacency_symmetry, t_matrix_structure, t_matrix_offdiag_bound,
 * adjacency_jacobian, feature_contraction, energy_descent,
 * graph_gradient_adjoint, expansivity_bound. Deterministic given the options.
 */
std::vector<SuiteResult> run_verification(const VerifyOptions& opts);

/// One line per suite plus a summary line. Returns true iff every suite passed.
bool write_verify_report(std::ostream& os, const std::vector<SuiteResult>& results);

}  // namespace csgnn

#endif  // CSGNN_VERIFY_HPP
