#ifndef CSGNN_CHECKPOINT_HPP
#define CSGNN_CHECKPOINT_HPP

#include "csgnn/network.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

namespace csgnn {

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/**
 * Text checkpoint, whitespace separated, every real written as a C hexfloat
 * so loading reproduces the parameters bit for bit. Field order:
 *
 *   csgnn-checkpoint 1
 *   dropout_p <x>
 *   share_weights <0|1>
 *   encoder <rows> <cols> <values, column major>
 *   layers <L>
 *   then per layer:
 *     layer <index>
 *     parameterization <learn_w|learn_k>
 *     feature_h <x>
 *     W <c> <c> <values>
 *     K <c> <c> <values>
 *     k <k2> ... <k9>
 *     alpha <x>
 *     slope_floor <x>
 *     adjacency_h <x>
 *     leaky_slope <x>
 *     policy <checked|unchecked>
 *   classifier <rows> <cols> <values>
 *   bias <size> <values>
 *   end
 */
void save_checkpoint(std::ostream& os, const NetworkParams& params);
void save_checkpoint(const std::filesystem::path& file, const NetworkParams& params);

/// Throws CheckpointError on a malformed or truncated file, or when the parameters fail validation.
NetworkParams load_checkpoint(std::istream& is);
NetworkParams load_checkpoint(const std::filesystem::path& file);

}  // namespace csgnn

#endif  // CSGNN_CHECKPOINT_HPP
