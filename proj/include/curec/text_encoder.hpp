#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curec/tensor.hpp"

namespace curec {

// Frozen stand-in for a pretrained text encoder: token embeddings, sinusoidal
// positions, and one self-attention block with seed-pinned random weights.
// Outputs never carry gradients; the parameter bytes are part of the
// frozen-model contract and can be hashed for verification.
class FrozenTextEncoder {
 public:
  struct Encoding {
    Tensor tokens;  // [L x D], position 0 is the prepended CLS
    Tensor cls;     // [D]
  };

  FrozenTextEncoder(int64_t vocab_size, int64_t dim, int64_t max_len, uint64_t seed);

  // Prepends CLS, truncates from the left to max_len, runs the block.
  Encoding encode(const std::vector<int64_t>& token_ids) const;

  int64_t dim() const { return dim_; }
  int64_t max_len() const { return max_len_; }
  std::string params_hash() const;

 private:
  int64_t dim_;
  int64_t max_len_;
  Tensor embeddings_;  // [V x D]
  Tensor wq_, wk_, wv_, wo_;
  Tensor ff1_, ff2_;
  Tensor ff1_b_, ff2_b_;
  Tensor positions_;  // [max_len x D]
};

// [len x D] sinusoidal position table.
Tensor sinusoidal_positions(int64_t len, int64_t dim);

// SHA-256 over the concatenated bytes of a tensor list (frozen contracts,
// change detection for trainables).
std::string hash_tensors(const std::vector<Tensor>& tensors);

}  // namespace curec
