#pragma once

#include <cstdint>
#include <vector>

#include "curec/rng.hpp"
#include "curec/tensor.hpp"

namespace curec {

// Learnable bank of K query vectors.
struct QueryBank {
  Tensor q0;  // [K x D]

  static QueryBank init(int64_t slots, int64_t dim, Rng& rng, double stddev);
  void set_trainable(bool on) { q0.set_requires_grad(on); }
  int64_t slots() const { return q0.extent(0); }
  int64_t dim() const { return q0.extent(1); }
};

struct AttentionWeights {
  Tensor wq, wk, wv;  // all [D x D]
};

// Two residual cross-attention stages with separate projections per layer:
// the entity stage attends to graph embeddings, the text stage to the
// dialogue CLS vector (or all token embeddings, behind a config switch).
struct CrossAttentionStack {
  std::vector<AttentionWeights> entity_stage;
  std::vector<AttentionWeights> text_stage;

  static CrossAttentionStack init(int64_t layers, int64_t dim, Rng& rng);
  void set_trainable(bool on);
  int64_t layers() const { return static_cast<int64_t>(entity_stage.size()); }
};

// Softmax(Q Wq (H Wk)^T / sqrt(D)) . (H Wv), not residual-added. When
// `probs_out` is given it receives the attention matrix [K x M].
Tensor cross_attention(const Tensor& queries, const Tensor& keys, const AttentionWeights& w,
                       Tensor* probs_out = nullptr);

// Q^{l+1} = Q^l + Attention(Q^l, entity_embs), starting from the bank.
Tensor entity_stage(const QueryBank& bank, const CrossAttentionStack& stack,
                    const Tensor& entity_embs);

// Same residual form over the text keys, starting from Q_e.
Tensor text_stage(const CrossAttentionStack& stack, const Tensor& q_e, const Tensor& text_keys);

struct FusedSample {
  Tensor q_e;     // [K x D]
  Tensor q_t;     // [K x D]
  Tensor q;       // (q_e + q_t) / 2
  Tensor pooled;  // [D], mean over the K slots
};

FusedSample fuse(const Tensor& q_e, const Tensor& q_t);

}  // namespace curec
