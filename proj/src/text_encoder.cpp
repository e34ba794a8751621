#include "curec/text_encoder.hpp"

#include <cmath>

#include "curec/common.hpp"
#include "curec/rng.hpp"

namespace curec {

Tensor sinusoidal_positions(int64_t len, int64_t dim) {
  Tensor pos = Tensor::zeros({len, dim});
  for (int64_t p = 0; p < len; ++p) {
    for (int64_t i = 0; i < dim; i += 2) {
      const double angle =
          static_cast<double>(p) /
          std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      pos.data()[static_cast<size_t>(p * dim + i)] = std::sin(angle);
      if (i + 1 < dim) pos.data()[static_cast<size_t>(p * dim + i + 1)] = std::cos(angle);
    }
  }
  return pos;
}

std::string hash_tensors(const std::vector<Tensor>& tensors) {
  std::vector<double> bytes;
  for (const auto& t : tensors) bytes.insert(bytes.end(), t.data().begin(), t.data().end());
  return sha256_hex(bytes.data(), bytes.size() * sizeof(double));
}

FrozenTextEncoder::FrozenTextEncoder(int64_t vocab_size, int64_t dim, int64_t max_len,
                                     uint64_t seed)
    : dim_(dim), max_len_(max_len) {
  Rng rng = Rng(seed).fork(0xE11C0DE);
  const double std_w = 1.0 / std::sqrt(static_cast<double>(dim));
  embeddings_ = Tensor::randn({vocab_size, dim}, rng, 0.5);
  wq_ = Tensor::randn({dim, dim}, rng, std_w);
  wk_ = Tensor::randn({dim, dim}, rng, std_w);
  wv_ = Tensor::randn({dim, dim}, rng, std_w);
  wo_ = Tensor::randn({dim, dim}, rng, std_w);
  ff1_ = Tensor::randn({dim, dim * 2}, rng, std_w);
  ff2_ = Tensor::randn({dim * 2, dim}, rng, std_w / 2.0);
  ff1_b_ = Tensor::zeros({dim * 2});
  ff2_b_ = Tensor::zeros({dim});
  positions_ = sinusoidal_positions(max_len, dim);
}

FrozenTextEncoder::Encoding FrozenTextEncoder::encode(const std::vector<int64_t>& ids) const {
  if (ids.empty()) throw DataError("text encoder: empty context");
  // truncate from the left: the most recent tokens stay
  std::vector<int64_t> rows;
  const int64_t keep = max_len_ - 1;
  const int64_t start = static_cast<int64_t>(ids.size()) > keep
                            ? static_cast<int64_t>(ids.size()) - keep
                            : 0;
  rows.push_back(3 /* CLS id by vocabulary convention */);
  for (size_t i = static_cast<size_t>(start); i < ids.size(); ++i) rows.push_back(ids[i]);

  Tensor x = gather_rows(embeddings_, rows);
  const int64_t len = x.extent(0);
  x = add(x, slice_rows(positions_, 0, len));

  // single-head self attention with residual
  Tensor q = matmul(x, wq_);
  Tensor k = matmul(x, wk_);
  Tensor v = matmul(x, wv_);
  Tensor logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dim_)));
  Tensor attn = softmax_rows(logits);
  x = add(x, matmul(matmul(attn, v), wo_));
  // feed-forward with residual
  Tensor hidden = relu(add_rows(matmul(x, ff1_), ff1_b_));
  x = add(x, add_rows(matmul(hidden, ff2_), ff2_b_));

  Tensor cls = reshape(slice_rows(x, 0, 1), {dim_});
  return {x, cls};
}

std::string FrozenTextEncoder::params_hash() const {
  return hash_tensors({embeddings_, wq_, wk_, wv_, wo_, ff1_, ff2_, ff1_b_, ff2_b_, positions_});
}

}  // namespace curec
