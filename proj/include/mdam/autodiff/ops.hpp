#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mdam/autodiff/tensor.hpp"

namespace mdam::ad {

/// Row-of-flags mask; nonzero means "forbidden / masked out".
using Mask = std::span<const std::uint8_t>;

Tensor matmul(const Tensor& a, const Tensor& b);
/// x·W (+ b broadcast over rows). `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor());

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
/// Mean over consecutive groups of `block` rows: [g·block × d] -> [g × d].
Tensor block_mean(const Tensor& a, std::size_t block);

/// Per-instance, per-head scaled dot products.
///
/// q is [batch·nq × d], k is [batch·nk × d], heads split the columns into
/// equal slices. The result is [batch·heads·nq × nk] with row
/// ((b·heads + h)·nq + i) holding scale·<q_{b,i}^h, k_{b,j}^h> over j.
Tensor attention_scores(const Tensor& q, const Tensor& k, std::size_t batch, std::size_t heads,
                        double scale);

/// Softmax of raw scores over the unmasked keys followed by the weighted
/// sum of values, per instance and head.
///
/// scores comes from attention_scores; v is [batch·nk × d]. key_mask is
/// either empty or batch·nk flags shared by every query row and head of
/// an instance. Output is [batch·nq × d] with head h in columns
/// [h·d/heads, (h+1)·d/heads). Throws InfeasibleError if an instance has
/// every key masked.
Tensor masked_attend(const Tensor& scores, const Tensor& v, Mask key_mask, std::size_t batch,
                     std::size_t heads);

/// Row-wise log-softmax over unmasked entries; masked entries are -inf.
Tensor masked_log_softmax(const Tensor& logits, Mask mask);
/// out[b] = a[b, index[b]] as a [rows × 1] tensor.
Tensor pick(const Tensor& a, std::span<const std::size_t> index);

/// Plain masked softmax (no graph). Masked entries are exactly 0.
std::vector<double> masked_softmax(std::span<const double> logits, Mask mask);

enum class BatchNormMode { Train, Eval };

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormStats(std::size_t features = 0)
      : running_mean(features, 0.0), running_var(features, 1.0) {}
};

/// Per-feature normalization of x [rows × d] followed by gamma/beta
/// ([1 × d] each). Train mode uses the batch statistics and updates the
/// running estimates (unbiased variance) with the stats' momentum.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  BatchNormMode mode);

}  // namespace mdam::ad
