#pragma once

#include <span>
#include <vector>

#include "mdam/model/params.hpp"

namespace mdam::nn {

using ad::BatchNormMode;
using ad::Mask;

/// Node embeddings of a batch of `batch` graphs with `nodes` rows each.
struct NodeEmbeddings {
  Tensor nodes;  // [batch·nodes × d]
  Tensor mean;   // [batch × d], mean of each graph's rows
  std::size_t batch = 0;
  std::size_t num_nodes = 0;
};

/// Mask-independent part of the EG layer, computed once per encoding.
struct EGCache {
  Tensor input;   // layer input X, [batch·nodes × d], used by the skip path
  Tensor q, k, v; // [batch·nodes × d]
  Tensor scores;  // [batch·heads·nodes × nodes], Q·Kᵀ/sqrt(dk), unmasked
  std::size_t batch = 0;
  std::size_t num_nodes = 0;
  std::size_t heads = 0;

  /// Cache for a new batch whose element i is element `index[i]` of this one.
  EGCache select(std::span<const std::size_t> index) const;
};

/// Projects per-node features; depot rows (node 0 of depot problems) use
/// the separate (x, y) projection. Output [batch·nodes × d].
Tensor embed_inputs(const EncoderParams& params, env::ProblemKind kind,
                    std::span<const env::RoutingInstance* const> instances);

/// Multi-head self-attention, skip + BN, FF (ReLU), skip + BN.
Tensor attention_block(const AttentionLayerParams& params, const Tensor& x, std::size_t batch,
                       std::size_t heads, BatchNormMode mode);

EGCache eg_precompute(const AttentionLayerParams& params, const Tensor& x, std::size_t batch,
                      std::size_t heads);

/// Runs the rest of the EG layer with the attention to visited nodes
/// removed. `visited` holds batch·nodes flags (empty = nothing visited);
/// visited rows still get embeddings. The mean is over all rows.
NodeEmbeddings eg_apply(const AttentionLayerParams& params, const EGCache& cache, Mask visited,
                        BatchNormMode mode);

/// Everything below the EG layer: input projection and the plain blocks.
Tensor encode_lower(const EncoderParams& params, std::size_t heads, env::ProblemKind kind,
                    std::span<const env::RoutingInstance* const> instances, BatchNormMode mode);

/// Steps between re-embeddings when the caller does not choose one.
std::size_t default_eg_period(env::ProblemKind kind, std::size_t n);

}  // namespace mdam::nn
