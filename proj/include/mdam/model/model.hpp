#pragma once

#include <span>
#include <vector>

#include "mdam/model/decoder.hpp"

namespace mdam::nn {

/// Result of running the encoder on a batch: the mask-independent EG
/// cache and the embeddings with nothing visited.
struct Encoding {
  EGCache cache;
  NodeEmbeddings embeddings;
};

Encoding encode(const ModelParams& params, std::span<const env::RoutingInstance* const> instances,
                BatchNormMode mode);

/// EG re-embedding for the given partial solutions: cache row block i
/// belongs to states[i].
NodeEmbeddings reembed(const ModelParams& params, const EGCache& cache,
                       std::span<const env::ConstructionState* const> states, BatchNormMode mode);

/// Log-probabilities [batch × nodes] of decoder m's next selection;
/// forbidden nodes are -inf. `invalid` holds batch·nodes flags.
Tensor step_log_probs(const ModelParams& params, std::size_t decoder, const NodeEmbeddings& emb,
                      const DecoderKeys& keys, std::span<const env::ConstructionState* const> states,
                      Mask invalid);

/// Same computation, also returning the clipped logits.
Tensor step_logits(const ModelParams& params, std::size_t decoder, const NodeEmbeddings& emb,
                   const DecoderKeys& keys, std::span<const env::ConstructionState* const> states,
                   Mask invalid);

/// Full distribution of decoder m at the given state (single instance,
/// no graph, eval-mode BN), for inspection and tests.
StepDistribution step_distribution(const ModelParams& params, std::size_t decoder,
                                   const NodeEmbeddings& emb, const env::ConstructionState& state,
                                   std::size_t step);

}  // namespace mdam::nn
