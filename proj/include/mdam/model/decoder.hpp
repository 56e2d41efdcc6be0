#pragma once

#include <span>
#include <vector>

#include "mdam/env/state.hpp"
#include "mdam/model/encoder.hpp"

namespace mdam::nn {

/// Per-decoder projections of the current node embeddings; recomputed
/// whenever the embeddings change.
struct DecoderKeys {
  Tensor glimpse_k, glimpse_v, pointer_k;  // [batch·nodes × d]
  std::size_t batch = 0;
  std::size_t num_nodes = 0;
};

DecoderKeys prepare_keys(const DecoderParams& params, const NodeEmbeddings& emb);

/// concat(mean embedding, start embedding, current embedding) per row,
/// [batch × 3d]. Before the first selection the last two slots are the
/// shared trainable placeholders.
Tensor build_context(const NodeEmbeddings& emb, std::span<const env::ConstructionState* const> states,
                     const Tensor& v_start, const Tensor& v_current);

/// Context with the resource features appended (identity for TSP).
Tensor query_input(const Tensor& context, std::span<const env::ConstructionState* const> states);

/// Single-query multi-head attention of the projected context over the
/// valid nodes, heads concatenated and output-projected: [batch × d].
Tensor glimpse(const DecoderParams& params, const Tensor& query, const DecoderKeys& keys,
               Mask invalid, std::size_t heads);

/// Clipped compatibilities u_i = D·tanh(q·k_i/sqrt(d)), [batch × nodes],
/// computed for every node; masking happens in the softmax.
Tensor pointer_logits(const DecoderParams& params, const Tensor& glimpse_out,
                      const DecoderKeys& keys, double clip);

struct StepDistribution {
  std::vector<double> probs;
  std::vector<double> logits;
  std::size_t decoder = 0;
  std::size_t step = 0;
};

/// Sum over decoder pairs (i, j) and nodes y of P_i(y)·log(P_i(y)/P_j(y)),
/// summed over the batch rows. `probs` holds one [batch × nodes] tensor
/// per decoder. Zero-probability terms contribute nothing; P_j is floored
/// at 1e-10 inside the log.
Tensor first_step_kl(std::span<const Tensor> probs);
double first_step_kl(std::span<const StepDistribution> dists);

constexpr double kKlFloor = 1e-10;

}  // namespace mdam::nn
