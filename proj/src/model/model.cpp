#include "mdam/model/model.hpp"

namespace mdam::nn {

Encoding encode(const ModelParams& params, std::span<const env::RoutingInstance* const> instances,
                BatchNormMode mode) {
  if (instances.empty()) throw DimensionError("encode: empty batch");
  const std::size_t heads = params.config.heads;
  Tensor x = encode_lower(params.encoder, heads, params.config.kind, instances, mode);
  Encoding e;
  e.cache = eg_precompute(params.encoder.eg, x, instances.size(), heads);
  e.embeddings = eg_apply(params.encoder.eg, e.cache, {}, mode);
  return e;
}

NodeEmbeddings reembed(const ModelParams& params, const EGCache& cache,
                       std::span<const env::ConstructionState* const> states, BatchNormMode mode) {
  if (states.size() != cache.batch) throw DimensionError("reembed: one state per cached graph required");
  const std::size_t n = cache.num_nodes;
  std::vector<std::uint8_t> mask(states.size() * n);
  for (std::size_t b = 0; b < states.size(); ++b) {
    env::visited_mask(*states[b], std::span<std::uint8_t>(mask.data() + b * n, n));
  }
  return eg_apply(params.encoder.eg, cache, mask, mode);
}

Tensor step_logits(const ModelParams& params, std::size_t decoder, const NodeEmbeddings& emb,
                   const DecoderKeys& keys, std::span<const env::ConstructionState* const> states,
                   Mask invalid) {
  if (decoder >= params.decoders.size()) throw ContractError("step_logits: decoder index out of range");
  const auto& dec = params.decoders[decoder];
  Tensor ctx = build_context(emb, states, params.v_start, params.v_current);
  Tensor g = glimpse(dec, query_input(ctx, states), keys, invalid, params.config.heads);
  return pointer_logits(dec, g, keys, params.config.tanh_clip);
}

Tensor step_log_probs(const ModelParams& params, std::size_t decoder, const NodeEmbeddings& emb,
                      const DecoderKeys& keys, std::span<const env::ConstructionState* const> states,
                      Mask invalid) {
  return ad::masked_log_softmax(step_logits(params, decoder, emb, keys, states, invalid), invalid);
}

StepDistribution step_distribution(const ModelParams& params, std::size_t decoder,
                                   const NodeEmbeddings& emb, const env::ConstructionState& state,
                                   std::size_t step) {
  ad::NoGradGuard guard;
  const env::ConstructionState* sp[] = {&state};
  const auto invalid = env::feasible_mask(state);
  DecoderKeys keys = prepare_keys(params.decoders.at(decoder), emb);
  Tensor u = step_logits(params, decoder, emb, keys, sp, invalid);
  StepDistribution d;
  d.logits.assign(u.values().begin(), u.values().end());
  d.probs = ad::masked_softmax(d.logits, invalid);
  d.decoder = decoder;
  d.step = step;
  return d;
}

}  // namespace mdam::nn
