#include "mdam/model/decoder.hpp"

#include <cmath>

namespace mdam::nn {

DecoderKeys prepare_keys(const DecoderParams& p, const NodeEmbeddings& emb) {
  DecoderKeys k;
  k.glimpse_k = ad::matmul(emb.nodes, p.glimpse_k);
  k.glimpse_v = ad::matmul(emb.nodes, p.glimpse_v);
  k.pointer_k = ad::matmul(emb.nodes, p.pointer_k);
  k.batch = emb.batch;
  k.num_nodes = emb.num_nodes;
  return k;
}

Tensor build_context(const NodeEmbeddings& emb, std::span<const env::ConstructionState* const> states,
                     const Tensor& v_start, const Tensor& v_current) {
  if (states.size() != emb.batch) throw DimensionError("build_context: one state per graph required");
  const std::size_t n = emb.num_nodes;
  const std::size_t start_slot = emb.batch * n;
  const std::size_t current_slot = start_slot + 1;
  std::vector<std::size_t> start_rows(states.size()), current_rows(states.size());
  for (std::size_t b = 0; b < states.size(); ++b) {
    const auto& s = *states[b];
    if (s.steps_taken == 0) {
      start_rows[b] = start_slot;
      current_rows[b] = current_slot;
    } else {
      start_rows[b] = b * n + static_cast<std::size_t>(s.start);
      current_rows[b] = b * n + static_cast<std::size_t>(s.current);
    }
  }
  const Tensor pool_parts[] = {emb.nodes, v_start, v_current};
  Tensor pool = ad::concat_rows(pool_parts);
  const Tensor parts[] = {emb.mean, ad::gather_rows(pool, start_rows),
                          ad::gather_rows(pool, current_rows)};
  return ad::concat_cols(parts);
}

Tensor query_input(const Tensor& context, std::span<const env::ConstructionState* const> states) {
  if (states.empty()) return context;
  const std::size_t ks = env::state_feature_dim(states[0]->instance->kind);
  if (ks == 0) return context;
  std::vector<double> feats(states.size() * ks);
  for (std::size_t b = 0; b < states.size(); ++b) {
    env::state_features(*states[b], std::span<double>(feats.data() + b * ks, ks));
  }
  const Tensor parts[] = {context, Tensor(states.size(), ks, std::move(feats))};
  return ad::concat_cols(parts);
}

Tensor glimpse(const DecoderParams& p, const Tensor& query, const DecoderKeys& keys, Mask invalid,
               std::size_t heads) {
  Tensor q = ad::matmul(query, p.glimpse_q);
  const double dk = static_cast<double>(q.cols() / heads);
  Tensor scores = ad::attention_scores(q, keys.glimpse_k, keys.batch, heads, 1.0 / std::sqrt(dk));
  Tensor att = ad::masked_attend(scores, keys.glimpse_v, invalid, keys.batch, heads);
  return ad::matmul(att, p.glimpse_o);
}

Tensor pointer_logits(const DecoderParams& p, const Tensor& glimpse_out, const DecoderKeys& keys,
                      double clip) {
  Tensor q = ad::matmul(glimpse_out, p.pointer_q);
  const double d = static_cast<double>(q.cols());
  Tensor s = ad::attention_scores(q, keys.pointer_k, keys.batch, 1, 1.0 / std::sqrt(d));
  return ad::scale(ad::tanh(s), clip);
}

Tensor first_step_kl(std::span<const Tensor> probs) {
  if (probs.empty()) throw DimensionError("first_step_kl: no distributions");
  const std::size_t rows = probs[0].rows();
  const std::size_t n = probs[0].cols();
  for (const auto& p : probs) {
    if (p.rows() != rows || p.cols() != n) throw DimensionError("first_step_kl: shape mismatch");
  }
  const std::size_t m = probs.size();
  Tensor out = ad::make_result("first_step_kl", 1, 1, probs);
  double total = 0.0;
  for (std::size_t e = 0; e < rows * n; ++e) {
    for (std::size_t i = 0; i < m; ++i) {
      const double pi = probs[i].values()[e];
      if (pi <= 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) continue;
        const double pj = std::max(probs[j].values()[e], kKlFloor);
        total += pi * (std::log(pi) - std::log(pj));
      }
    }
  }
  out.values()[0] = total;
  if (out.requires_grad()) {
    out.node()->backward = [m](ad::detail::Node& self) {
      const double g = self.grad[0];
      const std::size_t count = self.inputs[0]->value.size();
      for (std::size_t e = 0; e < count; ++e) {
        for (std::size_t i = 0; i < m; ++i) {
          auto& ni = *self.inputs[i];
          if (!ni.requires_grad) continue;
          const double pi = ni.value[e];
          if (pi <= 0.0) continue;
          double d = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            const double pj = self.inputs[j]->value[e];
            // i as the reference distribution of pair (i, j).
            d += std::log(pi) - std::log(std::max(pj, kKlFloor)) + 1.0;
            // i as the compared distribution of pair (j, i).
            if (pj > 0.0 && pi > kKlFloor) d -= pj / pi;
          }
          ni.grad[e] += g * d;
        }
      }
    };
  }
  return out;
}

double first_step_kl(std::span<const StepDistribution> dists) {
  std::vector<Tensor> ts;
  for (const auto& d : dists) ts.emplace_back(1, d.probs.size(), d.probs);
  ad::NoGradGuard guard;
  return first_step_kl(ts).item();
}

}  // namespace mdam::nn
