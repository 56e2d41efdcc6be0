#include "mdam/search/rollout.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace mdam::search {

std::size_t resolve_period(const nn::ModelParams& params, std::size_t n, std::size_t period) {
  return period > 0 ? period : nn::default_eg_period(params.config.kind, n);
}

RolloutResult rollout(const nn::ModelParams& params, const nn::Encoding& encoding,
                      std::span<const env::RoutingInstance* const> instances,
                      const RolloutOptions& options, std::span<const Realization> realizations) {
  const std::size_t batch = instances.size();
  if (batch != encoding.embeddings.batch) throw DimensionError("rollout: encoding batch mismatch");
  if (!realizations.empty() && realizations.size() != batch) {
    throw DimensionError("rollout: one realization per instance required");
  }
  const std::size_t n = encoding.embeddings.num_nodes;
  const std::size_t period = resolve_period(params, instances[0]->size, options.eg_period);

  std::vector<env::ConstructionState> states;
  states.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    states.push_back(env::initial_state(*instances[b], realizations.empty() ? nullptr : realizations[b]));
  }
  std::vector<const env::ConstructionState*> ptrs(batch);
  for (std::size_t b = 0; b < batch; ++b) ptrs[b] = &states[b];

  RolloutResult res;
  res.trajectories.resize(batch);
  for (auto& t : res.trajectories) t.decoder = static_cast<int>(options.decoder);

  nn::NodeEmbeddings emb = encoding.embeddings;
  nn::DecoderKeys keys = nn::prepare_keys(params.decoders.at(options.decoder), emb);
  std::vector<nn::DecoderKeys> all_keys;
  auto refresh_all = [&] {
    all_keys.clear();
    for (const auto& dec : params.decoders) all_keys.push_back(nn::prepare_keys(dec, emb));
  };
  if (options.all_decoder_probs) refresh_all();
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<std::uint8_t> invalid(batch * n);
  std::vector<std::size_t> choice(batch);
  std::size_t last_embed = 0;
  for (std::size_t step = 0;; ++step) {
    bool all_done = true;
    for (const auto& s : states) all_done = all_done && s.done;
    if (all_done) break;

    if (options.use_eg && step - last_embed >= period) {
      emb = nn::reembed(params, encoding.cache, ptrs, options.mode);
      keys = nn::prepare_keys(params.decoders[options.decoder], emb);
      if (options.all_decoder_probs) refresh_all();
      last_embed = step;
    }
    for (std::size_t b = 0; b < batch; ++b) {
      std::span<std::uint8_t> row(invalid.data() + b * n, n);
      if (states[b].done) {
        std::fill(row.begin(), row.end(), std::uint8_t{1});
        row[0] = 0;
      } else {
        env::feasible_mask(states[b], row);
      }
    }
    ad::Tensor logp = nn::step_log_probs(params, options.decoder, emb, keys, ptrs, invalid);
    if (step == 0) res.first_log_probs = logp;
    if (options.all_decoder_probs) {
      auto& per = res.step_probs.emplace_back();
      for (std::size_t m = 0; m < params.decoders.size(); ++m) {
        per.push_back(m == options.decoder
                          ? ad::exp(logp)
                          : ad::exp(nn::step_log_probs(params, m, emb, all_keys[m], ptrs, invalid)));
      }
    }

    for (std::size_t b = 0; b < batch; ++b) {
      const double* lp = logp.data() + b * n;
      for (std::size_t j = 0; j < n; ++j) {
        if (!invalid[b * n + j] && std::isnan(lp[j])) {
          throw NumericalError("rollout: NaN log-probability at step " + std::to_string(step));
        }
      }
      std::size_t pick = 0;
      if (options.policy == Policy::Greedy) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
          if (!invalid[b * n + j] && lp[j] > best) {
            best = lp[j];
            pick = j;
          }
        }
      } else {
        const double u = unif(rng);
        double cum = 0.0;
        // Inverse CDF; rounding slack falls to the last valid node.
        for (std::size_t j = 0; j < n; ++j) {
          if (invalid[b * n + j]) continue;
          pick = j;
          cum += std::exp(lp[j]);
          if (u < cum) break;
        }
      }
      choice[b] = pick;
      if (!states[b].done) {
        env::transition(states[b], static_cast<int>(pick));
        res.trajectories[b].nodes.push_back(static_cast<int>(pick));
        res.trajectories[b].step_log_probs.push_back(lp[pick]);
      }
    }
    ad::Tensor chosen = ad::pick(logp, choice);
    res.log_prob = res.log_prob.defined() ? ad::add(res.log_prob, chosen) : chosen;
  }
  for (std::size_t b = 0; b < batch; ++b) res.trajectories[b].objective = env::objective(states[b]);
  return res;
}

std::vector<std::vector<env::Trajectory>> greedy_all(
    const nn::ModelParams& params, std::span<const env::RoutingInstance* const> instances,
    bool use_eg, std::size_t eg_period, std::span<const std::size_t> decoders,
    std::span<const Realization> realizations) {
  ad::NoGradGuard guard;
  std::vector<std::size_t> which(decoders.begin(), decoders.end());
  if (which.empty()) {
    for (std::size_t m = 0; m < params.decoders.size(); ++m) which.push_back(m);
  }
  std::vector<std::vector<env::Trajectory>> out;
  if (instances.empty()) {
    out.resize(which.size());
    return out;
  }
  nn::Encoding enc = nn::encode(params, instances, nn::BatchNormMode::Eval);
  for (std::size_t m : which) {
    RolloutOptions opt;
    opt.decoder = m;
    opt.use_eg = use_eg;
    opt.eg_period = eg_period;
    out.push_back(rollout(params, enc, instances, opt, realizations).trajectories);
  }
  return out;
}

}  // namespace mdam::search
