#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mdam/env/state.hpp"
#include "mdam/model/model.hpp"

namespace mdam::search {

using Realization = std::shared_ptr<const std::vector<double>>;

enum class Policy { Greedy, Sample };

struct RolloutOptions {
  std::size_t decoder = 0;
  Policy policy = Policy::Greedy;
  bool use_eg = true;
  /// Steps between EG re-embeddings; 0 picks the problem default.
  std::size_t eg_period = 0;
  nn::BatchNormMode mode = nn::BatchNormMode::Eval;
  /// Seeds the sampling generator.
  std::uint64_t seed = 0;
  /// Also evaluate every decoder's distribution at each visited state.
  bool all_decoder_probs = false;
};

struct RolloutResult {
  std::vector<env::Trajectory> trajectories;
  /// Sum of the chosen steps' log-probabilities, [batch × 1]; carries the
  /// graph when gradients are recorded.
  ad::Tensor log_prob;
  /// Log-probabilities of the first selection, [batch × nodes].
  ad::Tensor first_log_probs;
  /// With all_decoder_probs: [step][decoder] probabilities [batch × nodes].
  std::vector<std::vector<ad::Tensor>> step_probs;
};

/// Constructs one solution per instance with decoder `options.decoder`,
/// all instances advancing in lockstep. Rows that finish early only
/// allow node 0 afterwards, which contributes log-probability 0. Greedy
/// picks the most probable node with ties to the lowest index.
RolloutResult rollout(const nn::ModelParams& params, const nn::Encoding& encoding,
                      std::span<const env::RoutingInstance* const> instances,
                      const RolloutOptions& options, std::span<const Realization> realizations = {});

/// Encodes and rolls out every decoder greedily (eval mode, no graph).
/// Result [m][i] is decoder m's trajectory on instance i.
std::vector<std::vector<env::Trajectory>> greedy_all(
    const nn::ModelParams& params, std::span<const env::RoutingInstance* const> instances,
    bool use_eg = true, std::size_t eg_period = 0, std::span<const std::size_t> decoders = {},
    std::span<const Realization> realizations = {});

std::size_t resolve_period(const nn::ModelParams& params, std::size_t n, std::size_t period);

}  // namespace mdam::search
