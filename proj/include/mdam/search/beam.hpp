#pragma once

#include <span>
#include <vector>

#include "mdam/search/rollout.hpp"

namespace mdam::search {

struct BeamEntry {
  env::ConstructionState state;
  std::vector<int> nodes;
  std::vector<double> step_log_probs;
  double log_prob = 0.0;
  std::size_t decoder = 0;
};

enum class Dominance { ADominates, BDominates, Incomparable };

/// Same start, current node and visited set (and for SDVRP the same
/// remaining demands): both partials face the same remaining sub-problem.
bool collapses(const env::ConstructionState& a, const env::ConstructionState& b);

/// Given collapse, the partial with lower-or-equal cost and no worse
/// resources dominates (remaining capacity for CVRP/SDVRP, collected
/// prize for the prize kinds). Exact ties go to `a`. Entries of
/// different decoders may not be compared.
Dominance dominance_check(const BeamEntry& a, const BeamEntry& b, env::ProblemKind kind);

struct BeamOptions {
  /// Total width; each decoder keeps ceil(width / decoders) entries.
  std::size_t width = 1;
  bool use_eg = true;
  std::size_t eg_period = 0;
  bool merge = true;
  /// Decoders to run; empty means all.
  std::vector<std::size_t> decoders;
  Realization realization;
};

struct BeamResult {
  env::Trajectory best;
  /// Best terminal trajectory of each beam, in the order of the decoders run.
  std::vector<env::Trajectory> per_decoder_best;
  /// Distinct (start, visited, current) signatures kept over all steps and beams.
  std::size_t distinct_signatures = 0;
  std::size_t merges = 0;
};

BeamResult beam_search(const nn::ModelParams& params, const env::RoutingInstance& instance,
                       const BeamOptions& options);

}  // namespace mdam::search
