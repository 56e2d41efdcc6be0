#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdam/search/beam.hpp"

namespace mdam::search {

struct SolveMode {
  enum class Kind { Greedy, Sample, Beam };
  Kind kind = Kind::Greedy;
  /// Sample count for Sample, total width for Beam.
  std::size_t amount = 1;

  /// "greedy", "sample:K" or "beam:W". Throws ConfigError otherwise.
  static SolveMode parse(const std::string& text);
  std::string to_string() const;
};

struct SolveOptions {
  SolveMode mode;
  bool use_eg = true;
  std::size_t eg_period = 0;
  bool merge = true;
  std::vector<std::size_t> decoders;  // empty = all
  std::uint64_t seed = 0;             // sampling
};

struct SolveReport {
  env::Trajectory best;
  /// Best objective found by each decoder used (same order as the
  /// decoder list); +inf when a decoder produced nothing.
  std::vector<double> decoder_objectives;
  /// Decoders whose objective ties the best.
  std::vector<bool> winners;
  /// Index into decoder_objectives of the sole winner, or -1.
  int sole_winner = -1;
};

std::vector<SolveReport> solve(const nn::ModelParams& params,
                               std::span<const env::RoutingInstance* const> instances,
                               const SolveOptions& options,
                               std::span<const Realization> realizations = {});

/// Fills winners and sole_winner from decoder_objectives.
void mark_winners(SolveReport& report);

}  // namespace mdam::search
