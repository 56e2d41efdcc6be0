#pragma once

#include <string>
#include <vector>

#include "mdam/env/state.hpp"

namespace mdam::harness {

constexpr std::size_t kHeldKarpLimit = 16;

/// Optimal TSP tour by dynamic programming over subsets. Refuses
/// (ConfigError) other kinds and n > 16.
env::Trajectory held_karp_exact(const env::RoutingInstance& instance);

/// Repeatedly moves to the nearest allowed customer; returns to the
/// depot when none is allowed. For the prize-collecting kinds, once the
/// threshold is met a customer is only taken if its detour is cheaper
/// than its penalty.
env::Trajectory nearest_neighbor(const env::RoutingInstance& instance,
                                 const std::vector<double>* realized_prizes = nullptr);

/// Best-improvement 2-opt inside each route (the closed tour for TSP)
/// until no move helps or `max_passes` moves were made.
env::Trajectory two_opt(const env::Trajectory& trajectory, const env::RoutingInstance& instance,
                        std::size_t max_passes = 1000,
                        const std::vector<double>* realized_prizes = nullptr);

enum class ReferenceMethod { Auto, HeldKarp, NearestTwoOpt };

ReferenceMethod parse_reference_method(const std::string& text);

struct Reference {
  env::Trajectory tour;
  double objective = 0.0;
  bool optimal = false;
};

/// Auto: Held-Karp for TSP with n <= 16, otherwise 2-opt on the
/// nearest-neighbour tour.
Reference reference_solution(const env::RoutingInstance& instance, ReferenceMethod method,
                             const std::vector<double>* realized_prizes = nullptr);

}  // namespace mdam::harness
