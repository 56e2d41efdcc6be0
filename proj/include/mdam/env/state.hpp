#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mdam/env/instance.hpp"

namespace mdam::env {

constexpr int kNoNode = -1;

/// Partial solution of one instance. Value type; copies are independent
/// except for the shared read-only instance and prize realization.
struct ConstructionState {
  const RoutingInstance* instance = nullptr;
  /// Realized SPCTSP prizes revealed on visit; null for other kinds.
  std::shared_ptr<const std::vector<double>> realized_prizes;

  std::vector<std::uint8_t> visited;   // per node; SDVRP: remaining demand == 0
  std::vector<int> remaining_demand;   // SDVRP only
  int current = kNoNode;
  int start = kNoNode;
  int remaining_capacity = 0;
  double used_length = 0.0;
  double collected_prize = 0.0;
  double partial_cost = 0.0;
  double log_prob = 0.0;
  std::size_t steps_taken = 0;
  std::size_t customers_left = 0;
  bool done = false;
};

ConstructionState initial_state(const RoutingInstance& instance,
                                std::shared_ptr<const std::vector<double>> realized_prizes = nullptr);

/// Writes one flag per node, nonzero meaning forbidden. Precondition: the
/// state is not terminal.
void feasible_mask(const ConstructionState& state, std::span<std::uint8_t> out);
std::vector<std::uint8_t> feasible_mask(const ConstructionState& state);

/// Nodes removed from the re-embedding attention: visited customers. The
/// depot is never removed.
void visited_mask(const ConstructionState& state, std::span<std::uint8_t> out);

/// Moves to `node`. Throws ContractError if the node is forbidden.
void transition(ConstructionState& state, int node);
ConstructionState next_state(const ConstructionState& state, int node);

bool is_terminal(const ConstructionState& state);

/// Objective of a terminal state (minimized): tour length for the routing
/// kinds, negative prize for OP, length plus unvisited penalties for the
/// prize-collecting kinds.
double objective(const ConstructionState& state);

/// Decoder-visible resource features appended to the context query:
/// remaining capacity fraction (CVRP/SDVRP), remaining length budget (OP),
/// remaining prize to the threshold (PCTSP/SPCTSP); none for TSP.
std::size_t state_feature_dim(ProblemKind kind);
void state_features(const ConstructionState& state, std::span<double> out);

struct Trajectory {
  std::vector<int> nodes;
  std::vector<double> step_log_probs;
  double objective = 0.0;
  int decoder = -1;

  double log_prob() const;
};

/// Replays `nodes` from the initial state and returns the objective.
/// Throws ContractError if a step is forbidden or the result is not
/// terminal.
double objective(const Trajectory& trajectory, const RoutingInstance& instance,
                 std::shared_ptr<const std::vector<double>> realized_prizes = nullptr);

/// Value to print for tables: the collected prize for OP, else objective.
double reported_value(ProblemKind kind, double objective);

}  // namespace mdam::env
