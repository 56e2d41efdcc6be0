#include "mdam/env/state.hpp"

#include <algorithm>
#include <string>

#include "mdam/autodiff/tensor.hpp"

namespace mdam::env {

ConstructionState initial_state(const RoutingInstance& instance,
                                std::shared_ptr<const std::vector<double>> realized_prizes) {
  ConstructionState s;
  s.instance = &instance;
  const std::size_t nodes = instance.num_nodes();
  s.visited.assign(nodes, 0);
  s.customers_left = instance.size;
  if (has_depot(instance.kind)) {
    s.current = 0;
    s.start = 0;
  }
  if (has_demands(instance.kind)) s.remaining_capacity = instance.capacity;
  if (instance.kind == ProblemKind::SDVRP) s.remaining_demand = instance.demands;
  if (instance.kind == ProblemKind::SPCTSP) {
    s.realized_prizes = realized_prizes
                            ? std::move(realized_prizes)
                            : std::make_shared<const std::vector<double>>(realize_prizes(instance, 0));
    if (s.realized_prizes->size() != nodes) {
      throw ContractError("initial_state: prize realization has the wrong length");
    }
  }
  return s;
}

void feasible_mask(const ConstructionState& s, std::span<std::uint8_t> out) {
  const RoutingInstance& inst = *s.instance;
  const std::size_t nodes = inst.num_nodes();
  if (out.size() != nodes) throw DimensionError("feasible_mask: output size mismatch");
  switch (inst.kind) {
    case ProblemKind::TSP:
      for (std::size_t i = 0; i < nodes; ++i) out[i] = s.visited[i];
      return;
    case ProblemKind::CVRP:
      out[0] = s.current == 0;
      for (std::size_t i = 1; i < nodes; ++i) {
        out[i] = s.visited[i] || inst.demands[i] > s.remaining_capacity;
      }
      return;
    case ProblemKind::SDVRP:
      out[0] = s.current == 0;
      for (std::size_t i = 1; i < nodes; ++i) {
        out[i] = s.remaining_demand[i] == 0 || s.remaining_capacity == 0;
      }
      return;
    case ProblemKind::OP: {
      out[0] = 0;
      const double left = inst.length_budget - s.used_length;
      const auto cur = static_cast<std::size_t>(s.current);
      for (std::size_t i = 1; i < nodes; ++i) {
        out[i] = s.visited[i] || inst.distance(cur, i) + inst.distance(i, 0) > left;
      }
      return;
    }
    case ProblemKind::PCTSP:
    case ProblemKind::SPCTSP:
      out[0] = s.collected_prize < inst.prize_threshold && s.customers_left > 0;
      for (std::size_t i = 1; i < nodes; ++i) out[i] = s.visited[i];
      return;
  }
}

std::vector<std::uint8_t> feasible_mask(const ConstructionState& state) {
  std::vector<std::uint8_t> m(state.instance->num_nodes());
  feasible_mask(state, m);
  return m;
}

void visited_mask(const ConstructionState& s, std::span<std::uint8_t> out) {
  std::copy(s.visited.begin(), s.visited.end(), out.begin());
  if (has_depot(s.instance->kind)) out[0] = 0;
}

void transition(ConstructionState& s, int node) {
  const RoutingInstance& inst = *s.instance;
  if (s.done) throw ContractError("transition: state is terminal");
  if (node < 0 || static_cast<std::size_t>(node) >= inst.num_nodes()) {
    throw ContractError("transition: node index out of range");
  }
  std::vector<std::uint8_t> mask = feasible_mask(s);
  if (mask[static_cast<std::size_t>(node)]) {
    throw ContractError("transition: node " + std::to_string(node) + " is forbidden");
  }
  const auto idx = static_cast<std::size_t>(node);
  if (s.current != kNoNode) {
    const double step = inst.distance(static_cast<std::size_t>(s.current), idx);
    s.partial_cost += step;
    s.used_length += step;
  }
  if (s.start == kNoNode) s.start = node;
  s.current = node;
  ++s.steps_taken;

  switch (inst.kind) {
    case ProblemKind::TSP:
      s.visited[idx] = 1;
      s.done = --s.customers_left == 0;
      break;
    case ProblemKind::CVRP:
      if (idx == 0) {
        s.remaining_capacity = inst.capacity;
      } else {
        s.visited[idx] = 1;
        s.remaining_capacity -= inst.demands[idx];
        --s.customers_left;
      }
      s.done = s.customers_left == 0 && idx == 0;
      break;
    case ProblemKind::SDVRP:
      if (idx == 0) {
        s.remaining_capacity = inst.capacity;
      } else {
        const int delivered = std::min(s.remaining_demand[idx], s.remaining_capacity);
        s.remaining_demand[idx] -= delivered;
        s.remaining_capacity -= delivered;
        if (s.remaining_demand[idx] == 0) {
          s.visited[idx] = 1;
          --s.customers_left;
        }
      }
      s.done = s.customers_left == 0 && idx == 0;
      break;
    case ProblemKind::OP:
    case ProblemKind::PCTSP:
    case ProblemKind::SPCTSP:
      if (idx == 0) {
        s.done = true;
      } else {
        s.visited[idx] = 1;
        --s.customers_left;
        s.collected_prize +=
            inst.kind == ProblemKind::SPCTSP ? (*s.realized_prizes)[idx] : inst.prizes[idx];
      }
      break;
  }
}

ConstructionState next_state(const ConstructionState& state, int node) {
  ConstructionState copy = state;
  transition(copy, node);
  return copy;
}

bool is_terminal(const ConstructionState& state) { return state.done; }

double objective(const ConstructionState& s) {
  if (!s.done) throw ContractError("objective: state is not terminal");
  const RoutingInstance& inst = *s.instance;
  switch (inst.kind) {
    case ProblemKind::TSP:
      return s.partial_cost + inst.distance(static_cast<std::size_t>(s.current),
                                            static_cast<std::size_t>(s.start));
    case ProblemKind::CVRP:
    case ProblemKind::SDVRP: return s.partial_cost;
    case ProblemKind::OP: return -s.collected_prize;
    case ProblemKind::PCTSP:
    case ProblemKind::SPCTSP: {
      double penalty = 0.0;
      for (std::size_t i = 1; i < inst.num_nodes(); ++i) {
        if (!s.visited[i]) penalty += inst.penalties[i];
      }
      return s.partial_cost + penalty;
    }
  }
  return 0.0;
}

std::size_t state_feature_dim(ProblemKind kind) { return kind == ProblemKind::TSP ? 0 : 1; }

void state_features(const ConstructionState& s, std::span<double> out) {
  const RoutingInstance& inst = *s.instance;
  switch (inst.kind) {
    case ProblemKind::TSP: return;
    case ProblemKind::CVRP:
    case ProblemKind::SDVRP:
      out[0] = static_cast<double>(s.remaining_capacity) / static_cast<double>(inst.capacity);
      return;
    case ProblemKind::OP: out[0] = inst.length_budget - s.used_length; return;
    case ProblemKind::PCTSP:
    case ProblemKind::SPCTSP:
      out[0] = std::max(0.0, inst.prize_threshold - s.collected_prize);
      return;
  }
}

double Trajectory::log_prob() const {
  double s = 0.0;
  for (double lp : step_log_probs) s += lp;
  return s;
}

double objective(const Trajectory& trajectory, const RoutingInstance& instance,
                 std::shared_ptr<const std::vector<double>> realized_prizes) {
  ConstructionState s = initial_state(instance, std::move(realized_prizes));
  for (int node : trajectory.nodes) transition(s, node);
  if (!s.done) throw ContractError("objective: trajectory is not terminal");
  return objective(s);
}

double reported_value(ProblemKind kind, double objective) {
  return kind == ProblemKind::OP ? -objective : objective;
}

}  // namespace mdam::env
