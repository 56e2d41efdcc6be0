#include "mdam/env/validate.hpp"

#include <cmath>

namespace mdam::env {

namespace {

ValidationResult fail(std::string reason) { return {false, std::move(reason), 0.0}; }

double path_length(const RoutingInstance& inst, const std::vector<int>& seq, bool from_depot) {
  double len = 0.0;
  int prev = from_depot ? 0 : (seq.empty() ? 0 : seq.front());
  for (int v : seq) {
    len += std::hypot(inst.coords[v].x - inst.coords[prev].x, inst.coords[v].y - inst.coords[prev].y);
    prev = v;
  }
  return len;
}

}  // namespace

ValidationResult validate(const RoutingInstance& inst, const std::vector<int>& nodes,
                          const std::vector<double>* realized_prizes) {
  const int n_nodes = static_cast<int>(inst.num_nodes());
  for (int v : nodes) {
    if (v < 0 || v >= n_nodes) return fail("node index out of range");
  }
  std::vector<int> count(inst.num_nodes(), 0);
  for (int v : nodes) ++count[v];
  constexpr double kTol = 1e-9;

  switch (inst.kind) {
    case ProblemKind::TSP: {
      for (int i = 0; i < n_nodes; ++i) {
        if (count[i] != 1) return fail("node " + std::to_string(i) + " not visited exactly once");
      }
      double len = path_length(inst, nodes, false);
      len += std::hypot(inst.coords[nodes.back()].x - inst.coords[nodes.front()].x,
                        inst.coords[nodes.back()].y - inst.coords[nodes.front()].y);
      return {true, "", len};
    }
    case ProblemKind::CVRP: {
      if (nodes.empty() || nodes.back() != 0) return fail("route must end at the depot");
      for (int i = 1; i < n_nodes; ++i) {
        if (count[i] != 1) return fail("customer " + std::to_string(i) + " not served exactly once");
      }
      int load = 0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (nodes[k] == 0) {
          if (k > 0 && nodes[k - 1] == 0) return fail("empty route");
          if (k == 0) return fail("empty route");
          load = 0;
        } else {
          load += inst.demands[nodes[k]];
          if (load > inst.capacity) return fail("route exceeds capacity");
        }
      }
      return {true, "", path_length(inst, nodes, true)};
    }
    case ProblemKind::SDVRP: {
      if (nodes.empty() || nodes.back() != 0) return fail("route must end at the depot");
      std::vector<int> served(inst.num_nodes(), 0);
      int load = 0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const int v = nodes[k];
        if (v == 0) {
          if (k == 0 || nodes[k - 1] == 0) return fail("empty route");
          load = 0;
          continue;
        }
        const int give = std::min(inst.demands[v] - served[v], inst.capacity - load);
        if (give <= 0) return fail("visit delivers nothing");
        served[v] += give;
        load += give;
      }
      for (int i = 1; i < n_nodes; ++i) {
        if (served[i] != inst.demands[i]) return fail("demand of " + std::to_string(i) + " not met");
      }
      return {true, "", path_length(inst, nodes, true)};
    }
    case ProblemKind::OP: {
      if (nodes.empty() || nodes.back() != 0) return fail("tour must return to the depot");
      for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
        if (nodes[k] == 0) return fail("depot visited mid-tour");
      }
      for (int i = 1; i < n_nodes; ++i) {
        if (count[i] > 1) return fail("node visited twice");
      }
      const double len = path_length(inst, nodes, true);
      if (len > inst.length_budget + kTol) return fail("tour exceeds length budget");
      double prize = 0.0;
      for (int v : nodes) prize += inst.prizes[v];
      return {true, "", -prize};
    }
    case ProblemKind::PCTSP:
    case ProblemKind::SPCTSP: {
      if (nodes.empty() || nodes.back() != 0) return fail("tour must return to the depot");
      for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
        if (nodes[k] == 0) return fail("depot visited mid-tour");
      }
      for (int i = 1; i < n_nodes; ++i) {
        if (count[i] > 1) return fail("node visited twice");
      }
      const std::vector<double>& prizes =
          inst.kind == ProblemKind::SPCTSP && realized_prizes ? *realized_prizes : inst.prizes;
      double prize = 0.0;
      double penalty = 0.0;
      bool all = true;
      for (int i = 1; i < n_nodes; ++i) {
        if (count[i]) {
          prize += prizes[i];
        } else {
          penalty += inst.penalties[i];
          all = false;
        }
      }
      if (!all && prize < inst.prize_threshold - kTol) return fail("prize threshold not met");
      return {true, "", path_length(inst, nodes, true) + penalty};
    }
  }
  return fail("unknown problem kind");
}

}  // namespace mdam::env
