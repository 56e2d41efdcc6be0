#include "mdam/harness/reference.hpp"

#include <algorithm>
#include <limits>

#include "mdam/autodiff/tensor.hpp"
#include "mdam/env/validate.hpp"

namespace mdam::harness {

env::Trajectory held_karp_exact(const env::RoutingInstance& inst) {
  if (inst.kind != env::ProblemKind::TSP) throw ConfigError("held_karp_exact: TSP only");
  const std::size_t n = inst.num_nodes();
  if (n > kHeldKarpLimit) throw ConfigError("held_karp_exact: n > 16 is not supported");
  env::Trajectory t;
  if (n == 0) throw ConfigError("held_karp_exact: empty instance");
  if (n <= 3) {
    for (std::size_t i = 0; i < n; ++i) t.nodes.push_back(static_cast<int>(i));
    t.objective = env::validate(inst, t.nodes).objective;
    return t;
  }
  // Node 0 is the fixed start; subsets range over nodes 1..n-1.
  const std::size_t m = n - 1;
  const std::size_t full = (std::size_t{1} << m) - 1;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dp((full + 1) * m, kInf);
  std::vector<std::int8_t> prev((full + 1) * m, -1);
  for (std::size_t j = 0; j < m; ++j) dp[(std::size_t{1} << j) * m + j] = inst.distance(0, j + 1);
  for (std::size_t s = 1; s <= full; ++s) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!(s >> j & 1)) continue;
      const double base = dp[s * m + j];
      if (base == kInf) continue;
      for (std::size_t k = 0; k < m; ++k) {
        if (s >> k & 1) continue;
        const std::size_t ns = s | (std::size_t{1} << k);
        const double c = base + inst.distance(j + 1, k + 1);
        if (c < dp[ns * m + k]) {
          dp[ns * m + k] = c;
          prev[ns * m + k] = static_cast<std::int8_t>(j);
        }
      }
    }
  }
  double best = kInf;
  std::size_t last = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const double c = dp[full * m + j] + inst.distance(j + 1, 0);
    if (c < best) {
      best = c;
      last = j;
    }
  }
  std::vector<int> rev;
  std::size_t s = full;
  int j = static_cast<int>(last);
  while (j >= 0) {
    rev.push_back(j + 1);
    const int p = prev[s * m + static_cast<std::size_t>(j)];
    s &= ~(std::size_t{1} << j);
    j = p;
  }
  t.nodes.push_back(0);
  t.nodes.insert(t.nodes.end(), rev.rbegin(), rev.rend());
  t.objective = best;
  return t;
}

env::Trajectory nearest_neighbor(const env::RoutingInstance& inst, const std::vector<double>* realized) {
  std::shared_ptr<const std::vector<double>> real;
  if (realized) real = std::make_shared<const std::vector<double>>(*realized);
  env::ConstructionState s = env::initial_state(inst, real);
  env::Trajectory t;
  const bool prize_kind = inst.kind == env::ProblemKind::PCTSP || inst.kind == env::ProblemKind::SPCTSP;
  const std::size_t n = inst.num_nodes();
  while (!s.done) {
    if (s.current == env::kNoNode) {
      env::transition(s, 0);
      t.nodes.push_back(0);
      continue;
    }
    const auto mask = env::feasible_mask(s);
    int pick = -1;
    double best = std::numeric_limits<double>::infinity();
    const std::size_t first = env::has_depot(inst.kind) ? 1 : 0;
    const bool threshold_met = prize_kind && !mask[0];
    for (std::size_t i = first; i < n; ++i) {
      if (mask[i]) continue;
      const double d = inst.distance(s.current, i);
      if (threshold_met) {
        const double detour = d + inst.distance(i, 0) - inst.distance(s.current, 0);
        if (detour >= inst.penalties[i]) continue;
      }
      if (d < best) {
        best = d;
        pick = static_cast<int>(i);
      }
    }
    if (pick < 0) {
      if (mask[0]) throw InfeasibleError("nearest_neighbor: no allowed move");
      pick = 0;
    }
    env::transition(s, pick);
    t.nodes.push_back(pick);
  }
  t.objective = env::objective(s);
  return t;
}

namespace {

// Split a node sequence into depot-to-depot paths (or the closed tour).
std::vector<std::vector<int>> routes_of(const env::RoutingInstance& inst, const std::vector<int>& nodes) {
  std::vector<std::vector<int>> routes;
  if (!env::has_depot(inst.kind)) {
    std::vector<int> r = nodes;
    if (!r.empty()) r.push_back(r.front());
    routes.push_back(std::move(r));
    return routes;
  }
  std::vector<int> cur{0};
  for (int v : nodes) {
    cur.push_back(v);
    if (v == 0) {
      routes.push_back(std::move(cur));
      cur = {0};
    }
  }
  if (cur.size() > 1) routes.push_back(std::move(cur));
  return routes;
}

std::vector<int> join(const env::RoutingInstance& inst, const std::vector<std::vector<int>>& routes) {
  std::vector<int> out;
  if (!env::has_depot(inst.kind)) {
    out = routes[0];
    if (!out.empty()) out.pop_back();
    return out;
  }
  for (const auto& r : routes) out.insert(out.end(), r.begin() + 1, r.end());
  return out;
}

}  // namespace

env::Trajectory two_opt(const env::Trajectory& traj, const env::RoutingInstance& inst, std::size_t max_passes,
                        const std::vector<double>* realized) {
  env::Trajectory out = traj;
  if (traj.nodes.empty()) return out;
  // The caller's objective field is not trusted.
  out.objective = env::validate(inst, traj.nodes, realized).objective;
  auto routes = routes_of(inst, traj.nodes);
  constexpr double kEps = 1e-12;
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    double best_delta = -kEps;
    std::size_t br = 0, bi = 0, bj = 0;
    for (std::size_t r = 0; r < routes.size(); ++r) {
      const auto& p = routes[r];
      const std::size_t len = p.size();
      if (len < 4) continue;
      for (std::size_t i = 0; i + 2 < len - 1; ++i) {
        for (std::size_t j = i + 2; j + 1 < len; ++j) {
          const double delta = inst.distance(p[i], p[j]) + inst.distance(p[i + 1], p[j + 1]) -
                               inst.distance(p[i], p[i + 1]) - inst.distance(p[j], p[j + 1]);
          if (delta < best_delta) {
            best_delta = delta;
            br = r;
            bi = i;
            bj = j;
          }
        }
      }
    }
    if (best_delta >= -kEps) break;
    auto trial = routes;
    std::reverse(trial[br].begin() + static_cast<std::ptrdiff_t>(bi + 1),
                 trial[br].begin() + static_cast<std::ptrdiff_t>(bj + 1));
    const auto v = env::validate(inst, join(inst, trial), realized);
    if (!v.ok || v.objective > out.objective) break;
    routes = std::move(trial);
    out.nodes = join(inst, routes);
    out.objective = v.objective;
  }
  out.step_log_probs.clear();
  return out;
}

ReferenceMethod parse_reference_method(const std::string& text) {
  if (text == "auto") return ReferenceMethod::Auto;
  if (text == "heldkarp") return ReferenceMethod::HeldKarp;
  if (text == "nn2opt") return ReferenceMethod::NearestTwoOpt;
  throw ConfigError("unknown reference method '" + text + "'");
}

Reference reference_solution(const env::RoutingInstance& inst, ReferenceMethod method,
                             const std::vector<double>* realized) {
  Reference ref;
  const bool exact_ok = inst.kind == env::ProblemKind::TSP && inst.num_nodes() <= kHeldKarpLimit;
  if (method == ReferenceMethod::HeldKarp || (method == ReferenceMethod::Auto && exact_ok)) {
    ref.tour = held_karp_exact(inst);
    ref.optimal = true;
  } else {
    ref.tour = two_opt(nearest_neighbor(inst, realized), inst, 1000, realized);
  }
  ref.objective = ref.tour.objective;
  return ref;
}

}  // namespace mdam::harness
