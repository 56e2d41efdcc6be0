#include "mdam/env/instance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mdam/autodiff/tensor.hpp"

namespace mdam::env {

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::TSP: return "TSP";
    case ProblemKind::CVRP: return "CVRP";
    case ProblemKind::SDVRP: return "SDVRP";
    case ProblemKind::OP: return "OP";
    case ProblemKind::PCTSP: return "PCTSP";
    case ProblemKind::SPCTSP: return "SPCTSP";
  }
  return "?";
}

std::optional<ProblemKind> parse_kind(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (auto k : {ProblemKind::TSP, ProblemKind::CVRP, ProblemKind::SDVRP, ProblemKind::OP,
                 ProblemKind::PCTSP, ProblemKind::SPCTSP}) {
    if (upper == to_string(k)) return k;
  }
  return std::nullopt;
}

bool has_depot(ProblemKind kind) { return kind != ProblemKind::TSP; }
bool has_demands(ProblemKind kind) {
  return kind == ProblemKind::CVRP || kind == ProblemKind::SDVRP;
}
bool has_prizes(ProblemKind kind) {
  return kind == ProblemKind::OP || kind == ProblemKind::PCTSP || kind == ProblemKind::SPCTSP;
}
bool has_penalties(ProblemKind kind) {
  return kind == ProblemKind::PCTSP || kind == ProblemKind::SPCTSP;
}

double RoutingInstance::distance(std::size_t i, std::size_t j) const {
  return std::hypot(coords[i].x - coords[j].x, coords[i].y - coords[j].y);
}

namespace {

// Piecewise-linear through the anchor points, extrapolating the end slopes.
double piecewise(std::size_t n, std::initializer_list<std::pair<double, double>> anchors) {
  std::vector<std::pair<double, double>> pts(anchors);
  const double x = static_cast<double>(n);
  std::size_t seg = 0;
  while (seg + 2 < pts.size() && x > pts[seg + 1].first) ++seg;
  auto [x0, y0] = pts[seg];
  auto [x1, y1] = pts[seg + 1];
  return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
}

}  // namespace

int cvrp_capacity(std::size_t n) {
  return static_cast<int>(std::lround(piecewise(n, {{0, 20}, {20, 30}, {50, 40}, {100, 50}})));
}

double op_length_budget(std::size_t n) {
  if (n <= 20) return 2.0;
  if (n >= 100) return 4.0;
  return piecewise(n, {{20, 2.0}, {50, 3.0}, {100, 4.0}});
}

double pctsp_penalty_k(std::size_t n) {
  if (n <= 20) return 2.0;
  if (n <= 50) return 3.0;
  return 4.0;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  // splitmix64 finalizer over a simple combination.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(a) ^ b) ^ c);
}

RoutingInstance generate_instance(ProblemKind kind, std::size_t n, std::uint64_t seed,
                                  const GenerationOptions& options) {
  if (n < 2) throw ConfigError("generate_instance: n must be at least 2");
  RoutingInstance inst;
  inst.kind = kind;
  inst.size = n;
  inst.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t nodes = has_depot(kind) ? n + 1 : n;
  inst.coords.resize(nodes);
  for (auto& p : inst.coords) {
    p.x = unit(rng);
    p.y = unit(rng);
  }

  if (has_demands(kind)) {
    std::uniform_int_distribution<int> demand(1, 9);
    inst.capacity = cvrp_capacity(n);
    inst.demands.assign(nodes, 0);
    for (std::size_t i = 1; i < nodes; ++i) inst.demands[i] = demand(rng);
  }

  if (kind == ProblemKind::OP) {
    inst.length_budget = op_length_budget(n);
    inst.prizes.assign(nodes, 0.0);
    double max_d = 0.0;
    for (std::size_t i = 1; i < nodes; ++i) max_d = std::max(max_d, inst.distance(0, i));
    for (std::size_t i = 1; i < nodes; ++i) {
      const double rel = max_d > 0.0 ? inst.distance(0, i) / max_d : 0.0;
      inst.prizes[i] = (1.0 + std::floor(99.0 * rel)) / 100.0;
    }
  }

  if (has_penalties(kind)) {
    const double k = options.penalty_k.value_or(pctsp_penalty_k(n));
    const double nd = static_cast<double>(n);
    inst.prize_threshold = options.prize_threshold;
    inst.prizes.assign(nodes, 0.0);
    inst.penalties.assign(nodes, 0.0);
    for (std::size_t i = 1; i < nodes; ++i) inst.penalties[i] = unit(rng) * options.penalty_factor * k / nd;
    for (std::size_t i = 1; i < nodes; ++i) inst.prizes[i] = unit(rng) * options.prize_scale / nd;
  }
  return inst;
}

std::size_t feature_dim(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::TSP: return 2;
    case ProblemKind::CVRP:
    case ProblemKind::SDVRP:
    case ProblemKind::OP: return 3;
    case ProblemKind::PCTSP:
    case ProblemKind::SPCTSP: return 4;
  }
  return 0;
}

std::vector<double> input_features(const RoutingInstance& inst) {
  const std::size_t k = feature_dim(inst.kind);
  const std::size_t nodes = inst.num_nodes();
  std::vector<double> out(nodes * k, 0.0);
  for (std::size_t i = 0; i < nodes; ++i) {
    double* row = out.data() + i * k;
    row[0] = inst.coords[i].x;
    row[1] = inst.coords[i].y;
    if (has_depot(inst.kind) && i == 0) continue;
    switch (inst.kind) {
      case ProblemKind::TSP: break;
      case ProblemKind::CVRP:
      case ProblemKind::SDVRP:
        row[2] = static_cast<double>(inst.demands[i]) / static_cast<double>(inst.capacity);
        break;
      case ProblemKind::OP: row[2] = inst.prizes[i]; break;
      case ProblemKind::PCTSP:
      case ProblemKind::SPCTSP:
        row[2] = inst.prizes[i];
        row[3] = inst.penalties[i];
        break;
    }
  }
  return out;
}

double realize_stochastic_prize(double expected, std::mt19937_64& rng) {
  if (expected < 0.0) throw ContractError("realize_stochastic_prize: negative expectation");
  if (expected == 0.0) return 0.0;
  std::uniform_real_distribution<double> dist(0.0, 2.0 * expected);
  return dist(rng);
}

std::vector<double> realize_prizes(const RoutingInstance& instance, std::uint64_t evaluation_seed) {
  std::mt19937_64 rng(mix_seed(instance.seed, evaluation_seed, 0x5bc7));
  std::vector<double> out(instance.prizes.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = realize_stochastic_prize(instance.prizes[i], rng);
  return out;
}

}  // namespace mdam::env
