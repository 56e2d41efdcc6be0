#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace mdam::env {

enum class ProblemKind { TSP, CVRP, SDVRP, OP, PCTSP, SPCTSP };

std::string_view to_string(ProblemKind kind);
std::optional<ProblemKind> parse_kind(std::string_view text);

/// True for the kinds whose node 0 is a depot (everything but TSP).
bool has_depot(ProblemKind kind);
bool has_demands(ProblemKind kind);
bool has_prizes(ProblemKind kind);
bool has_penalties(ProblemKind kind);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// One problem instance. For depot problems node 0 is the depot and the
/// remaining `size` nodes are customers, so `coords.size() == size + 1`.
/// For TSP `coords.size() == size`.
struct RoutingInstance {
  ProblemKind kind = ProblemKind::TSP;
  std::size_t size = 0;
  std::uint64_t seed = 0;
  std::vector<Point> coords;
  std::vector<int> demands;      // CVRP, SDVRP; depot entry 0
  int capacity = 0;              // CVRP, SDVRP
  std::vector<double> prizes;    // OP, PCTSP; expected prizes for SPCTSP
  std::vector<double> penalties; // PCTSP, SPCTSP
  double length_budget = 0.0;    // OP
  double prize_threshold = 0.0;  // PCTSP, SPCTSP

  std::size_t num_nodes() const { return coords.size(); }
  double distance(std::size_t i, std::size_t j) const;
};

/// Distribution knobs for the prize-collecting variants.
struct GenerationOptions {
  double prize_scale = 4.0;      // prizes ~ U(0,1) * prize_scale / n
  double prize_threshold = 1.0;
  double penalty_factor = 3.0;   // penalties ~ U(0, penalty_factor * K / n)
  std::optional<double> penalty_k;  // K; by size bucket when unset
};

int cvrp_capacity(std::size_t n);
double op_length_budget(std::size_t n);
double pctsp_penalty_k(std::size_t n);

RoutingInstance generate_instance(ProblemKind kind, std::size_t n, std::uint64_t seed,
                                  const GenerationOptions& options = {});

/// Per-node feature rows fed to the encoder.
///
/// TSP: (x, y). CVRP/SDVRP: (x, y, demand/capacity). OP: (x, y, prize).
/// PCTSP/SPCTSP: (x, y, prize, penalty) with the expected prize for
/// SPCTSP. Depot rows carry zeros in the non-coordinate slots; the
/// encoder projects them with a separate (x, y) projection.
std::vector<double> input_features(const RoutingInstance& instance);
std::size_t feature_dim(ProblemKind kind);

/// Draws the revealed prize of an SPCTSP node: Uniform(0, 2*expected).
double realize_stochastic_prize(double expected, std::mt19937_64& rng);

/// One realization of every node's prize, seeded from the instance seed
/// and `evaluation_seed` so that every method sees the same draw.
std::vector<double> realize_prizes(const RoutingInstance& instance, std::uint64_t evaluation_seed);

/// Mixes several integers into a well-spread 64-bit seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace mdam::env
