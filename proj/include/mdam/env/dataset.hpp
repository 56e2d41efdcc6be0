#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdam/env/instance.hpp"

namespace mdam::env {

/// Thrown for malformed or unreadable dataset files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One whitespace-separated record: kind, n, seed, flattened coordinates,
/// then demands and capacity (CVRP/SDVRP), prizes and length budget (OP),
/// or prizes, penalties and prize threshold (PCTSP/SPCTSP). Reals carry
/// 17 significant digits so records round-trip exactly.
std::string format_instance(const RoutingInstance& instance);
RoutingInstance parse_instance(const std::string& line);

void write_dataset(std::ostream& out, const std::vector<RoutingInstance>& instances);
std::vector<RoutingInstance> read_dataset(std::istream& in);

void save_dataset(const std::string& path, const std::vector<RoutingInstance>& instances);
std::vector<RoutingInstance> load_dataset(const std::string& path);

std::vector<RoutingInstance> generate_dataset(ProblemKind kind, std::size_t n, std::size_t count,
                                              std::uint64_t seed);

}  // namespace mdam::env
