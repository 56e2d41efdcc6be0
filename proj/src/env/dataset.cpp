#include "mdam/env/dataset.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace mdam::env {

std::string format_instance(const RoutingInstance& inst) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << to_string(inst.kind) << ' ' << inst.size << ' ' << inst.seed;
  for (const auto& p : inst.coords) os << ' ' << p.x << ' ' << p.y;
  if (has_demands(inst.kind)) {
    for (int d : inst.demands) os << ' ' << d;
    os << ' ' << inst.capacity;
  }
  if (has_prizes(inst.kind)) {
    for (double p : inst.prizes) os << ' ' << p;
  }
  if (has_penalties(inst.kind)) {
    for (double p : inst.penalties) os << ' ' << p;
    os << ' ' << inst.prize_threshold;
  }
  if (inst.kind == ProblemKind::OP) os << ' ' << inst.length_budget;
  return os.str();
}

RoutingInstance parse_instance(const std::string& line) {
  std::istringstream is(line);
  std::string kind_text;
  RoutingInstance inst;
  if (!(is >> kind_text >> inst.size >> inst.seed)) throw DataError("dataset: truncated header");
  auto kind = parse_kind(kind_text);
  if (!kind) throw DataError("dataset: unknown problem kind '" + kind_text + "'");
  inst.kind = *kind;
  const std::size_t nodes = has_depot(inst.kind) ? inst.size + 1 : inst.size;
  auto read = [&](auto& value, const char* what) {
    if (!(is >> value)) throw DataError(std::string("dataset: missing ") + what);
  };
  inst.coords.resize(nodes);
  for (auto& p : inst.coords) {
    read(p.x, "coordinate");
    read(p.y, "coordinate");
  }
  if (has_demands(inst.kind)) {
    inst.demands.resize(nodes);
    for (int& d : inst.demands) read(d, "demand");
    read(inst.capacity, "capacity");
  }
  if (has_prizes(inst.kind)) {
    inst.prizes.resize(nodes);
    for (double& p : inst.prizes) read(p, "prize");
  }
  if (has_penalties(inst.kind)) {
    inst.penalties.resize(nodes);
    for (double& p : inst.penalties) read(p, "penalty");
    read(inst.prize_threshold, "prize threshold");
  }
  if (inst.kind == ProblemKind::OP) read(inst.length_budget, "length budget");
  std::string extra;
  if (is >> extra) throw DataError("dataset: trailing fields in record");
  return inst;
}

void write_dataset(std::ostream& out, const std::vector<RoutingInstance>& instances) {
  for (const auto& inst : instances) out << format_instance(inst) << '\n';
}

std::vector<RoutingInstance> read_dataset(std::istream& in) {
  std::vector<RoutingInstance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_instance(line));
  }
  return out;
}

void save_dataset(const std::string& path, const std::vector<RoutingInstance>& instances) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_dataset(out, instances);
}

std::vector<RoutingInstance> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_dataset(in);
}

std::vector<RoutingInstance> generate_dataset(ProblemKind kind, std::size_t n, std::size_t count,
                                              std::uint64_t seed) {
  std::vector<RoutingInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_instance(kind, n, mix_seed(seed, i)));
  return out;
}

}  // namespace mdam::env
