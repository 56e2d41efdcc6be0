#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mdam/harness/reference.hpp"
#include "mdam/search/solve.hpp"

namespace mdam::harness {

struct EvalRow {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double objective = 0.0;  // minimized objective
  double reported = 0.0;   // prize for OP, objective otherwise
  double reference = 0.0;  // reported value of the reference solution
  double gap = 0.0;
  double seconds = 0.0;
  int sole_winner = -1;
  std::vector<double> decoder_objectives;
  bool valid = true;

  bool operator==(const EvalRow&) const = default;
};

struct EvalReport {
  std::map<std::string, std::string> meta;
  std::vector<EvalRow> rows;

  double mean_objective() const;  // over valid rows, reported values
  double std_objective() const;
  double mean_gap() const;
  double total_seconds() const;

  bool operator==(const EvalReport&) const = default;
};

struct EvalOptions {
  search::SolveOptions solve;
  ReferenceMethod reference = ReferenceMethod::Auto;
  bool compute_reference = true;
  /// Worker threads; 0 = hardware concurrency.
  std::size_t threads = 0;
  /// Seeds the SPCTSP prize realizations shared by model and reference.
  std::uint64_t evaluation_seed = 0;
};

/// Gap of a reported value against the reference: (obj - ref)/ref, or
/// (ref - prize)/ref for OP.
double gap_of(env::ProblemKind kind, double reported, double reference);

/// Solves every instance, validates each trajectory with the independent
/// checker and compares with the reference. Rows keep dataset order.
EvalReport run_eval(const std::vector<env::RoutingInstance>& data, const nn::ModelParams& params,
                    const EvalOptions& options);

/// Reference-only report (the `oracle` command).
EvalReport run_oracle(const std::vector<env::RoutingInstance>& data, ReferenceMethod method,
                      std::size_t threads = 0, std::uint64_t evaluation_seed = 0);

/// Mean over instances of the first-step KL summed over ordered decoder
/// pairs, with eval-mode BN and the untouched initial state.
double first_step_diversity(const nn::ModelParams& params, const std::vector<env::RoutingInstance>& data);

void write_csv(std::ostream& out, const EvalReport& report);
EvalReport read_csv(std::istream& in);

}  // namespace mdam::harness
