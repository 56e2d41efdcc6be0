#include "mdam/harness/eval.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <limits>
#include <mutex>
#include <thread>

#include "mdam/env/dataset.hpp"
#include "mdam/env/validate.hpp"
#include "mdam/model/model.hpp"

namespace mdam::harness {

namespace {

std::string real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_real(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double d = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return d;
  } catch (const std::exception&) {
    throw env::DataError("csv: bad number '" + s + "'");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

constexpr const char* kHeader = "index,seed,objective,reported,reference,gap,seconds,sole_winner,valid,decoder_objectives";

std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t t = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(t, jobs));
}

// Runs job(i) for i in [0, jobs) on a small pool; each job writes only its own slots.
template <class F>
void parallel_for(std::size_t jobs, std::size_t threads, F&& job) {
  const std::size_t workers = worker_count(threads, jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs) return;
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void finish(EvalReport& r) {
  r.meta["rows"] = std::to_string(r.rows.size());
  std::size_t invalid = 0;
  for (const auto& row : r.rows) invalid += row.valid ? 0 : 1;
  r.meta["invalid_rows"] = std::to_string(invalid);
  r.meta["mean_objective"] = real(r.mean_objective());
  r.meta["std_objective"] = real(r.std_objective());
  r.meta["mean_gap"] = real(r.mean_gap());
  r.meta["total_seconds"] = real(r.total_seconds());
}

using Clock = std::chrono::steady_clock;

}  // namespace

double EvalReport::mean_objective() const {
  double s = 0.0;
  std::size_t k = 0;
  for (const auto& r : rows) {
    if (!r.valid) continue;
    s += r.reported;
    ++k;
  }
  return k ? s / static_cast<double>(k) : 0.0;
}

double EvalReport::std_objective() const {
  const double mu = mean_objective();
  double s = 0.0;
  std::size_t k = 0;
  for (const auto& r : rows) {
    if (!r.valid) continue;
    s += (r.reported - mu) * (r.reported - mu);
    ++k;
  }
  return k > 1 ? std::sqrt(s / static_cast<double>(k - 1)) : 0.0;
}

double EvalReport::mean_gap() const {
  double s = 0.0;
  std::size_t k = 0;
  for (const auto& r : rows) {
    if (!r.valid) continue;
    s += r.gap;
    ++k;
  }
  return k ? s / static_cast<double>(k) : 0.0;
}

double EvalReport::total_seconds() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.seconds;
  return s;
}

double gap_of(env::ProblemKind kind, double reported, double reference) {
  if (reference == 0.0) return reported == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  if (kind == env::ProblemKind::OP) return (reference - reported) / reference;
  return (reported - reference) / reference;
}

double first_step_diversity(const nn::ModelParams& params, const std::vector<env::RoutingInstance>& data) {
  if (data.empty()) return 0.0;
  ad::NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& inst : data) {
    const env::RoutingInstance* one[] = {&inst};
    const auto enc = nn::encode(params, one, ad::BatchNormMode::Eval);
    const auto s = env::initial_state(inst);
    std::vector<nn::StepDistribution> dists;
    for (std::size_t m = 0; m < params.decoders.size(); ++m)
      dists.push_back(nn::step_distribution(params, m, enc.embeddings, s, 0));
    total += nn::first_step_kl(dists);
  }
  return total / static_cast<double>(data.size());
}

EvalReport run_eval(const std::vector<env::RoutingInstance>& data, const nn::ModelParams& params,
                    const EvalOptions& options) {
  EvalReport report;
  const auto& so = options.solve;
  report.meta["kind"] = std::string(env::to_string(params.config.kind));
  report.meta["mode"] = so.mode.to_string();
  report.meta["decoders"] = std::to_string(so.decoders.empty() ? params.decoders.size() : so.decoders.size());
  report.meta["eg"] = so.use_eg ? "on" : "off";
  report.meta["eg_period"] = std::to_string(so.eg_period);
  report.meta["merge"] = so.merge ? "on" : "off";
  report.meta["decoders_total"] = std::to_string(params.decoders.size());
  for (const auto& inst : data) {
    if (inst.kind != params.config.kind) {
      throw env::DataError("dataset kind " + std::string(env::to_string(inst.kind)) +
                           " does not match the checkpoint (" + std::string(env::to_string(params.config.kind)) +
                           ")");
    }
  }
  report.rows.resize(data.size());
  if (data.empty()) {
    finish(report);
    return report;
  }
  std::vector<search::Realization> reals(data.size());
  const bool stochastic = params.config.kind == env::ProblemKind::SPCTSP;
  if (stochastic) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      reals[i] = std::make_shared<const std::vector<double>>(env::realize_prizes(data[i], options.evaluation_seed));
    }
  }
  const std::size_t chunk = so.mode.kind == search::SolveMode::Kind::Beam ? 1 : 64;
  const std::size_t jobs = (data.size() + chunk - 1) / chunk;
  parallel_for(jobs, options.threads, [&](std::size_t job) {
    const std::size_t lo = job * chunk;
    const std::size_t hi = std::min(data.size(), lo + chunk);
    std::vector<const env::RoutingInstance*> ptrs;
    for (std::size_t i = lo; i < hi; ++i) ptrs.push_back(&data[i]);
    std::span<const search::Realization> rs;
    if (stochastic) rs = std::span<const search::Realization>(reals.data() + lo, hi - lo);
    search::SolveOptions local = so;
    local.seed = env::mix_seed(so.seed, lo);
    const auto t0 = Clock::now();
    auto sols = search::solve(params, ptrs, local, rs);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count() / static_cast<double>(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& sol = sols[i - lo];
      EvalRow& row = report.rows[i];
      row.index = i;
      row.seed = data[i].seed;
      row.seconds = secs;
      row.sole_winner = sol.sole_winner;
      row.decoder_objectives = sol.decoder_objectives;
      const std::vector<double>* rp = stochastic ? reals[i].get() : nullptr;
      const auto v = env::validate(data[i], sol.best.nodes, rp);
      row.valid = v.ok;
      row.objective = v.ok ? v.objective : sol.best.objective;
      row.reported = env::reported_value(data[i].kind, row.objective);
      if (options.compute_reference) {
        const Reference ref = reference_solution(data[i], options.reference, rp);
        row.reference = env::reported_value(data[i].kind, ref.objective);
        row.gap = gap_of(data[i].kind, row.reported, row.reference);
      }
    }
  });
  finish(report);
  return report;
}

EvalReport run_oracle(const std::vector<env::RoutingInstance>& data, ReferenceMethod method,
                      std::size_t threads, std::uint64_t evaluation_seed) {
  EvalReport report;
  report.meta["mode"] = method == ReferenceMethod::HeldKarp ? "heldkarp"
                        : method == ReferenceMethod::NearestTwoOpt ? "nn2opt"
                                                                   : "auto";
  if (!data.empty()) report.meta["kind"] = std::string(env::to_string(data[0].kind));
  report.rows.resize(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    std::vector<double> real;
    const std::vector<double>* rp = nullptr;
    if (data[i].kind == env::ProblemKind::SPCTSP) {
      real = env::realize_prizes(data[i], evaluation_seed);
      rp = &real;
    }
    const auto t0 = Clock::now();
    const Reference ref = reference_solution(data[i], method, rp);
    EvalRow& row = report.rows[i];
    row.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    row.index = i;
    row.seed = data[i].seed;
    const auto v = env::validate(data[i], ref.tour.nodes, rp);
    row.valid = v.ok;
    row.objective = ref.objective;
    row.reported = env::reported_value(data[i].kind, ref.objective);
    row.reference = row.reported;
    row.gap = 0.0;
  });
  finish(report);
  return report;
}

void write_csv(std::ostream& out, const EvalReport& r) {
  for (const auto& [k, v] : r.meta) out << '#' << k << '=' << v << '\n';
  out << kHeader << '\n';
  for (const auto& row : r.rows) {
    out << row.index << ',' << row.seed << ',' << real(row.objective) << ',' << real(row.reported) << ','
        << real(row.reference) << ',' << real(row.gap) << ',' << real(row.seconds) << ',' << row.sole_winner
        << ',' << (row.valid ? 1 : 0) << ',';
    for (std::size_t m = 0; m < row.decoder_objectives.size(); ++m) {
      if (m) out << ';';
      out << real(row.decoder_objectives[m]);
    }
    out << '\n';
  }
}

EvalReport read_csv(std::istream& in) {
  EvalReport r;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw env::DataError("csv: bad metadata line '" + line + "'");
      r.meta[line.substr(1, eq - 1)] = line.substr(eq + 1);
      continue;
    }
    if (!header) {
      if (line != kHeader) throw env::DataError("csv: unexpected header");
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 10) throw env::DataError("csv: expected 10 fields, got " + std::to_string(f.size()));
    EvalRow row;
    try {
      row.index = std::stoull(f[0]);
      row.seed = std::stoull(f[1]);
      row.sole_winner = std::stoi(f[7]);
    } catch (const std::exception&) {
      throw env::DataError("csv: bad integer field in '" + line + "'");
    }
    row.objective = parse_real(f[2]);
    row.reported = parse_real(f[3]);
    row.reference = parse_real(f[4]);
    row.gap = parse_real(f[5]);
    row.seconds = parse_real(f[6]);
    row.valid = f[8] == "1";
    if (!f[9].empty()) {
      for (const auto& s : split(f[9], ';')) row.decoder_objectives.push_back(parse_real(s));
    }
    r.rows.push_back(std::move(row));
  }
  if (!header) throw env::DataError("csv: missing header");
  return r;
}

}  // namespace mdam::harness
