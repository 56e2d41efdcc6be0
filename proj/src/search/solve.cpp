#include "mdam/search/solve.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace mdam::search {

namespace {

constexpr std::size_t kChunk = 256;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t parse_count(const std::string& text, const std::string& whole) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size() || v == 0) {
    throw ConfigError("bad solve mode '" + whole + "'");
  }
  return v;
}

}  // namespace

SolveMode SolveMode::parse(const std::string& text) {
  SolveMode m;
  if (text == "greedy") return m;
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("bad solve mode '" + text + "'");
  const std::string head = text.substr(0, colon);
  if (head == "sample") {
    m.kind = Kind::Sample;
  } else if (head == "beam") {
    m.kind = Kind::Beam;
  } else {
    throw ConfigError("bad solve mode '" + text + "'");
  }
  m.amount = parse_count(text.substr(colon + 1), text);
  return m;
}

std::string SolveMode::to_string() const {
  switch (kind) {
    case Kind::Greedy:
      return "greedy";
    case Kind::Sample:
      return "sample:" + std::to_string(amount);
    case Kind::Beam:
      return "beam:" + std::to_string(amount);
  }
  return "greedy";
}

void mark_winners(SolveReport& r) {
  double best = kInf;
  for (double v : r.decoder_objectives) best = std::min(best, v);
  r.winners.assign(r.decoder_objectives.size(), false);
  int count = 0;
  const double tol = 1e-9 * std::max(1.0, std::abs(best));
  for (std::size_t m = 0; m < r.decoder_objectives.size(); ++m) {
    if (std::isfinite(best) && std::abs(r.decoder_objectives[m] - best) <= tol) {
      r.winners[m] = true;
      ++count;
      r.sole_winner = static_cast<int>(m);
    }
  }
  if (count != 1) r.sole_winner = -1;
}

std::vector<SolveReport> solve(const nn::ModelParams& params,
                               std::span<const env::RoutingInstance* const> instances,
                               const SolveOptions& options, std::span<const Realization> realizations) {
  std::vector<std::size_t> which = options.decoders;
  if (which.empty()) {
    for (std::size_t m = 0; m < params.decoders.size(); ++m) which.push_back(m);
  }
  for (std::size_t m : which) {
    if (m >= params.decoders.size()) throw ConfigError("solve: decoder index out of range");
  }
  std::vector<SolveReport> out(instances.size());
  for (auto& r : out) {
    r.decoder_objectives.assign(which.size(), kInf);
    r.best.objective = kInf;
  }
  auto consider = [](SolveReport& r, std::size_t slot, const env::Trajectory& t) {
    if (t.objective < r.decoder_objectives[slot]) r.decoder_objectives[slot] = t.objective;
    if (t.objective < r.best.objective) r.best = t;
  };

  if (options.mode.kind == SolveMode::Kind::Beam) {
    for (std::size_t i = 0; i < instances.size(); ++i) {
      BeamOptions bo;
      bo.width = options.mode.amount;
      bo.use_eg = options.use_eg;
      bo.eg_period = options.eg_period;
      bo.merge = options.merge;
      bo.decoders = which;
      if (!realizations.empty()) bo.realization = realizations[i];
      BeamResult br = beam_search(params, *instances[i], bo);
      for (std::size_t s = 0; s < which.size(); ++s) consider(out[i], s, br.per_decoder_best[s]);
    }
  } else {
    ad::NoGradGuard guard;
    for (std::size_t lo = 0; lo < instances.size(); lo += kChunk) {
      const std::size_t hi = std::min(instances.size(), lo + kChunk);
      auto chunk = instances.subspan(lo, hi - lo);
      auto reals = realizations.empty() ? realizations : realizations.subspan(lo, hi - lo);
      nn::Encoding enc = nn::encode(params, chunk, nn::BatchNormMode::Eval);
      const bool sampling = options.mode.kind == SolveMode::Kind::Sample;
      const std::size_t runs = sampling ? options.mode.amount : which.size();
      for (std::size_t s = 0; s < runs; ++s) {
        const std::size_t slot = s % which.size();
        RolloutOptions ro;
        ro.decoder = which[slot];
        ro.use_eg = options.use_eg;
        ro.eg_period = options.eg_period;
        if (sampling) {
          ro.policy = Policy::Sample;
          ro.seed = env::mix_seed(options.seed, s, lo);
        }
        auto res = rollout(params, enc, chunk, ro, reals);
        for (std::size_t i = 0; i < chunk.size(); ++i) consider(out[lo + i], slot, res.trajectories[i]);
      }
    }
  }
  for (auto& r : out) mark_winners(r);
  return out;
}

}  // namespace mdam::search
