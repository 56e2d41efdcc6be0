#include "mdam/search/beam.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <unordered_map>

namespace mdam::search {

bool collapses(const env::ConstructionState& a, const env::ConstructionState& b) {
  return a.start == b.start && a.current == b.current && a.done == b.done && a.visited == b.visited &&
         a.remaining_demand == b.remaining_demand;
}

Dominance dominance_check(const BeamEntry& a, const BeamEntry& b, env::ProblemKind kind) {
  if (a.decoder != b.decoder) throw ContractError("dominance_check: entries belong to different decoders");
  if (!collapses(a.state, b.state)) return Dominance::Incomparable;
  const auto& sa = a.state;
  const auto& sb = b.state;
  auto decide = [](bool a_better, bool b_better) {
    if (a_better) return Dominance::ADominates;
    if (b_better) return Dominance::BDominates;
    return Dominance::Incomparable;
  };
  switch (kind) {
    case env::ProblemKind::TSP:
      return decide(sa.partial_cost <= sb.partial_cost, sb.partial_cost <= sa.partial_cost);
    case env::ProblemKind::CVRP:
    case env::ProblemKind::SDVRP:
      return decide(sa.partial_cost <= sb.partial_cost && sa.remaining_capacity >= sb.remaining_capacity,
                    sb.partial_cost <= sa.partial_cost && sb.remaining_capacity >= sa.remaining_capacity);
    case env::ProblemKind::OP:
    case env::ProblemKind::PCTSP:
    case env::ProblemKind::SPCTSP:
      return decide(sa.partial_cost <= sb.partial_cost && sa.collected_prize >= sb.collected_prize,
                    sb.partial_cost <= sa.partial_cost && sb.collected_prize >= sa.collected_prize);
  }
  return Dominance::Incomparable;
}

namespace {

std::uint64_t signature_hash(const env::ConstructionState& s) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mixin = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  mixin(static_cast<std::uint64_t>(s.start + 1));
  mixin(static_cast<std::uint64_t>(s.current + 1));
  mixin(s.done ? 1 : 0);
  for (auto v : s.visited) mixin(v);
  for (int d : s.remaining_demand) mixin(static_cast<std::uint64_t>(d));
  return h;
}

std::vector<int> signature_key(const env::ConstructionState& s) {
  std::vector<int> key{s.start, s.current};
  key.insert(key.end(), s.visited.begin(), s.visited.end());
  key.insert(key.end(), s.remaining_demand.begin(), s.remaining_demand.end());
  return key;
}

std::vector<std::size_t> block_rows(std::span<const std::size_t> index, std::size_t block) {
  std::vector<std::size_t> rows;
  rows.reserve(index.size() * block);
  for (std::size_t i : index) {
    for (std::size_t r = 0; r < block; ++r) rows.push_back(i * block + r);
  }
  return rows;
}

nn::NodeEmbeddings select(const nn::NodeEmbeddings& e, std::span<const std::size_t> index) {
  nn::NodeEmbeddings out;
  out.nodes = ad::gather_rows(e.nodes, block_rows(index, e.num_nodes));
  out.mean = ad::gather_rows(e.mean, index);
  out.batch = index.size();
  out.num_nodes = e.num_nodes;
  return out;
}

nn::DecoderKeys select(const nn::DecoderKeys& k, std::span<const std::size_t> index) {
  nn::DecoderKeys out;
  const auto rows = block_rows(index, k.num_nodes);
  out.glimpse_k = ad::gather_rows(k.glimpse_k, rows);
  out.glimpse_v = ad::gather_rows(k.glimpse_v, rows);
  out.pointer_k = ad::gather_rows(k.pointer_k, rows);
  out.batch = index.size();
  out.num_nodes = k.num_nodes;
  return out;
}

struct Candidate {
  std::size_t entry;
  int node;  // -1: finished entry carried over
  double total;
  double local;
};

struct BeamRun {
  env::Trajectory best;
  bool have_best = false;
  std::size_t merges = 0;
};

void offer(BeamRun& run, const BeamEntry& e) {
  const double obj = env::objective(e.state);
  if (!run.have_best || obj < run.best.objective) {
    run.best.nodes = e.nodes;
    run.best.step_log_probs = e.step_log_probs;
    run.best.objective = obj;
    run.best.decoder = static_cast<int>(e.decoder);
    run.have_best = true;
  }
}

BeamRun run_beam(const nn::ModelParams& params, const env::RoutingInstance& instance,
                 const nn::Encoding& enc, std::size_t decoder, std::size_t width, std::size_t period,
                 const BeamOptions& options, std::set<std::vector<int>>& signatures) {
  const env::ProblemKind kind = instance.kind;
  const std::size_t n = instance.num_nodes();
  BeamRun run;

  std::vector<BeamEntry> entries(1);
  entries[0].state = env::initial_state(instance, options.realization);
  entries[0].decoder = decoder;
  nn::NodeEmbeddings emb = enc.embeddings;
  nn::DecoderKeys keys = nn::prepare_keys(params.decoders[decoder], emb);
  std::size_t last_embed = 0;

  for (std::size_t step = 0;; ++step) {
    const bool all_done =
        std::all_of(entries.begin(), entries.end(), [](const BeamEntry& e) { return e.state.done; });
    if (all_done) break;
    const std::size_t count = entries.size();
    std::vector<const env::ConstructionState*> ptrs(count);
    for (std::size_t i = 0; i < count; ++i) ptrs[i] = &entries[i].state;

    if (options.use_eg && step - last_embed >= period) {
      const std::vector<std::size_t> same(count, 0);
      emb = nn::reembed(params, enc.cache.select(same), ptrs, nn::BatchNormMode::Eval);
      keys = nn::prepare_keys(params.decoders[decoder], emb);
      last_embed = step;
    }
    std::vector<std::uint8_t> invalid(count * n);
    for (std::size_t i = 0; i < count; ++i) {
      std::span<std::uint8_t> row(invalid.data() + i * n, n);
      if (entries[i].state.done) {
        std::fill(row.begin(), row.end(), std::uint8_t{1});
        row[0] = 0;
      } else {
        env::feasible_mask(entries[i].state, row);
      }
    }
    ad::Tensor logp = nn::step_log_probs(params, decoder, emb, keys, ptrs, invalid);

    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < count; ++i) {
      if (entries[i].state.done) {
        cands.push_back({i, -1, entries[i].log_prob, 0.0});
        continue;
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (invalid[i * n + j]) continue;
        const double lp = logp(i, j);
        cands.push_back({i, static_cast<int>(j), entries[i].log_prob + lp, lp});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.total != b.total) return a.total > b.total;
      if (a.node != b.node) return a.node < b.node;
      return a.entry < b.entry;
    });

    std::vector<BeamEntry> next;
    std::vector<std::size_t> parent;
    std::vector<bool> dead;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_sig;
    std::size_t alive = 0;
    for (const auto& c : cands) {
      if (alive >= width) break;
      BeamEntry child = entries[c.entry];
      if (c.node >= 0) {
        env::transition(child.state, c.node);
        child.nodes.push_back(c.node);
        child.step_log_probs.push_back(c.local);
        child.log_prob = c.total;
      }
      bool dropped = false;
      std::uint64_t h = 0;
      if (options.merge) {
        h = signature_hash(child.state);
        auto it = by_sig.find(h);
        if (it != by_sig.end()) {
          for (std::size_t idx : it->second) {
            if (dead[idx]) continue;
            const Dominance d = dominance_check(next[idx], child, kind);
            if (d == Dominance::ADominates) {
              next[idx].log_prob = std::max(next[idx].log_prob, child.log_prob);
              dropped = true;
              ++run.merges;
              break;
            }
            if (d == Dominance::BDominates) {
              child.log_prob = std::max(child.log_prob, next[idx].log_prob);
              dead[idx] = true;
              --alive;
              ++run.merges;
            }
          }
        }
      }
      if (dropped) continue;
      if (c.node >= 0 && child.state.done) offer(run, child);
      if (options.merge) by_sig[h].push_back(next.size());
      next.push_back(std::move(child));
      parent.push_back(c.entry);
      dead.push_back(false);
      ++alive;
    }

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < next.size(); ++i) {
      if (!dead[i]) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return next[a].log_prob > next[b].log_prob; });
    std::vector<BeamEntry> kept;
    std::vector<std::size_t> rows;
    kept.reserve(order.size());
    for (std::size_t i : order) {
      signatures.insert(signature_key(next[i].state));
      rows.push_back(parent[i]);
      kept.push_back(std::move(next[i]));
    }
    entries = std::move(kept);
    emb = select(emb, rows);
    keys = select(keys, rows);
  }
  return run;
}

}  // namespace

BeamResult beam_search(const nn::ModelParams& params, const env::RoutingInstance& instance,
                       const BeamOptions& options) {
  if (options.width == 0) throw ConfigError("beam_search: width must be positive");
  std::vector<std::size_t> which = options.decoders;
  if (which.empty()) {
    for (std::size_t m = 0; m < params.decoders.size(); ++m) which.push_back(m);
  }
  for (std::size_t m : which) {
    if (m >= params.decoders.size()) throw ConfigError("beam_search: decoder index out of range");
  }
  const std::size_t width = (options.width + which.size() - 1) / which.size();
  const std::size_t period = resolve_period(params, instance.size, options.eg_period);

  ad::NoGradGuard guard;
  const env::RoutingInstance* batch[] = {&instance};
  nn::Encoding enc = nn::encode(params, batch, nn::BatchNormMode::Eval);

  BeamResult res;
  std::set<std::vector<int>> signatures;
  bool have = false;
  for (std::size_t m : which) {
    BeamRun run = run_beam(params, instance, enc, m, width, period, options, signatures);
    res.merges += run.merges;
    if (!have || run.best.objective < res.best.objective) {
      res.best = run.best;
      have = true;
    }
    res.per_decoder_best.push_back(std::move(run.best));
  }
  res.distinct_signatures = signatures.size();
  return res;
}

}  // namespace mdam::search
