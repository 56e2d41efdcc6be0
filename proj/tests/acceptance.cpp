// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.
//
//   acceptance [--cache DIR] [N ...]
//
// Trained desk-scale checkpoints are cached in DIR (default
// ./acceptance_cache) so later runs only evaluate.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mdam/env/dataset.hpp"
#include "mdam/env/validate.hpp"
#include "mdam/harness/config.hpp"
#include "mdam/harness/eval.hpp"
#include "mdam/harness/reference.hpp"
#include "mdam/search/beam.hpp"
#include "mdam/search/rollout.hpp"
#include "mdam/train/checkpoint.hpp"
#include "mdam/train/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace mdam;
using ad::Tensor;
using env::ProblemKind;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-4;
constexpr double kGradFloor = 1e-4;
constexpr double kGradStep = 1e-6;
constexpr double kProbSumTol = 1e-6;
constexpr double kClip = 10.0;
constexpr double kEgTol = 1e-9;
constexpr double kOptTol = 1e-9;
constexpr double kMergeTol = 1e-12;
constexpr double kGreedyGapMax = 0.10;
constexpr double kBeam30GapMax = 0.05;
constexpr double kWinnerShareMin = 0.05;
constexpr double kGradSeconds = 60.0;
constexpr double kDistSeconds = 60.0;
constexpr double kMergeSeconds = 600.0;

constexpr std::size_t kDistributions = 100000;
constexpr std::size_t kEgPairs = 100;
constexpr std::size_t kBeamGreedyInstances = 1000;
constexpr std::size_t kHeldKarpInstances = 200;
constexpr std::size_t kMergeTsp = 1000;
constexpr std::size_t kMergeCvrp = 500;
constexpr std::size_t kEvalInstances = 1000;
constexpr std::uint64_t kEvalSeed = 20261014;
constexpr std::uint64_t kSeeds[] = {1, 2, 3};

const ProblemKind kAllKinds[] = {ProblemKind::TSP, ProblemKind::CVRP, ProblemKind::SDVRP,
                                 ProblemKind::OP,  ProblemKind::PCTSP, ProblemKind::SPCTSP};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<const env::RoutingInstance*> ptrs(const std::vector<env::RoutingInstance>& v) {
  std::vector<const env::RoutingInstance*> out;
  for (const auto& x : v) out.push_back(&x);
  return out;
}

// Small random model with non-trivial BN running statistics.
nn::ModelParams random_model(ProblemKind kind, std::size_t d, std::size_t decoders, std::uint64_t seed,
                             double pointer_scale = 1.0) {
  nn::ModelConfig c;
  c.kind = kind;
  c.embed_dim = d;
  c.heads = 2;
  c.layers = 2;
  c.ff_hidden = 16;
  c.decoders = decoders;
  auto p = nn::init_params(c, seed);
  std::mt19937_64 rng(seed ^ 0x5eed);
  std::uniform_real_distribution<double> mu(-0.5, 0.5), var(0.5, 2.0);
  for (auto& s : p.named_stats()) {
    for (double& v : s.stats->running_mean) v = mu(rng);
    for (double& v : s.stats->running_var) v = var(rng);
  }
  for (auto& dec : p.decoders)
    for (double& v : dec.pointer_q.values()) v *= pointer_scale;
  return p;
}

std::vector<Tensor> params_with_prefix(const nn::ModelParams& p, const std::string& prefix) {
  std::vector<Tensor> out;
  for (auto& nt : p.named_parameters())
    if (nt.name.rfind(prefix, 0) == 0) out.push_back(nt.tensor);
  return out;
}

// ---------------------------------------------------------------------------
// Trained checkpoints

struct Run {
  std::string name;
  train::TrainerConfig config;
};

Run make_run(const std::string& variant, std::uint64_t seed) {
  auto c = train::TrainerConfig::desk_scale();
  c.seed = seed;
  if (variant == "k0") c.k_kl = 0.0;
  if (variant == "noeg") c.use_eg = false;
  if (variant == "nomd") c.decoders = 1;
  return {variant + "_s" + std::to_string(seed), c};
}

class Cache {
 public:
  explicit Cache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  const nn::ModelParams& model(const std::string& variant, std::uint64_t seed) {
    const Run run = make_run(variant, seed);
    auto it = models_.find(run.name);
    if (it != models_.end()) return it->second;
    return models_.emplace(run.name, load_or_train(run)).first->second;
  }

 private:
  nn::ModelParams load_or_train(const Run& run) {
    const fs::path done = dir_ / (run.name + ".ckpt");
    const fs::path partial = dir_ / (run.name + ".partial");
    const std::string want = harness::format_config(run.config);
    if (fs::exists(done)) {
      auto s = train::load_checkpoint(done.string());
      if (harness::format_config(s.config) == want && s.epochs_done == run.config.epochs) return s.model;
      std::printf("  cached %s has a different configuration; retraining\n", run.name.c_str());
    }
    std::optional<train::Trainer> t;
    if (fs::exists(partial)) {
      auto s = train::load_checkpoint(partial.string());
      if (harness::format_config(s.config) == want) {
        std::printf("  resuming %s at epoch %zu\n", run.name.c_str(), s.epochs_done);
        t.emplace(std::move(s));
      }
    }
    if (!t) t.emplace(run.config);
    const auto t0 = Clock::now();
    std::printf("  training %s\n", run.name.c_str());
    std::fflush(stdout);
    t->train([&](const train::EpochMetrics& m) {
      std::printf("    %s epoch %zu  sampled %.4f  candidate %.4f  kl %.1f  (%.0fs)\n", run.name.c_str(), m.epoch,
                  m.mean_objective, m.candidate_score, m.mean_kl, seconds_since(t0));
      std::fflush(stdout);
      train::save_checkpoint(partial.string(), t->state());
    });
    train::save_checkpoint(done.string(), t->state());
    fs::remove(partial);
    return t->state().model;
  }

  fs::path dir_;
  std::map<std::string, nn::ModelParams> models_;
};

const std::vector<env::RoutingInstance>& eval_set() {
  static const auto data = env::generate_dataset(ProblemKind::TSP, 10, kEvalInstances, kEvalSeed);
  return data;
}

// Memoized evaluation of a cached model on the shared TSP-10 set.
struct Evaluator {
  Cache& cache;
  std::map<std::string, harness::EvalReport> reports;

  const harness::EvalReport& get(const std::string& variant, std::uint64_t seed, const std::string& mode,
                                 bool merge = true) {
    const std::string key = variant + "/" + std::to_string(seed) + "/" + mode + (merge ? "" : "/nomerge");
    auto it = reports.find(key);
    if (it != reports.end()) return it->second;
    harness::EvalOptions opt;
    opt.solve.mode = search::SolveMode::parse(mode);
    opt.solve.use_eg = variant != "noeg";
    opt.solve.merge = merge;
    opt.threads = 1;
    return reports.emplace(key, harness::run_eval(eval_set(), cache.model(variant, seed), opt)).first->second;
  }
  double mean(const std::string& variant, std::uint64_t seed, const std::string& mode, bool merge = true) {
    return get(variant, seed, mode, merge).mean_objective();
  }
};

// ---------------------------------------------------------------------------
// 1. Gradient integrity

Outcome criterion1() {
  const auto t0 = Clock::now();
  const std::size_t d = 8, heads = 2, n = 5, batch = 2, M = 2;
  std::mt19937_64 rng(101);
  using testing::grad_check;
  using testing::random_tensor;
  using testing::weighted_sum;
  std::vector<std::pair<std::string, double>> errs;
  auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> in) {
    errs.emplace_back(name, grad_check(f, std::move(in), kGradStep, kGradFloor));
  };

  Tensor x = random_tensor(batch * n, d, rng), y = random_tensor(batch * n, d, rng);
  Tensor w = random_tensor(d, d, rng), b = random_tensor(1, d, rng);
  check("matmul", [&] { return weighted_sum(ad::matmul(x, w), 1); }, {x, w});
  check("linear", [&] { return weighted_sum(ad::linear(x, w, b), 2); }, {x, w, b});
  check("add", [&] { return weighted_sum(ad::add(x, y), 3); }, {x, y});
  check("sub", [&] { return weighted_sum(ad::sub(x, y), 4); }, {x, y});
  check("mul", [&] { return weighted_sum(ad::mul(x, y), 5); }, {x, y});
  check("scale", [&] { return weighted_sum(ad::scale(x, -1.7), 6); }, {x});
  check("relu", [&] { return weighted_sum(ad::relu(x), 7); }, {x});
  check("tanh", [&] { return weighted_sum(ad::tanh(x), 8); }, {x});
  check("exp", [&] { return weighted_sum(ad::exp(x), 9); }, {x});
  check("sum", [&] { return ad::sum(ad::mul(x, y)); }, {x, y});
  check("mean", [&] { return ad::mean(ad::mul(x, x)); }, {x});
  check("concat_cols", [&] {
    const Tensor parts[] = {x, y};
    return weighted_sum(ad::concat_cols(parts), 10);
  }, {x, y});
  check("concat_rows", [&] {
    const Tensor parts[] = {x, y};
    return weighted_sum(ad::concat_rows(parts), 11);
  }, {x, y});
  const std::size_t rows[] = {3, 0, 9, 3};
  check("gather_rows", [&] { return weighted_sum(ad::gather_rows(x, rows), 12); }, {x});
  check("block_mean", [&] { return weighted_sum(ad::block_mean(x, n), 13); }, {x});
  const double sc = 1.0 / std::sqrt(static_cast<double>(d / heads));
  check("attention_scores", [&] { return weighted_sum(ad::attention_scores(x, y, batch, heads, sc), 14); }, {x, y});
  Tensor v = random_tensor(batch * n, d, rng);
  std::vector<std::uint8_t> keymask(batch * n, 0);
  keymask[1] = keymask[7] = keymask[8] = 1;
  check("masked_attend", [&] {
    return weighted_sum(ad::masked_attend(ad::attention_scores(x, y, batch, heads, sc), v, keymask, batch, heads), 15);
  }, {x, y, v});
  Tensor logits = random_tensor(batch, n, rng);
  std::vector<std::uint8_t> lmask(batch * n, 0);
  lmask[2] = lmask[5] = 1;
  check("masked_log_softmax", [&] { return weighted_sum(ad::exp(ad::masked_log_softmax(logits, lmask)), 16); },
        {logits});
  const std::size_t picked[] = {1, 4};
  check("pick", [&] { return ad::sum(ad::pick(ad::masked_log_softmax(logits, lmask), picked)); }, {logits});
  Tensor gamma = random_tensor(1, d, rng), beta = random_tensor(1, d, rng);
  ad::BatchNormStats st(d);
  check("batch_norm train", [&] {
    return weighted_sum(ad::batch_norm(x, gamma, beta, st, ad::BatchNormMode::Train), 17);
  }, {x, gamma, beta});
  check("batch_norm eval", [&] {
    return weighted_sum(ad::batch_norm(x, gamma, beta, st, ad::BatchNormMode::Eval), 18);
  }, {x, gamma, beta});
  std::vector<Tensor> dec_logits;
  for (std::size_t m = 0; m < M; ++m) dec_logits.push_back(random_tensor(batch, n, rng, true, -2.0, 2.0));
  check("first_step_kl", [&] {
    std::vector<Tensor> probs;
    for (auto& l : dec_logits) probs.push_back(ad::exp(ad::masked_log_softmax(l, lmask)));
    return nn::first_step_kl(probs);
  }, dec_logits);

  // Model pieces.
  train::TrainerConfig c;
  c.kind = ProblemKind::TSP;
  c.n = n;
  c.decoders = M;
  c.embed_dim = d;
  c.heads = heads;
  c.layers = 2;
  c.ff_hidden = 16;
  c.batch_size = 4;
  c.k_kl = 0.5;
  auto model = nn::init_params(c.model_config(), 7);
  auto base = nn::init_params(c.model_config(), 8);
  auto data = env::generate_dataset(ProblemKind::TSP, n, c.batch_size, 21);
  auto p = ptrs(data);
  Tensor xin = random_tensor(c.batch_size * n, d, rng);
  auto block_in = params_with_prefix(model, "encoder.block0");
  block_in.push_back(xin);
  check("attention_block", [&] {
    return weighted_sum(nn::attention_block(model.encoder.blocks[0], xin, c.batch_size, heads, ad::BatchNormMode::Train), 19);
  }, block_in);
  std::vector<std::uint8_t> visited(c.batch_size * n, 0);
  visited[0] = visited[6] = visited[7] = visited[13] = 1;
  auto eg_in = params_with_prefix(model, "encoder.eg");
  eg_in.push_back(xin);
  check("eg_precompute + eg_apply", [&] {
    auto e = nn::eg_apply(model.encoder.eg,
                          nn::eg_precompute(model.encoder.eg, xin, c.batch_size, heads), visited,
                          ad::BatchNormMode::Train);
    return ad::add(weighted_sum(e.nodes, 20), weighted_sum(e.mean, 21));
  }, eg_in);
  // Decoder step after two selections, through context, glimpse and pointer.
  std::vector<env::ConstructionState> states;
  for (auto& inst : data) {
    auto s = env::initial_state(inst);
    env::transition(s, 1);
    env::transition(s, 3);
    states.push_back(s);
  }
  std::vector<const env::ConstructionState*> sp;
  std::vector<std::uint8_t> invalid;
  for (auto& s : states) {
    sp.push_back(&s);
    auto f = env::feasible_mask(s);
    invalid.insert(invalid.end(), f.begin(), f.end());
  }
  auto dec_in = params_with_prefix(model, "decoder0");
  for (auto& t : params_with_prefix(model, "context")) dec_in.push_back(t);
  dec_in.push_back(xin);
  check("decoder step", [&] {
    nn::NodeEmbeddings emb;
    emb.nodes = xin;
    emb.mean = ad::block_mean(xin, n);
    emb.batch = c.batch_size;
    emb.num_nodes = n;
    auto keys = nn::prepare_keys(model.decoders[0], emb);
    return weighted_sum(ad::exp(nn::step_log_probs(model, 0, emb, keys, sp, invalid)), 22);
  }, dec_in);

  // Full loss with respect to every parameter tensor.
  double loss_worst = 0.0;
  std::string loss_worst_name;
  for (auto& nt : model.named_parameters()) {
    const double e = grad_check([&] { return train::reinforce_loss(model, base, p, c, 31).loss; }, {nt.tensor},
                                kGradStep, kGradFloor);
    if (e > loss_worst) {
      loss_worst = e;
      loss_worst_name = nt.name;
    }
  }
  errs.emplace_back("full loss (" + loss_worst_name + ")", loss_worst);

  double worst = 0.0;
  std::string worst_name;
  std::vector<std::string> bad;
  for (auto& [name, e] : errs) {
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
    if (!(e < kGradTol)) bad.push_back(name);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = bad.empty() && secs < kGradSeconds;
  o.detail = fmt("%zu checks, worst rel err %.2e (%s), %.1fs", errs.size(), worst, worst_name.c_str(), secs);
  for (auto& nme : bad) o.detail += "; failed " + nme;
  return o;
}

// ---------------------------------------------------------------------------
// 2. Distribution validity

Outcome criterion2() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::size_t count = 0, sum_bad = 0, zero_bad = 0, clip_bad = 0;
  double worst_sum = 0.0, worst_logit = 0.0;
  std::uint64_t model_seed = 0;
  while (count < kDistributions) {
    const ProblemKind kind = kAllKinds[rng() % 6];
    const double scale = std::exp(std::uniform_real_distribution<double>(0.0, std::log(8.0))(rng));
    auto model = random_model(kind, 8, 3, ++model_seed, scale);
    for (int inst_i = 0; inst_i < 4 && count < kDistributions; ++inst_i) {
      const std::size_t n = 2 + rng() % 19;
      auto inst = env::generate_instance(kind, n, rng());
      auto real = kind == ProblemKind::SPCTSP
                      ? std::make_shared<const std::vector<double>>(env::realize_prizes(inst, rng()))
                      : nullptr;
      const env::RoutingInstance* one[] = {&inst};
      auto enc = nn::encode(model, one, ad::BatchNormMode::Eval);
      auto s = env::initial_state(inst, real);
      for (std::size_t step = 0; !s.done && count < kDistributions; ++step) {
        auto emb = enc.embeddings;
        if (step > 0 && rng() % 2) {
          const env::ConstructionState* sp[] = {&s};
          emb = nn::reembed(model, enc.cache, sp, ad::BatchNormMode::Eval);
        }
        const auto forbidden = env::feasible_mask(s);
        for (std::size_t m = 0; m < 3 && count < kDistributions; ++m, ++count) {
          auto dist = nn::step_distribution(model, m, emb, s, step);
          double total = 0.0;
          for (std::size_t i = 0; i < dist.probs.size(); ++i) {
            total += dist.probs[i];
            if (forbidden[i]) {
              if (dist.probs[i] != 0.0) ++zero_bad;
            } else {
              const double l = dist.logits[i];
              worst_logit = std::max(worst_logit, std::abs(l));
              if (!(l > -kClip && l < kClip)) ++clip_bad;
            }
          }
          worst_sum = std::max(worst_sum, std::abs(total - 1.0));
          if (!(std::abs(total - 1.0) <= kProbSumTol)) ++sum_bad;
        }
        std::vector<int> ok;
        for (std::size_t i = 0; i < forbidden.size(); ++i)
          if (!forbidden[i]) ok.push_back(static_cast<int>(i));
        env::transition(s, ok[rng() % ok.size()]);
      }
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = sum_bad == 0 && zero_bad == 0 && clip_bad == 0 && secs < kDistSeconds;
  o.detail = fmt("%zu distributions, max |sum-1| %.1e, nonzero invalid %zu, logits outside (-10,10) %zu "
                 "(max |logit| %.6f), %.1fs",
                 count, worst_sum, zero_bad, clip_bad, worst_logit, secs);
  return o;
}

// ---------------------------------------------------------------------------
// 3. EG equivalence

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

nn::NodeEmbeddings embeddings_from_rows(const std::vector<double>& rows, std::size_t n, std::size_t d) {
  nn::NodeEmbeddings e;
  e.nodes = Tensor(n, d, rows);
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) mean[c] += rows[i * d + c] / static_cast<double>(n);
  e.mean = Tensor(1, d, mean);
  e.batch = 1;
  e.num_nodes = n;
  return e;
}

// Greedy decode that recomputes the whole top layer from the lower
// embeddings at every step with the plain-loop oracle.
std::vector<int> recompute_greedy(const nn::ModelParams& p, const env::RoutingInstance& inst, std::size_t m) {
  const env::RoutingInstance* one[] = {&inst};
  const std::size_t n = inst.num_nodes(), d = p.config.embed_dim;
  const auto lower = values_of(nn::encode_lower(p.encoder, p.config.heads, inst.kind, one, ad::BatchNormMode::Eval));
  auto s = env::initial_state(inst);
  std::vector<int> nodes;
  for (std::size_t step = 0; !s.done; ++step) {
    std::vector<std::uint8_t> vis(n, 0);
    env::visited_mask(s, vis);
    auto emb = embeddings_from_rows(testing::naive_layer(p.encoder.eg, lower, n, d, p.config.heads, vis), n, d);
    auto dist = nn::step_distribution(p, m, emb, s, step);
    std::size_t best = 0;
    for (std::size_t i = 1; i < dist.probs.size(); ++i)
      if (dist.probs[i] > dist.probs[best]) best = i;
    nodes.push_back(static_cast<int>(best));
    env::transition(s, static_cast<int>(best));
  }
  return nodes;
}

Outcome criterion3(Cache& cache) {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < kEgPairs; ++trial) {
    const ProblemKind kind = kAllKinds[trial % 6];
    const std::size_t n = 3 + rng() % 18, d = 8;
    auto model = random_model(kind, d, 1, 1000 + trial);
    auto inst = env::generate_instance(kind, n, rng());
    const env::RoutingInstance* one[] = {&inst};
    const std::size_t nodes = inst.num_nodes();
    auto lower = nn::encode_lower(model.encoder, 2, kind, one, ad::BatchNormMode::Eval);
    auto cache_eg = nn::eg_precompute(model.encoder.eg, lower, 1, 2);
    std::vector<std::uint8_t> mask(nodes, 0);
    const std::size_t keep = rng() % nodes;
    for (std::size_t i = 0; i < nodes; ++i) mask[i] = i != keep && rng() % 2;
    auto got = nn::eg_apply(model.encoder.eg, cache_eg, mask, ad::BatchNormMode::Eval);
    auto want = testing::naive_layer(model.encoder.eg, values_of(lower), nodes, d, 2, mask);
    const auto g = values_of(got.nodes);
    for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(g[i] - want[i]));
    for (std::size_t c = 0; c < d; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < nodes; ++i) mean += want[i * d + c] / static_cast<double>(nodes);
      worst = std::max(worst, std::abs(got.mean.values()[c] - mean));
    }
  }

  // p = 1 greedy on TSP-10 with the trained model.
  const auto& model = cache.model("mdam", 1);
  auto data = env::generate_dataset(ProblemKind::TSP, 10, 100, 3030);
  auto p = ptrs(data);
  auto greedy = search::greedy_all(model, p, true, 1);
  std::size_t mismatches = 0, total = 0;
  for (std::size_t m = 0; m < model.decoders.size(); ++m)
    for (std::size_t i = 0; i < data.size(); ++i, ++total)
      if (greedy[m][i].nodes != recompute_greedy(model, data[i], m)) ++mismatches;

  Outcome o;
  o.pass = worst <= kEgTol && mismatches == 0;
  o.detail = fmt("%zu (instance, mask) pairs, max abs diff %.2e; p=1 greedy vs full recomputation: %zu/%zu identical",
                 kEgPairs, worst, total - mismatches, total);
  return o;
}

// ---------------------------------------------------------------------------
// 4. Search equivalences

Outcome criterion4(Cache& cache) {
  const auto& single = cache.model("nomd", 1);
  auto data = env::generate_dataset(ProblemKind::TSP, 10, kBeamGreedyInstances, 4040);
  auto greedy = search::greedy_all(single, ptrs(data));
  std::size_t same = 0;
  search::BeamOptions bo;
  bo.width = 1;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto r = search::beam_search(single, data[i], bo);
    if (r.best.nodes == greedy[0][i].nodes && r.best.objective == greedy[0][i].objective) ++same;
  }

  std::size_t n7 = 7, factorial = 1;
  for (std::size_t k = 2; k < n7; ++k) factorial *= k;
  search::BeamOptions wide;
  wide.width = factorial;
  std::size_t optimal = 0;
  auto small = env::generate_dataset(ProblemKind::TSP, n7, kHeldKarpInstances, 4141);
  for (const auto& inst : small) {
    auto r = search::beam_search(single, inst, wide);
    const double hk = harness::held_karp_exact(inst).objective;
    if (env::validate(inst, r.best.nodes).ok && std::abs(r.best.objective - hk) <= kOptTol) ++optimal;
  }
  Outcome o;
  o.pass = same == data.size() && optimal == small.size();
  o.detail = fmt("M=1 width-1 beam = greedy on %zu/%zu TSP-10; width %zu on TSP-7 optimal on %zu/%zu", same,
                 data.size(), factorial, optimal, small.size());
  return o;
}

// ---------------------------------------------------------------------------
// 5. Merge soundness

struct MergeStats {
  std::size_t instances = 0, pairs = 0, dominated = 0, violations = 0;
};

void merge_check(const env::RoutingInstance& inst, std::size_t depth, MergeStats& st) {
  std::vector<env::ConstructionState> partials;
  testing::enumerate_prefixes(env::initial_state(inst), depth, partials);
  std::map<std::vector<int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < partials.size(); ++i) {
    if (partials[i].done) continue;
    std::vector<int> key(partials[i].visited.begin(), partials[i].visited.end());
    key.push_back(partials[i].current);
    key.push_back(partials[i].start);
    groups[key].push_back(i);
  }
  std::map<std::size_t, double> memo;
  auto completion = [&](std::size_t i) {
    auto it = memo.find(i);
    return it != memo.end() ? it->second : memo[i] = testing::best_completion(partials[i]);
  };
  for (auto& [key, idx] : groups) {
    for (std::size_t u = 0; u < idx.size(); ++u)
      for (std::size_t v = u + 1; v < idx.size(); ++v) {
        const auto& a = partials[idx[u]];
        const auto& b = partials[idx[v]];
        if (!search::collapses(a, b)) continue;
        ++st.pairs;
        const auto dom = search::dominance_check(testing::entry(a), testing::entry(b), inst.kind);
        if (dom == search::Dominance::ADominates) {
          ++st.dominated;
          if (completion(idx[u]) > completion(idx[v]) + kMergeTol) ++st.violations;
        } else if (dom == search::Dominance::BDominates) {
          ++st.dominated;
          if (completion(idx[v]) > completion(idx[u]) + kMergeTol) ++st.violations;
        }
      }
  }
  ++st.instances;
}

Outcome criterion5() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(505);
  MergeStats tsp, cvrp;
  for (std::size_t i = 0; i < kMergeTsp; ++i) {
    // Pairs need at least two interior nodes, so depth >= 4 and n >= 5.
    const std::size_t n = 5 + rng() % 5;
    const std::size_t hi = std::min<std::size_t>(n - 1, 6);
    const std::size_t depth = 4 + rng() % (hi - 3);
    merge_check(env::generate_instance(ProblemKind::TSP, n, rng()), depth, tsp);
  }
  for (std::size_t i = 0; i < kMergeCvrp; ++i) {
    const std::size_t n = 3 + rng() % 5;
    const std::size_t depth = 3 + rng() % 4;
    merge_check(env::generate_instance(ProblemKind::CVRP, n, rng()), depth, cvrp);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = tsp.violations == 0 && cvrp.violations == 0 && tsp.pairs > 0 && cvrp.pairs > 0 && secs < kMergeSeconds;
  o.detail = fmt("TSP %zu instances: %zu collapsing pairs, %zu dominated, %zu violations; "
                 "CVRP %zu instances: %zu pairs, %zu dominated, %zu violations; %.1fs",
                 tsp.instances, tsp.pairs, tsp.dominated, tsp.violations, cvrp.instances, cvrp.pairs,
                 cvrp.dominated, cvrp.violations, secs);
  return o;
}

// ---------------------------------------------------------------------------
// 6-9. Trained desk-scale models

Outcome criterion6(Cache& cache, Evaluator& ev) {
  std::size_t wins = 0;
  std::string kls;
  for (auto s : kSeeds) {
    const double with = harness::first_step_diversity(cache.model("mdam", s), eval_set());
    const double without = harness::first_step_diversity(cache.model("k0", s), eval_set());
    if (with > without) ++wins;
    kls += fmt(" s%llu %.3f vs %.3f;", static_cast<unsigned long long>(s), with, without);
  }
  const auto& rep = ev.get("mdam", 1, "greedy");
  const std::size_t M = cache.model("mdam", 1).decoders.size();
  std::vector<std::size_t> sole(M, 0);
  for (const auto& row : rep.rows)
    if (row.sole_winner >= 0) ++sole[static_cast<std::size_t>(row.sole_winner)];
  bool hist_ok = true;
  std::string hist;
  for (std::size_t m = 0; m < M; ++m) {
    const double share = static_cast<double>(sole[m]) / static_cast<double>(rep.rows.size());
    hist_ok = hist_ok && share >= kWinnerShareMin;
    hist += fmt(" %.1f%%", 100.0 * share);
  }
  Outcome o;
  o.pass = wins * 2 > std::size(kSeeds) && hist_ok;
  o.detail = fmt("first-step KL k=0.01 vs k=0:%s higher in %zu/3 seeds; sole-winner shares%s", kls.c_str(), wins,
                 hist.c_str());
  return o;
}

Outcome criterion7(Evaluator& ev) {
  const auto& g = ev.get("mdam", 1, "greedy");
  const auto& b15 = ev.get("mdam", 1, "beam:15");
  const auto& b30 = ev.get("mdam", 1, "beam:30");
  const bool gaps = g.mean_gap() <= kGreedyGapMax && b30.mean_gap() <= kBeam30GapMax;
  const bool order = g.mean_objective() > b15.mean_objective() && b15.mean_objective() > b30.mean_objective();
  std::size_t invalid = 0;
  for (const auto* r : {&g, &b15, &b30})
    for (const auto& row : r->rows) invalid += !row.valid;
  Outcome o;
  o.pass = gaps && order && invalid == 0;
  o.detail = fmt("gap greedy %.3f%%, bs15 %.3f%%, bs30 %.3f%%; mean %.5f > %.5f > %.5f; invalid rows %zu",
                 100 * g.mean_gap(), 100 * b15.mean_gap(), 100 * b30.mean_gap(), g.mean_objective(),
                 b15.mean_objective(), b30.mean_objective(), invalid);
  return o;
}

Outcome criterion8(Evaluator& ev) {
  std::size_t eg_ok = 0, md_ok = 0;
  std::string detail;
  for (auto s : kSeeds) {
    const double full = ev.mean("mdam", s, "greedy");
    const double noeg = ev.mean("noeg", s, "greedy");
    const double nomd = ev.mean("nomd", s, "greedy");
    eg_ok += full <= noeg;
    md_ok += noeg <= nomd;
    detail += fmt(" s%llu %.5f / %.5f / %.5f;", static_cast<unsigned long long>(s), full, noeg, nomd);
  }
  Outcome o;
  o.pass = eg_ok >= 2 && md_ok >= 2;
  o.detail = fmt("greedy MDAM / no-EG / no-MD:%s MDAM<=noEG %zu/3, noEG<=noMD %zu/3", detail.c_str(), eg_ok, md_ok);
  return o;
}

Outcome criterion9(Evaluator& ev) {
  std::size_t ok = 0;
  std::string detail;
  for (auto s : kSeeds) {
    const double on = ev.mean("mdam", s, "beam:30", true);
    const double off = ev.mean("mdam", s, "beam:30", false);
    ok += on <= off;
    detail += fmt(" s%llu %.5f vs %.5f;", static_cast<unsigned long long>(s), on, off);
  }
  Outcome o;
  o.pass = ok >= 2;
  o.detail = fmt("bs30 merge vs no merge:%s merge <= in %zu/3 seeds", detail.c_str(), ok);
  return o;
}

// ---------------------------------------------------------------------------
// 10. Persistence

std::vector<double> flat(const nn::ModelParams& p) {
  std::vector<double> out;
  for (auto& t : p.parameters()) out.insert(out.end(), t.values().begin(), t.values().end());
  for (auto& s : p.named_stats()) {
    out.insert(out.end(), s.stats->running_mean.begin(), s.stats->running_mean.end());
    out.insert(out.end(), s.stats->running_var.begin(), s.stats->running_var.end());
  }
  return out;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Outcome criterion10(const fs::path& dir) {
  auto c = train::TrainerConfig::desk_scale();
  c.epochs = 3;
  c.iterations_per_epoch = 8;
  c.batch_size = 16;
  c.validation_size = 32;
  c.seed = 10;

  train::Trainer unbroken(c);
  unbroken.train();

  train::Trainer first(c);
  first.train_epoch();
  first.train_iteration();
  first.train_iteration();  // stop mid-epoch, at step 10
  const std::string path = (dir / "resume_test.ckpt").string();
  train::save_checkpoint(path, first.state());
  auto loaded = train::load_checkpoint(path);

  std::ostringstream a, b;
  train::write_checkpoint(a, first.state());
  train::write_checkpoint(b, loaded);
  const bool round_trip = a.str() == b.str() && bitwise_equal(flat(loaded.model), flat(first.state().model)) &&
                          bitwise_equal(flat(loaded.baseline), flat(first.state().baseline)) &&
                          loaded.adam.t == first.state().adam.t;

  const std::size_t resumed_at = loaded.global_step;
  train::Trainer resumed(std::move(loaded));
  resumed.train();
  const auto& lu = unbroken.state().loss_history;
  const auto& lr = resumed.state().loss_history;
  const std::size_t compare = std::min<std::size_t>(10, lu.size() - resumed_at);
  bool losses = lr.size() == lu.size() && compare == 10;
  for (std::size_t i = resumed_at; losses && i < resumed_at + compare; ++i)
    losses = std::memcmp(&lu[i], &lr[i], sizeof(double)) == 0;
  const bool final_state = bitwise_equal(flat(resumed.state().model), flat(unbroken.state().model)) &&
                           resumed.state().baseline_score == unbroken.state().baseline_score;
  fs::remove(path);
  Outcome o;
  o.pass = round_trip && losses && final_state;
  o.detail = fmt("round trip %s; resumed at step %zu, next %zu losses %s; final parameters %s",
                 round_trip ? "bit-exact" : "DIFFERS", resumed_at, compare, losses ? "identical" : "DIFFER",
                 final_state ? "identical" : "DIFFER");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path cache_dir = "acceptance_cache";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cache" && i + 1 < argc) {
      cache_dir = argv[++i];
    } else {
      only.insert(std::stoi(a));
    }
  }
  Cache cache(cache_dir);
  Evaluator ev{cache, {}};
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, [] { return criterion1(); }},
      {2, [] { return criterion2(); }},
      {3, [&] { return criterion3(cache); }},
      {4, [&] { return criterion4(cache); }},
      {5, [] { return criterion5(); }},
      {6, [&] { return criterion6(cache, ev); }},
      {7, [&] { return criterion7(ev); }},
      {8, [&] { return criterion8(ev); }},
      {9, [&] { return criterion9(ev); }},
      {10, [&] { return criterion10(cache_dir); }},
  };
  int failed = 0;
  std::vector<std::string> lines;
  for (auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    lines.push_back(fmt("criterion %d: %s  %s", id, o.pass ? "PASS" : "FAIL", o.detail.c_str()));
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
  }
  std::printf("\nsummary\n");
  for (auto& l : lines) std::printf("%s\n", l.c_str());
  return failed ? 1 : 0;
}
