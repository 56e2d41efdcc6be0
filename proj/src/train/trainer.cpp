#include "mdam/train/trainer.hpp"

#include <cmath>
#include <limits>

#include "mdam/env/dataset.hpp"
#include "mdam/model/model.hpp"

namespace mdam::train {

namespace {

constexpr std::uint64_t kValidationStream = 0x76616c6964ULL;
constexpr std::uint64_t kSampleStream = 0x73616d706c65ULL;
constexpr std::uint64_t kInitStream = 0x696e6974ULL;

std::vector<const env::RoutingInstance*> pointers(const std::vector<env::RoutingInstance>& v) {
  std::vector<const env::RoutingInstance*> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(&x);
  return out;
}

}  // namespace

TrainerConfig TrainerConfig::desk_scale() {
  TrainerConfig c;
  c.kind = env::ProblemKind::TSP;
  c.n = 10;
  c.epochs = 10;
  c.iterations_per_epoch = 200;
  c.batch_size = 64;
  c.learning_rate = 1e-3;
  c.decoders = 3;
  c.embed_dim = 64;
  c.heads = 8;
  c.layers = 3;
  c.ff_hidden = 128;
  c.validation_size = 256;
  return c;
}

nn::ModelConfig TrainerConfig::model_config() const {
  nn::ModelConfig m;
  m.kind = kind;
  m.embed_dim = embed_dim;
  m.heads = heads;
  m.layers = layers;
  m.ff_hidden = ff_hidden;
  m.decoders = decoders;
  return m;
}

void TrainerConfig::validate() const {
  nn::validate(model_config());
  if (k_kl < 0.0) throw ConfigError("k_kl must be non-negative");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2 (batch normalization)");
  if (iterations_per_epoch == 0) throw ConfigError("iterations_per_epoch must be positive");
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be non-negative");
  if (n < (env::has_depot(kind) ? 1u : 2u)) throw ConfigError("graph size too small");
}

std::vector<double> baseline_values(const nn::ModelParams& baseline,
                                    std::span<const env::RoutingInstance* const> instances,
                                    bool use_eg, std::size_t eg_period,
                                    std::span<const search::Realization> realizations) {
  auto all = search::greedy_all(baseline, instances, use_eg, eg_period, {}, realizations);
  std::vector<double> b(instances.size(), std::numeric_limits<double>::infinity());
  for (const auto& per : all) {
    for (std::size_t i = 0; i < per.size(); ++i) b[i] = std::min(b[i], per[i].objective);
  }
  return b;
}

LossTerms reinforce_loss(const nn::ModelParams& model, const nn::ModelParams& baseline,
                         std::span<const env::RoutingInstance* const> instances,
                         const TrainerConfig& config, std::uint64_t sample_seed) {
  const std::size_t batch = instances.size();
  const std::size_t decoders = model.decoders.size();
  std::vector<search::Realization> reals;
  if (instances[0]->kind == env::ProblemKind::SPCTSP) {
    for (const auto* inst : instances) {
      reals.push_back(std::make_shared<const std::vector<double>>(env::realize_prizes(*inst, sample_seed)));
    }
  }
  const auto base = baseline_values(baseline, instances, config.use_eg, config.eg_period, reals);

  nn::Encoding enc = nn::encode(model, instances, nn::BatchNormMode::Train);
  std::vector<search::RolloutResult> runs;
  for (std::size_t m = 0; m < decoders; ++m) {
    search::RolloutOptions ro;
    ro.decoder = m;
    ro.policy = search::Policy::Sample;
    ro.use_eg = config.use_eg;
    ro.eg_period = config.eg_period;
    ro.mode = nn::BatchNormMode::Train;
    ro.seed = env::mix_seed(sample_seed, m);
    ro.all_decoder_probs = config.all_step_kl && decoders > 1;
    runs.push_back(search::rollout(model, enc, instances, ro, reals));
  }

  LossTerms out;
  std::vector<double> adv(decoders * batch);
  for (std::size_t m = 0; m < decoders; ++m) {
    for (std::size_t b = 0; b < batch; ++b) {
      const double obj = runs[m].trajectories[b].objective;
      adv[m * batch + b] = obj - base[b];
      out.mean_objective += obj;
    }
  }
  out.mean_objective /= static_cast<double>(decoders * batch);
  for (double v : base) out.mean_baseline += v;
  out.mean_baseline /= static_cast<double>(batch);
  if (config.normalize_advantage) {
    double mu = 0.0, var = 0.0;
    for (double a : adv) mu += a;
    mu /= static_cast<double>(adv.size());
    for (double a : adv) var += (a - mu) * (a - mu);
    const double sd = std::sqrt(var / static_cast<double>(adv.size()));
    for (double& a : adv) a = (a - mu) / (sd + 1e-8);
  }

  // sum_m sum_b A_bm * log P / batch; descending it lowers the probability
  // of trajectories worse than the baseline.
  ad::Tensor rl;
  for (std::size_t m = 0; m < decoders; ++m) {
    std::vector<double> w(batch);
    for (std::size_t b = 0; b < batch; ++b) w[b] = adv[m * batch + b] / static_cast<double>(batch);
    ad::Tensor term = ad::sum(ad::mul(ad::Tensor(batch, 1, std::move(w)), runs[m].log_prob));
    rl = rl.defined() ? ad::add(rl, term) : term;
  }
  out.rl = rl.item();

  ad::Tensor kl;
  if (decoders > 1) {
    if (config.all_step_kl) {
      for (const auto& run : runs) {
        for (const auto& probs : run.step_probs) {
          ad::Tensor t = nn::first_step_kl(probs);
          kl = kl.defined() ? ad::add(kl, t) : t;
        }
      }
    } else {
      std::vector<ad::Tensor> probs;
      for (const auto& run : runs) probs.push_back(ad::exp(run.first_log_probs));
      kl = nn::first_step_kl(probs);
    }
    // Per-instance diversity, averaged like the RL term.
    kl = ad::scale(kl, 1.0 / static_cast<double>(batch));
    out.kl = kl.item();
  }
  out.loss = (kl.defined() && config.k_kl != 0.0) ? ad::sub(rl, ad::scale(kl, config.k_kl)) : rl;
  return out;
}

double greedy_score(const nn::ModelParams& params, const std::vector<env::RoutingInstance>& data,
                    bool use_eg, std::size_t eg_period) {
  if (data.empty()) return 0.0;
  constexpr std::size_t kChunk = 256;
  const auto ptrs = pointers(data);
  double total = 0.0;
  for (std::size_t lo = 0; lo < ptrs.size(); lo += kChunk) {
    const std::size_t hi = std::min(ptrs.size(), lo + kChunk);
    std::span<const env::RoutingInstance* const> chunk(ptrs.data() + lo, hi - lo);
    for (double v : baseline_values(params, chunk, use_eg, eg_period)) total += v;
  }
  return total / static_cast<double>(data.size());
}

Trainer::Trainer(const TrainerConfig& config) {
  config.validate();
  state_.config = config;
  state_.model = nn::init_params(config.model_config(), env::mix_seed(config.seed, kInitStream));
  state_.baseline = state_.model.clone();
  state_.adam.lr = config.learning_rate;
  setup();
  state_.baseline_score = greedy_score(state_.baseline, validation_, config.use_eg, config.eg_period);
}

Trainer::Trainer(TrainerState state) : state_(std::move(state)) {
  state_.config.validate();
  setup();
}

void Trainer::setup() {
  const auto& c = state_.config;
  validation_ = env::generate_dataset(c.kind, c.n, c.validation_size, env::mix_seed(c.seed, kValidationStream));
}

std::vector<env::RoutingInstance> Trainer::batch_instances(std::size_t step) const {
  const auto& c = state_.config;
  std::vector<env::RoutingInstance> out;
  out.reserve(c.batch_size);
  for (std::size_t b = 0; b < c.batch_size; ++b) {
    out.push_back(env::generate_instance(c.kind, c.n, env::mix_seed(c.seed, step, b)));
  }
  return out;
}

IterationMetrics Trainer::train_iteration() {
  const auto& c = state_.config;
  const std::size_t step = state_.global_step;
  const auto data = batch_instances(step);
  const auto ptrs = pointers(data);

  auto params = state_.model.parameters();
  for (auto& p : params) p.zero_grad();
  auto abort = [&](const std::string& what) {
    return NumericalAbort(what + " at step " + std::to_string(step) + " (first instance seed " +
                              std::to_string(data[0].seed) + ")",
                          step, data[0].seed);
  };
  LossTerms terms;
  try {
    terms = reinforce_loss(state_.model, state_.baseline, ptrs, c, env::mix_seed(c.seed ^ kSampleStream, step));
  } catch (const NumericalError& e) {
    throw abort(e.what());
  }
  const double loss = terms.loss.item();
  if (!std::isfinite(loss)) throw abort("non-finite loss");
  ad::backward(terms.loss);
  const double max_norm = c.grad_clip > 0.0 ? c.grad_clip : std::numeric_limits<double>::infinity();
  const double norm = ad::clip_grad_norm(params, max_norm);
  if (!std::isfinite(norm)) {
    throw NumericalAbort("non-finite gradient at step " + std::to_string(step), step, data[0].seed);
  }
  ad::adam_step(params, state_.adam);

  state_.global_step += 1;
  state_.loss_history.push_back(loss);
  state_.epoch_objective += terms.mean_objective;
  state_.epoch_baseline += terms.mean_baseline;
  state_.epoch_kl += terms.kl;

  IterationMetrics m;
  m.loss = loss;
  m.rl_loss = terms.rl;
  m.kl = terms.kl;
  m.mean_objective = terms.mean_objective;
  m.mean_baseline = terms.mean_baseline;
  m.grad_norm = norm;
  return m;
}

bool Trainer::maybe_update_baseline(double* candidate_score) {
  const auto& c = state_.config;
  const double score = greedy_score(state_.model, validation_, c.use_eg, c.eg_period);
  if (candidate_score) *candidate_score = score;
  if (score < state_.baseline_score) {
    state_.baseline = state_.model.clone();
    state_.baseline_score = score;
    return true;
  }
  return false;
}

EpochMetrics Trainer::train_epoch() {
  const auto& c = state_.config;
  const std::size_t start = state_.epochs_done * c.iterations_per_epoch;
  const std::size_t end = start + c.iterations_per_epoch;
  while (state_.global_step < end) train_iteration();
  EpochMetrics m;
  m.epoch = state_.epochs_done;
  const double iters = static_cast<double>(c.iterations_per_epoch);
  m.mean_objective = state_.epoch_objective / iters;
  m.mean_baseline = state_.epoch_baseline / iters;
  m.mean_kl = state_.epoch_kl / iters;
  m.baseline_updated = maybe_update_baseline(&m.candidate_score);
  m.baseline_score = state_.baseline_score;
  state_.epochs_done += 1;
  state_.epoch_objective = state_.epoch_baseline = state_.epoch_kl = 0.0;
  return m;
}

std::vector<EpochMetrics> Trainer::train(const std::function<void(const EpochMetrics&)>& on_epoch) {
  std::vector<EpochMetrics> out;
  while (state_.epochs_done < state_.config.epochs) {
    out.push_back(train_epoch());
    if (on_epoch) on_epoch(out.back());
  }
  return out;
}

}  // namespace mdam::train
