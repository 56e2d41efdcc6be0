#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdam/autodiff/adam.hpp"
#include "mdam/search/rollout.hpp"

namespace mdam::train {

struct TrainerConfig {
  env::ProblemKind kind = env::ProblemKind::TSP;
  std::size_t n = 20;
  std::size_t epochs = 100;
  std::size_t iterations_per_epoch = 2500;
  std::size_t batch_size = 512;
  double learning_rate = 1e-4;
  double k_kl = 0.01;
  std::size_t eg_period = 0;  // 0 = problem default
  bool use_eg = true;
  std::size_t decoders = 5;
  std::size_t embed_dim = 128;
  std::size_t heads = 8;
  std::size_t layers = 3;
  std::size_t ff_hidden = 512;
  std::uint64_t seed = 1;
  std::size_t validation_size = 1000;
  double grad_clip = 1.0;  // <= 0 disables
  bool normalize_advantage = false;
  bool all_step_kl = false;

  /// Small configuration for CPU runs: TSP-10, 3 decoders, d=64,
  /// 10 epochs of 200 batches of 64.
  static TrainerConfig desk_scale();

  nn::ModelConfig model_config() const;
  void validate() const;
};

/// Non-finite loss; carries where it happened.
class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(const std::string& what, std::size_t step, std::uint64_t instance_seed)
      : std::runtime_error(what), step(step), instance_seed(instance_seed) {}
  std::size_t step;
  std::uint64_t instance_seed;
};

struct IterationMetrics {
  double loss = 0.0;
  double rl_loss = 0.0;
  double kl = 0.0;  // batch mean of the first-step KL
  double mean_objective = 0.0;  // sampled, averaged over decoders and batch
  double mean_baseline = 0.0;
  double grad_norm = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_objective = 0.0;
  double mean_baseline = 0.0;
  double mean_kl = 0.0;
  double candidate_score = 0.0;
  double baseline_score = 0.0;
  bool baseline_updated = false;
};

/// Everything needed to continue a run exactly.
struct TrainerState {
  TrainerConfig config;
  nn::ModelParams model;
  nn::ModelParams baseline;
  double baseline_score = 0.0;
  ad::AdamState adam;
  std::size_t global_step = 0;
  std::size_t epochs_done = 0;
  std::vector<double> loss_history;
  // Running sums over the epoch in progress.
  double epoch_objective = 0.0;
  double epoch_baseline = 0.0;
  double epoch_kl = 0.0;
};

struct LossTerms {
  ad::Tensor loss;   // rl - k_kl * kl, with graph
  double rl = 0.0;
  double kl = 0.0;  // batch mean of the first-step KL
  double mean_objective = 0.0;
  double mean_baseline = 0.0;
};

/// b(x): per instance, the best greedy objective over the decoders of
/// `baseline` (eval mode, no graph).
std::vector<double> baseline_values(const nn::ModelParams& baseline,
                                    std::span<const env::RoutingInstance* const> instances,
                                    bool use_eg, std::size_t eg_period,
                                    std::span<const search::Realization> realizations = {});

/// REINFORCE loss with the shared baseline and the diversity term. One
/// trajectory per decoder per instance is sampled with seeds derived from
/// `sample_seed`. Advantages are constants.
LossTerms reinforce_loss(const nn::ModelParams& model, const nn::ModelParams& baseline,
                         std::span<const env::RoutingInstance* const> instances,
                         const TrainerConfig& config, std::uint64_t sample_seed);

/// Mean best-decoder greedy objective over a dataset.
double greedy_score(const nn::ModelParams& params, const std::vector<env::RoutingInstance>& data,
                    bool use_eg, std::size_t eg_period);

class Trainer {
 public:
  explicit Trainer(const TrainerConfig& config);
  explicit Trainer(TrainerState state);

  IterationMetrics train_iteration();
  /// Runs the remaining iterations of the current epoch, then the
  /// baseline check.
  EpochMetrics train_epoch();
  /// Replaces the baseline iff the model's validation mean is strictly
  /// lower than the baseline's.
  bool maybe_update_baseline(double* candidate_score = nullptr);
  std::vector<EpochMetrics> train(const std::function<void(const EpochMetrics&)>& on_epoch = {});

  const TrainerState& state() const { return state_; }
  TrainerState& state() { return state_; }
  const std::vector<env::RoutingInstance>& validation_set() const { return validation_; }

  std::vector<env::RoutingInstance> batch_instances(std::size_t step) const;

 private:
  void setup();
  TrainerState state_;
  std::vector<env::RoutingInstance> validation_;
};

}  // namespace mdam::train
