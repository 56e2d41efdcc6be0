// mdam: generate datasets, train, evaluate and compute reference solutions.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "mdam/env/dataset.hpp"
#include "mdam/harness/config.hpp"
#include "mdam/harness/eval.hpp"
#include "mdam/train/checkpoint.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

mdam::env::ProblemKind kind_or_throw(const std::string& text) {
  auto k = mdam::env::parse_kind(text);
  if (!k) throw mdam::ConfigError("unknown problem kind '" + text + "'");
  return *k;
}

void write_report(const std::string& path, const mdam::harness::EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw mdam::env::DataError("cannot open " + path + " for writing");
  mdam::harness::write_csv(out, report);
}

void print_summary(const mdam::harness::EvalReport& r) {
  std::printf("rows %zu  mean %.6f  std %.6f  mean gap %.4f%%  time %.3fs\n", r.rows.size(), r.mean_objective(),
              r.std_objective(), 100.0 * r.mean_gap(), r.total_seconds());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-decoder attention model for routing problems"};
  app.require_subcommand(1);

  std::string kind = "tsp", out_path, data_path, ckpt_path, config_path, mode = "greedy", method = "heldkarp",
              csv_path, resume_path;
  std::size_t n = 20, count = 1000, decoders_used = 0, threads = 0, eg_period = 0;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> train_seed;
  bool desk = false, no_eg = false, no_merge = false, no_reference = false;

  auto* gen = app.add_subcommand("gen", "Generate a dataset of random instances");
  gen->add_option("--kind", kind, "tsp|cvrp|sdvrp|op|pctsp|spctsp")->required();
  gen->add_option("--n", n, "Graph size (customers for depot problems)")->required();
  gen->add_option("--count", count, "Number of instances")->required();
  gen->add_option("--seed", seed, "Dataset seed")->required();
  gen->add_option("--out", out_path, "Output file")->required();

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  auto* train_kind = train->add_option("--kind", kind, "Problem kind");
  auto* train_n = train->add_option("--n", n, "Graph size");
  train->add_option("--config", config_path, "key=value configuration file");
  train->add_option("--out", out_path, "Checkpoint to write")->required();
  train->add_option("--resume", resume_path, "Continue from this checkpoint");
  train->add_option("--seed", train_seed, "Run seed");
  train->add_flag("--desk-scale", desk, "Start from the small CPU configuration");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  eval->add_option("--data", data_path, "Dataset file")->required();
  eval->add_option("--mode", mode, "greedy | sample:K | beam:WIDTH");
  eval->add_flag("--no-eg", no_eg, "Never re-embed");
  eval->add_flag("--no-merge", no_merge, "Disable beam merging");
  eval->add_option("--decoders", decoders_used, "Use the first K decoders");
  eval->add_option("--eg-period", eg_period, "Steps between re-embeddings (0 = default)");
  eval->add_option("--seed", seed, "Sampling / realization seed");
  eval->add_option("--threads", threads, "Worker threads (0 = all cores)");
  eval->add_flag("--no-reference", no_reference, "Skip reference solutions");
  eval->add_option("--csv", csv_path, "Report file")->required();

  auto* oracle = app.add_subcommand("oracle", "Reference solutions for a dataset");
  oracle->add_option("--data", data_path, "Dataset file")->required();
  oracle->add_option("--method", method, "heldkarp | nn2opt")->required();
  oracle->add_option("--threads", threads, "Worker threads (0 = all cores)");
  oracle->add_option("--csv", csv_path, "Report file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      auto data = mdam::env::generate_dataset(kind_or_throw(kind), n, count, seed);
      mdam::env::save_dataset(out_path, data);
      std::printf("wrote %zu instances to %s\n", data.size(), out_path.c_str());
    } else if (*train) {
      std::optional<mdam::train::Trainer> trainer;
      if (!resume_path.empty()) {
        trainer.emplace(mdam::train::load_checkpoint(resume_path));
      } else {
        auto cfg = desk ? mdam::train::TrainerConfig::desk_scale() : mdam::train::TrainerConfig{};
        if (!config_path.empty()) cfg = mdam::harness::load_config(config_path, cfg);
        if (*train_kind) cfg.kind = kind_or_throw(kind);
        if (*train_n) cfg.n = n;
        if (train_seed) cfg.seed = *train_seed;
        trainer.emplace(cfg);
      }
      std::printf("initial baseline score %.6f\n", trainer->state().baseline_score);
      trainer->train([&](const mdam::train::EpochMetrics& m) {
        std::printf("epoch %zu  sampled %.6f  baseline %.6f  kl %.4f  candidate %.6f  best %.6f%s\n", m.epoch,
                    m.mean_objective, m.mean_baseline, m.mean_kl, m.candidate_score, m.baseline_score,
                    m.baseline_updated ? "  (baseline updated)" : "");
        std::fflush(stdout);
        mdam::train::save_checkpoint(out_path, trainer->state());
      });
      mdam::train::save_checkpoint(out_path, trainer->state());
    } else if (*eval) {
      const auto state = mdam::train::load_checkpoint(ckpt_path);
      const auto data = mdam::env::load_dataset(data_path);
      mdam::harness::EvalOptions opt;
      opt.solve.mode = mdam::search::SolveMode::parse(mode);
      opt.solve.use_eg = !no_eg;
      opt.solve.merge = !no_merge;
      opt.solve.eg_period = eg_period ? eg_period : state.config.eg_period;
      opt.solve.seed = seed;
      opt.evaluation_seed = seed;
      opt.threads = threads;
      opt.compute_reference = !no_reference;
      if (decoders_used > 0) {
        if (decoders_used > state.model.decoders.size()) {
          throw mdam::ConfigError("--decoders exceeds the checkpoint's " +
                                  std::to_string(state.model.decoders.size()) + " decoders");
        }
        for (std::size_t m = 0; m < decoders_used; ++m) opt.solve.decoders.push_back(m);
      }
      const auto report = mdam::harness::run_eval(data, state.model, opt);
      write_report(csv_path, report);
      print_summary(report);
    } else if (*oracle) {
      const auto data = mdam::env::load_dataset(data_path);
      const auto report = mdam::harness::run_oracle(data, mdam::harness::parse_reference_method(method), threads);
      write_report(csv_path, report);
      print_summary(report);
    }
  } catch (const mdam::train::NumericalAbort& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return kNumerical;
  } catch (const mdam::env::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const mdam::ConfigError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kOk;
}
