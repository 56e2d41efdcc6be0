#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mdam/autodiff/ops.hpp"
#include "mdam/env/instance.hpp"

namespace mdam::nn {

using ad::Tensor;

struct ModelConfig {
  env::ProblemKind kind = env::ProblemKind::TSP;
  std::size_t embed_dim = 128;
  std::size_t heads = 8;
  /// Total encoder depth: layers-1 plain blocks plus the EG layer on top.
  std::size_t layers = 3;
  std::size_t ff_hidden = 512;
  std::size_t decoders = 5;
  double tanh_clip = 10.0;
};

void validate(const ModelConfig& config);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct NamedStats {
  std::string name;
  ad::BatchNormStats* stats;
};

/// One self-attention block: multi-head attention, skip + BN, FF, skip + BN.
struct AttentionLayerParams {
  Tensor wq, wk, wv, wo;  // [d × d]; head h owns columns [h·dk, (h+1)·dk)
  Tensor bn1_gamma, bn1_beta;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
  Tensor bn2_gamma, bn2_beta;
  // Running statistics are buffers updated by train-mode forwards.
  mutable ad::BatchNormStats bn1, bn2;

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void collect_stats(const std::string& prefix, std::vector<NamedStats>& out) const;
};

struct EncoderParams {
  Tensor node_w, node_b;    // feature_dim -> d
  Tensor depot_w, depot_b;  // (x, y) -> d, depot problems only
  std::vector<AttentionLayerParams> blocks;
  AttentionLayerParams eg;

  void collect(std::vector<NamedTensor>& out) const;
  void collect_stats(std::vector<NamedStats>& out) const;
};

/// One decoder's private weights.
struct DecoderParams {
  Tensor glimpse_q;  // [(3d + state features) × d]
  Tensor glimpse_k, glimpse_v, glimpse_o;
  Tensor pointer_q, pointer_k;

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct ModelParams {
  ModelConfig config;
  EncoderParams encoder;
  std::vector<DecoderParams> decoders;
  // First-step stand-ins for the start and current node embeddings,
  // shared by every decoder.
  Tensor v_start, v_current;

  /// Trainable tensors in a fixed order with stable names.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::vector<NamedStats> named_stats() const;

  /// Deep copy of values and running statistics.
  ModelParams clone() const;
};

ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Copies values and running statistics from `src` into `dst` (same
/// architecture required).
void copy_params(const ModelParams& src, ModelParams& dst);

}  // namespace mdam::nn
