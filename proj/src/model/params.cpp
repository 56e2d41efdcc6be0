#include "mdam/model/params.hpp"

#include <algorithm>
#include <cmath>

#include "mdam/env/state.hpp"

namespace mdam::nn {

void validate(const ModelConfig& c) {
  if (c.embed_dim == 0 || c.heads == 0 || c.embed_dim % c.heads != 0) {
    throw ConfigError("model: embed_dim must be a positive multiple of heads");
  }
  if (c.layers < 1) throw ConfigError("model: at least one encoder layer (the EG layer) is required");
  if (c.decoders < 1) throw ConfigError("model: at least one decoder is required");
  if (c.ff_hidden == 0) throw ConfigError("model: ff_hidden must be positive");
}

void AttentionLayerParams::collect(const std::string& p, std::vector<NamedTensor>& out) const {
  out.push_back({p + ".wq", wq});
  out.push_back({p + ".wk", wk});
  out.push_back({p + ".wv", wv});
  out.push_back({p + ".wo", wo});
  out.push_back({p + ".bn1.gamma", bn1_gamma});
  out.push_back({p + ".bn1.beta", bn1_beta});
  out.push_back({p + ".ff1.w", ff1_w});
  out.push_back({p + ".ff1.b", ff1_b});
  out.push_back({p + ".ff2.w", ff2_w});
  out.push_back({p + ".ff2.b", ff2_b});
  out.push_back({p + ".bn2.gamma", bn2_gamma});
  out.push_back({p + ".bn2.beta", bn2_beta});
}

void AttentionLayerParams::collect_stats(const std::string& p, std::vector<NamedStats>& out) const {
  out.push_back({p + ".bn1", &bn1});
  out.push_back({p + ".bn2", &bn2});
}

void EncoderParams::collect(std::vector<NamedTensor>& out) const {
  out.push_back({"encoder.node.w", node_w});
  out.push_back({"encoder.node.b", node_b});
  if (depot_w.defined()) {
    out.push_back({"encoder.depot.w", depot_w});
    out.push_back({"encoder.depot.b", depot_b});
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect("encoder.block" + std::to_string(i), out);
  }
  eg.collect("encoder.eg", out);
}

void EncoderParams::collect_stats(std::vector<NamedStats>& out) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect_stats("encoder.block" + std::to_string(i), out);
  }
  eg.collect_stats("encoder.eg", out);
}

void DecoderParams::collect(const std::string& p, std::vector<NamedTensor>& out) const {
  out.push_back({p + ".glimpse_q", glimpse_q});
  out.push_back({p + ".glimpse_k", glimpse_k});
  out.push_back({p + ".glimpse_v", glimpse_v});
  out.push_back({p + ".glimpse_o", glimpse_o});
  out.push_back({p + ".pointer_q", pointer_q});
  out.push_back({p + ".pointer_k", pointer_k});
}

std::vector<NamedTensor> ModelParams::named_parameters() const {
  std::vector<NamedTensor> out;
  encoder.collect(out);
  for (std::size_t m = 0; m < decoders.size(); ++m) {
    decoders[m].collect("decoder" + std::to_string(m), out);
  }
  out.push_back({"context.v_start", v_start});
  out.push_back({"context.v_current", v_current});
  return out;
}

std::vector<Tensor> ModelParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

std::vector<NamedStats> ModelParams::named_stats() const {
  std::vector<NamedStats> out;
  encoder.collect_stats(out);
  return out;
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Tensor uniform(std::size_t rows, std::size_t cols, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(rows * cols);
    for (double& x : v) x = dist(rng_);
    return Tensor(rows, cols, std::move(v), true);
  }
  Tensor weight(std::size_t rows, std::size_t cols) { return uniform(rows, cols, rows); }
  static Tensor constant(std::size_t cols, double value) {
    return Tensor(1, cols, std::vector<double>(cols, value), true);
  }

 private:
  std::mt19937_64 rng_;
};

AttentionLayerParams init_layer(Initializer& init, std::size_t d, std::size_t hidden) {
  AttentionLayerParams l;
  l.wq = init.weight(d, d);
  l.wk = init.weight(d, d);
  l.wv = init.weight(d, d);
  l.wo = init.weight(d, d);
  l.bn1_gamma = Initializer::constant(d, 1.0);
  l.bn1_beta = Initializer::constant(d, 0.0);
  l.ff1_w = init.weight(d, hidden);
  l.ff1_b = init.uniform(1, hidden, d);
  l.ff2_w = init.weight(hidden, d);
  l.ff2_b = init.uniform(1, d, hidden);
  l.bn2_gamma = Initializer::constant(d, 1.0);
  l.bn2_beta = Initializer::constant(d, 0.0);
  l.bn1 = ad::BatchNormStats(d);
  l.bn2 = ad::BatchNormStats(d);
  return l;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  validate(config);
  Initializer init(seed);
  const std::size_t d = config.embed_dim;
  const std::size_t k = env::feature_dim(config.kind);
  ModelParams p;
  p.config = config;
  p.encoder.node_w = init.weight(k, d);
  p.encoder.node_b = init.uniform(1, d, k);
  if (env::has_depot(config.kind)) {
    p.encoder.depot_w = init.weight(2, d);
    p.encoder.depot_b = init.uniform(1, d, 2);
  }
  for (std::size_t i = 0; i + 1 < config.layers; ++i) {
    p.encoder.blocks.push_back(init_layer(init, d, config.ff_hidden));
  }
  p.encoder.eg = init_layer(init, d, config.ff_hidden);
  const std::size_t context = 3 * d + env::state_feature_dim(config.kind);
  for (std::size_t m = 0; m < config.decoders; ++m) {
    DecoderParams dec;
    dec.glimpse_q = init.weight(context, d);
    dec.glimpse_k = init.weight(d, d);
    dec.glimpse_v = init.weight(d, d);
    dec.glimpse_o = init.weight(d, d);
    dec.pointer_q = init.weight(d, d);
    dec.pointer_k = init.weight(d, d);
    p.decoders.push_back(std::move(dec));
  }
  p.v_start = init.uniform(1, d, d);
  p.v_current = init.uniform(1, d, d);
  return p;
}

void copy_params(const ModelParams& src, ModelParams& dst) {
  auto a = src.named_parameters();
  auto b = dst.named_parameters();
  if (a.size() != b.size()) throw DimensionError("copy_params: architectures differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].tensor.size() != b[i].tensor.size()) {
      throw DimensionError("copy_params: shape mismatch for " + a[i].name);
    }
    std::copy(a[i].tensor.values().begin(), a[i].tensor.values().end(),
              b[i].tensor.values().begin());
  }
  auto sa = src.named_stats();
  auto sb = dst.named_stats();
  for (std::size_t i = 0; i < sa.size(); ++i) *sb[i].stats = *sa[i].stats;
}

ModelParams ModelParams::clone() const {
  ModelParams out = *this;  // shares tensor storage; replace below
  auto rebind = [](Tensor& t) {
    if (t.defined()) t = t.clone();
  };
  auto rebind_layer = [&](AttentionLayerParams& l) {
    for (Tensor* t : {&l.wq, &l.wk, &l.wv, &l.wo, &l.bn1_gamma, &l.bn1_beta, &l.ff1_w, &l.ff1_b,
                      &l.ff2_w, &l.ff2_b, &l.bn2_gamma, &l.bn2_beta}) {
      rebind(*t);
    }
  };
  rebind(out.encoder.node_w);
  rebind(out.encoder.node_b);
  rebind(out.encoder.depot_w);
  rebind(out.encoder.depot_b);
  for (auto& b : out.encoder.blocks) rebind_layer(b);
  rebind_layer(out.encoder.eg);
  for (auto& dec : out.decoders) {
    for (Tensor* t : {&dec.glimpse_q, &dec.glimpse_k, &dec.glimpse_v, &dec.glimpse_o,
                      &dec.pointer_q, &dec.pointer_k}) {
      rebind(*t);
    }
  }
  rebind(out.v_start);
  rebind(out.v_current);
  return out;
}

}  // namespace mdam::nn
