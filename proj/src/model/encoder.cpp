#include "mdam/model/encoder.hpp"

#include <cmath>

#include "mdam/env/state.hpp"

namespace mdam::nn {

namespace {

std::vector<std::size_t> block_rows(std::span<const std::size_t> index, std::size_t block) {
  std::vector<std::size_t> rows;
  rows.reserve(index.size() * block);
  for (std::size_t i : index) {
    for (std::size_t r = 0; r < block; ++r) rows.push_back(i * block + r);
  }
  return rows;
}

}  // namespace

EGCache EGCache::select(std::span<const std::size_t> index) const {
  EGCache out;
  out.batch = index.size();
  out.num_nodes = num_nodes;
  out.heads = heads;
  const auto node_rows = block_rows(index, num_nodes);
  out.input = ad::gather_rows(input, node_rows);
  out.q = ad::gather_rows(q, node_rows);
  out.k = ad::gather_rows(k, node_rows);
  out.v = ad::gather_rows(v, node_rows);
  out.scores = ad::gather_rows(scores, block_rows(index, heads * num_nodes));
  return out;
}

Tensor embed_inputs(const EncoderParams& params, env::ProblemKind kind,
                    std::span<const env::RoutingInstance* const> instances) {
  if (instances.empty()) throw DimensionError("embed_inputs: empty batch");
  const std::size_t k = env::feature_dim(kind);
  if (params.node_w.rows() != k) {
    throw ConfigError("embed_inputs: projection expects " + std::to_string(params.node_w.rows()) +
                      " features, problem kind provides " + std::to_string(k));
  }
  const std::size_t nodes = instances[0]->num_nodes();
  const std::size_t batch = instances.size();
  for (const auto* inst : instances) {
    if (inst->kind != kind) throw ConfigError("embed_inputs: mixed problem kinds in a batch");
    if (inst->num_nodes() != nodes) throw DimensionError("embed_inputs: mixed graph sizes in a batch");
  }

  if (!env::has_depot(kind)) {
    std::vector<double> feats;
    feats.reserve(batch * nodes * k);
    for (const auto* inst : instances) {
      auto f = env::input_features(*inst);
      feats.insert(feats.end(), f.begin(), f.end());
    }
    return ad::linear(Tensor(batch * nodes, k, std::move(feats)), params.node_w, params.node_b);
  }

  if (!params.depot_w.defined()) throw ConfigError("embed_inputs: depot projection missing");
  const std::size_t customers = nodes - 1;
  std::vector<double> depot_feats, cust_feats;
  depot_feats.reserve(batch * 2);
  cust_feats.reserve(batch * customers * k);
  for (const auto* inst : instances) {
    auto f = env::input_features(*inst);
    depot_feats.push_back(f[0]);
    depot_feats.push_back(f[1]);
    cust_feats.insert(cust_feats.end(), f.begin() + static_cast<std::ptrdiff_t>(k), f.end());
  }
  Tensor depot = ad::linear(Tensor(batch, 2, std::move(depot_feats)), params.depot_w, params.depot_b);
  Tensor cust =
      ad::linear(Tensor(batch * customers, k, std::move(cust_feats)), params.node_w, params.node_b);
  const Tensor parts[] = {depot, cust};
  Tensor stacked = ad::concat_rows(parts);
  std::vector<std::size_t> order;
  order.reserve(batch * nodes);
  for (std::size_t b = 0; b < batch; ++b) {
    order.push_back(b);
    for (std::size_t i = 0; i < customers; ++i) order.push_back(batch + b * customers + i);
  }
  return ad::gather_rows(stacked, order);
}

EGCache eg_precompute(const AttentionLayerParams& p, const Tensor& x, std::size_t batch,
                      std::size_t heads) {
  EGCache c;
  c.batch = batch;
  c.num_nodes = x.rows() / batch;
  c.heads = heads;
  c.input = x;
  c.q = ad::matmul(x, p.wq);
  c.k = ad::matmul(x, p.wk);
  c.v = ad::matmul(x, p.wv);
  const double dk = static_cast<double>(x.cols() / heads);
  c.scores = ad::attention_scores(c.q, c.k, batch, heads, 1.0 / std::sqrt(dk));
  return c;
}

NodeEmbeddings eg_apply(const AttentionLayerParams& p, const EGCache& c, Mask visited,
                        BatchNormMode mode) {
  Tensor att = ad::masked_attend(c.scores, c.v, visited, c.batch, c.heads);
  Tensor h = ad::batch_norm(ad::add(c.input, ad::matmul(att, p.wo)), p.bn1_gamma, p.bn1_beta, p.bn1,
                            mode);
  Tensor ff = ad::linear(ad::relu(ad::linear(h, p.ff1_w, p.ff1_b)), p.ff2_w, p.ff2_b);
  NodeEmbeddings e;
  e.nodes = ad::batch_norm(ad::add(h, ff), p.bn2_gamma, p.bn2_beta, p.bn2, mode);
  e.mean = ad::block_mean(e.nodes, c.num_nodes);
  e.batch = c.batch;
  e.num_nodes = c.num_nodes;
  return e;
}

Tensor attention_block(const AttentionLayerParams& params, const Tensor& x, std::size_t batch,
                       std::size_t heads, BatchNormMode mode) {
  return eg_apply(params, eg_precompute(params, x, batch, heads), {}, mode).nodes;
}

Tensor encode_lower(const EncoderParams& params, std::size_t heads, env::ProblemKind kind,
                    std::span<const env::RoutingInstance* const> instances, BatchNormMode mode) {
  Tensor x = embed_inputs(params, kind, instances);
  for (const auto& block : params.blocks) x = attention_block(block, x, instances.size(), heads, mode);
  return x;
}

std::size_t default_eg_period(env::ProblemKind kind, std::size_t n) {
  if (kind == env::ProblemKind::TSP) {
    if (n == 20) return 2;
    if (n == 50) return 4;
    if (n == 100) return 8;
  }
  if (kind == env::ProblemKind::CVRP) {
    if (n == 20) return 2;
    if (n == 50) return 6;
    if (n == 100) return 8;
  }
  return std::max<std::size_t>(2, (n + 11) / 12);
}

}  // namespace mdam::nn
