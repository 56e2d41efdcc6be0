#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mdam/autodiff/tensor.hpp"

namespace mdam::ad {

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of `params` from their accumulated
/// gradients. Moment buffers are created on the first call.
void adam_step(std::span<Tensor> params, AdamState& state);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace mdam::ad
