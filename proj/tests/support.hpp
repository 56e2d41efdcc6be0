#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "mdam/autodiff/ops.hpp"
#include "mdam/env/state.hpp"

namespace testing {

using mdam::ad::Tensor;

inline Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, bool grad = true,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(r * c);
  for (double& x : v) x = u(rng);
  return Tensor(r, c, std::move(v), grad);
}

/// Relative error ||a - b|| / max(||a||, ||b||, floor).
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

/// Worst relative error between backward() and central differences
/// (step h) over every input of a scalar-valued function. `floor` bounds
/// the denominator for gradients that are zero up to roundoff.
inline double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h = 1e-4,
                         double floor = 1e-6) {
  for (auto& t : inputs) t.zero_grad();
  Tensor loss = f();
  mdam::ad::backward(loss);
  double worst = 0.0;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<double> numeric(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double keep = t.values()[i];
      double fp, fm;
      {
        mdam::ad::NoGradGuard g;
        t.values()[i] = keep + h;
        fp = f().item();
        t.values()[i] = keep - h;
        fm = f().item();
      }
      t.values()[i] = keep;
      numeric[i] = (fp - fm) / (2 * h);
    }
    worst = std::max(worst, rel_error(analytic, numeric, floor));
  }
  return worst;
}

/// sum(out * w) for fixed random weights, turning any op into a scalar.
inline Tensor weighted_sum(const Tensor& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor w = random_tensor(out.rows(), out.cols(), rng, false);
  return mdam::ad::sum(mdam::ad::mul(out, w));
}

/// Uniformly random feasible construction; returns the visited nodes.
inline std::vector<int> random_trajectory(const mdam::env::RoutingInstance& inst, std::mt19937_64& rng,
                                          std::shared_ptr<const std::vector<double>> real = nullptr) {
  auto s = mdam::env::initial_state(inst, std::move(real));
  std::vector<int> nodes;
  while (!s.done) {
    auto mask = mdam::env::feasible_mask(s);
    std::vector<int> ok;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (!mask[i]) ok.push_back(static_cast<int>(i));
    const int pick = ok[std::uniform_int_distribution<std::size_t>(0, ok.size() - 1)(rng)];
    mdam::env::transition(s, pick);
    nodes.push_back(pick);
  }
  return nodes;
}

inline mdam::env::RoutingInstance tsp_from(std::vector<mdam::env::Point> pts) {
  mdam::env::RoutingInstance inst;
  inst.kind = mdam::env::ProblemKind::TSP;
  inst.size = pts.size();
  inst.coords = std::move(pts);
  return inst;
}

}  // namespace testing
