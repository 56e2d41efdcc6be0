#include <doctest.h>

#include <cmath>
#include <limits>

#include "mdam/autodiff/adam.hpp"
#include "mdam/autodiff/ops.hpp"
#include "support.hpp"

using namespace mdam;
using ad::Tensor;
using testing::grad_check;
using testing::random_tensor;
using testing::weighted_sum;

TEST_CASE("matmul examples") {
  Tensor eye(2, 2, {1, 0, 0, 1});
  Tensor m(2, 2, {1, 2, 3, 4});
  auto p = ad::matmul(eye, m);
  CHECK(std::vector<double>(p.values().begin(), p.values().end()) == std::vector<double>{1, 2, 3, 4});
  auto z = ad::matmul(Tensor(2, 2, {1, 0, 0, 0}), Tensor(2, 2, {0, 0, 0, 1}));
  for (double v : z.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(ad::matmul(Tensor(2, 3), Tensor(2, 3)), DimensionError);

  std::mt19937_64 rng(1);
  Tensor a = random_tensor(3, 4, rng), b = random_tensor(4, 2, rng);
  CHECK(grad_check([&] { return weighted_sum(ad::matmul(a, b), 7); }, {a, b}) < 1e-4);
}

TEST_CASE("elementwise and shape ops pass gradient checks") {
  std::mt19937_64 rng(2);
  Tensor a = random_tensor(3, 4, rng), b = random_tensor(3, 4, rng);
  Tensor w = random_tensor(4, 5, rng), bias = random_tensor(1, 5, rng);
  CHECK(grad_check([&] { return weighted_sum(ad::linear(a, w, bias), 1); }, {a, w, bias}) < 1e-4);
  CHECK(grad_check([&] { return weighted_sum(ad::add(a, b), 2); }, {a, b}) < 1e-4);
  CHECK(grad_check([&] { return weighted_sum(ad::sub(a, b), 3); }, {a, b}) < 1e-4);
  CHECK(grad_check([&] { return weighted_sum(ad::mul(a, b), 4); }, {a, b}) < 1e-4);
  CHECK(grad_check([&] { return weighted_sum(ad::scale(a, -2.5), 5); }, {a}) < 1e-4);
  CHECK(grad_check([&] { return weighted_sum(ad::relu(a), 6); }, {a}) < 1e-4);
  CHECK(grad_check([&] { return weighted_sum(ad::tanh(a), 7); }, {a}) < 1e-4);
  CHECK(grad_check([&] { return weighted_sum(ad::exp(a), 8); }, {a}) < 1e-4);
  CHECK(grad_check([&] { return ad::mean(ad::mul(a, a)); }, {a}) < 1e-4);
  CHECK(grad_check(
            [&] {
              const Tensor parts[] = {a, b};
              return weighted_sum(ad::concat_cols(parts), 9);
            },
            {a, b}) < 1e-4);
  CHECK(grad_check(
            [&] {
              const Tensor parts[] = {a, b};
              return weighted_sum(ad::concat_rows(parts), 10);
            },
            {a, b}) < 1e-4);
  const std::size_t rows[] = {2, 0, 2, 1};
  CHECK(grad_check([&] { return weighted_sum(ad::gather_rows(a, rows), 11); }, {a}) < 1e-4);
  Tensor tall = random_tensor(6, 3, rng);
  CHECK(grad_check([&] { return weighted_sum(ad::block_mean(tall, 3), 12); }, {tall}) < 1e-4);
  const std::size_t idx[] = {3, 0, 1};
  CHECK(grad_check([&] { return weighted_sum(ad::pick(a, idx), 13); }, {a}) < 1e-4);
}

TEST_CASE("attention ops pass gradient checks") {
  std::mt19937_64 rng(3);
  const std::size_t batch = 2, heads = 2, nq = 3, nk = 4, d = 4;
  Tensor q = random_tensor(batch * nq, d, rng), k = random_tensor(batch * nk, d, rng);
  Tensor v = random_tensor(batch * nk, d, rng);
  std::vector<std::uint8_t> mask(batch * nk, 0);
  mask[1] = 1;
  mask[6] = 1;
  CHECK(grad_check([&] { return weighted_sum(ad::attention_scores(q, k, batch, heads, 0.7), 1); }, {q, k}) <
        1e-4);
  CHECK(grad_check(
            [&] {
              auto s = ad::attention_scores(q, k, batch, heads, 0.7);
              return weighted_sum(ad::masked_attend(s, v, mask, batch, heads), 2);
            },
            {q, k, v}) < 1e-4);
  Tensor logits = random_tensor(3, 5, rng);
  std::vector<std::uint8_t> m2(15, 0);
  m2[2] = m2[5] = m2[14] = 1;
  CHECK(grad_check([&] { return weighted_sum(ad::exp(ad::masked_log_softmax(logits, m2)), 3); }, {logits}) <
        1e-4);
  const std::size_t pickidx[] = {0, 1, 3};
  CHECK(grad_check([&] { return ad::sum(ad::pick(ad::masked_log_softmax(logits, m2), pickidx)); }, {logits}) <
        1e-4);
}

TEST_CASE("masked attention gives zero weight to masked keys") {
  // one valid key: output equals that key's value rows
  std::mt19937_64 rng(4);
  Tensor q = random_tensor(2, 4, rng, false), k = random_tensor(3, 4, rng, false), v = random_tensor(3, 4, rng, false);
  std::vector<std::uint8_t> mask{1, 0, 1};
  auto out = ad::masked_attend(ad::attention_scores(q, k, 1, 2, 1.0), v, mask, 1, 2);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 4; ++c) CHECK(out(r, c) == doctest::Approx(v(1, c)).epsilon(1e-12));
  }
  std::vector<std::uint8_t> all{1, 1, 1};
  CHECK_THROWS_AS(ad::masked_attend(ad::attention_scores(q, k, 1, 2, 1.0), v, all, 1, 2), InfeasibleError);
}

TEST_CASE("masked_softmax examples") {
  auto p = ad::masked_softmax(std::vector<double>{0, 0, 0, 0}, {});
  for (double x : p) CHECK(x == doctest::Approx(0.25));
  std::vector<std::uint8_t> m{0, 0, 1};
  p = ad::masked_softmax(std::vector<double>{1, 2, 3}, m);
  const double z = std::exp(1.0) + std::exp(2.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-12));
  CHECK(p[2] == 0.0);
  std::vector<std::uint8_t> m2{0, 1};
  p = ad::masked_softmax(std::vector<double>{5, 0}, m2);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 0.0);
  std::vector<std::uint8_t> all{1, 1};
  CHECK_THROWS_AS(ad::masked_softmax(std::vector<double>{1, 2}, all), InfeasibleError);
}

TEST_CASE("masked_softmax is a probability vector for random inputs") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    std::vector<double> x(n);
    std::vector<std::uint8_t> m(n);
    for (auto& v : x) v = u(rng);
    for (auto& b : m) b = rng() % 3 == 0;
    m[rng() % n] = 0;
    auto p = ad::masked_softmax(x, m);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(p[i] >= 0.0);
      if (m[i]) CHECK(p[i] == 0.0);
      s += p[i];
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("batch_norm examples") {
  ad::BatchNormStats st(1);
  st.eps = 0.0;
  Tensor g = Tensor::scalar(1.0), b = Tensor::scalar(0.0);
  auto y = ad::batch_norm(Tensor(2, 1, {1, 3}), g, b, st, ad::BatchNormMode::Train);
  CHECK(y(0, 0) == doctest::Approx(-1.0));
  CHECK(y(1, 0) == doctest::Approx(1.0));

  ad::BatchNormStats st2(1);
  Tensor unit(2, 1, {-1, 1});
  y = ad::batch_norm(unit, g, b, st2, ad::BatchNormMode::Train);
  CHECK(y(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(y(1, 0) == doctest::Approx(1.0).epsilon(1e-4));

  ad::BatchNormStats st3(1);
  y = ad::batch_norm(Tensor::scalar(0.5), Tensor::scalar(2.0), Tensor::scalar(1.0), st3, ad::BatchNormMode::Eval);
  CHECK(y(0, 0) == doctest::Approx(2.0).epsilon(1e-5));

  CHECK_THROWS_AS(ad::batch_norm(Tensor::scalar(0.5), g, b, st3, ad::BatchNormMode::Train), ConfigError);
}

TEST_CASE("batch_norm running statistics and gradients") {
  ad::BatchNormStats st(2);
  Tensor x(3, 2, {1, 2, 3, 4, 5, 9});
  ad::batch_norm(x, Tensor(1, 2, {1, 1}), Tensor(1, 2, {0, 0}), st, ad::BatchNormMode::Train);
  CHECK(st.running_mean[0] == doctest::Approx(0.1 * 3.0));
  CHECK(st.running_var[0] == doctest::Approx(0.9 + 0.1 * 4.0));  // unbiased variance 4

  std::mt19937_64 rng(6);
  Tensor xi = random_tensor(5, 3, rng), gamma = random_tensor(1, 3, rng), beta = random_tensor(1, 3, rng);
  ad::BatchNormStats s(3);
  CHECK(grad_check([&] { return weighted_sum(ad::batch_norm(xi, gamma, beta, s, ad::BatchNormMode::Train), 1); },
                   {xi, gamma, beta}) < 1e-4);
  CHECK(grad_check([&] { return weighted_sum(ad::batch_norm(xi, gamma, beta, s, ad::BatchNormMode::Eval), 2); },
                   {xi, gamma, beta}) < 1e-4);
}

TEST_CASE("backward examples") {
  Tensor x = Tensor::scalar(3.0, true);
  ad::backward(ad::mul(x, x));
  CHECK(x.grad()[0] == doctest::Approx(6.0));

  Tensor y = Tensor::scalar(0.5, true);
  ad::backward(ad::tanh(y));
  const double th = std::tanh(0.5);
  CHECK(y.grad()[0] == doctest::Approx(1 - th * th).epsilon(1e-12));
  CHECK(grad_check([&] { return ad::tanh(y); }, {y}) < 1e-4);

  Tensor a = Tensor::scalar(2.0, true), unused = Tensor::scalar(1.0, true);
  ad::backward(ad::scale(a, 3.0));
  CHECK(unused.grad()[0] == 0.0);

  // accumulation across calls
  Tensor z = Tensor::scalar(1.5, true);
  ad::backward(ad::scale(z, 2.0));
  ad::backward(ad::scale(z, 2.0));
  CHECK(z.grad()[0] == doctest::Approx(4.0));

  CHECK_THROWS_AS(ad::backward(Tensor(2, 1, {1, 2}, true)), ContractError);
}

TEST_CASE("no-grad mode records nothing") {
  Tensor x = Tensor::scalar(2.0, true);
  ad::NoGradGuard g;
  Tensor y = ad::mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.is_leaf());
}

TEST_CASE("graph evaluation is deterministic") {
  auto run = [] {
    std::mt19937_64 rng(9);
    Tensor a = random_tensor(4, 6, rng), b = random_tensor(6, 3, rng);
    Tensor out = ad::sum(ad::tanh(ad::matmul(a, b)));
    ad::backward(out);
    std::vector<double> v{out.item()};
    v.insert(v.end(), a.grad().begin(), a.grad().end());
    v.insert(v.end(), b.grad().begin(), b.grad().end());
    return v;
  };
  CHECK(run() == run());
}

TEST_CASE("adam examples") {
  Tensor p(1, 3, {0.5, -1.0, 2.0}, true);
  for (double& g : p.grad()) g = 1.0;
  ad::AdamState st;
  st.lr = 1e-4;
  std::vector<Tensor> ps{p};
  ad::adam_step(ps, st);
  CHECK(st.t == 1);
  CHECK(p.values()[0] == doctest::Approx(0.5 - 1e-4 / (1 + 1e-8)).epsilon(1e-12));
  CHECK(p.values()[1] == doctest::Approx(-1.0 - 1e-4).epsilon(1e-12));

  Tensor q(1, 2, {1.0, 2.0}, true);
  ad::AdamState s2;
  std::vector<Tensor> qs{q};
  ad::adam_step(qs, s2);
  CHECK(q.values()[0] == 1.0);
  CHECK(q.values()[1] == 2.0);
  CHECK(s2.t == 1);

  Tensor r(1, 1, {0.0}, true);
  ad::AdamState s3;
  std::vector<Tensor> rs{r};
  r.grad()[0] = 0.3;
  ad::adam_step(rs, s3);
  const double d1 = std::abs(r.values()[0]);
  const double before = r.values()[0];
  r.grad()[0] = 0.3;
  ad::adam_step(rs, s3);
  const double d2 = std::abs(r.values()[0] - before);
  CHECK(d2 <= d1 * (1 + 1e-6));
}

TEST_CASE("gradient clipping scales to the requested norm") {
  Tensor a(1, 2, {0, 0}, true);
  a.grad()[0] = 3;
  a.grad()[1] = 4;
  std::vector<Tensor> ps{a};
  CHECK(ad::clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(a.grad()[1] == doctest::Approx(0.8));
}
