/*
 * Copyright 2026 The Noisy Label Lab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>

#include "doctest.h"
#include "nlab/errors.hpp"
#include "nlab/graph.hpp"
#include "nlab/random.hpp"
#include "nlab/tensor.hpp"
#include "oracles.hpp"

using namespace nlab;

namespace {

Tensor identity2() { return Tensor::matrix(2, 2, {1, 0, 0, 1}); }

// Central difference of a scalar graph function of one tensor input.
template <typename F>
std::vector<double> numeric_grad(const Tensor& x, F&& f, double step = 1e-5) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor up = x, down = x;
    up[i] += step;
    down[i] -= step;
    Graph g1, g2;
    out[i] = (f(g1, g1.constant(up)).value().item() - f(g2, g2.constant(down)).value().item()) /
             (2 * step);
  }
  return out;
}

}  // namespace

TEST_CASE("tensor: construction and shape invariants") {
  Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(shape_string(t.shape()) == "[2x3]");
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ConfigError);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK_THROWS_AS(t.item(), UsageError);
  Tensor bad = Tensor::vector({1.0, std::nan("")});
  CHECK_FALSE(bad.all_finite());
}

TEST_CASE("affine: identity input and weights") {
  Graph g;
  Var out = affine(g.constant(identity2()), g.constant(identity2()), g.constant(Tensor::vector({0, 0})));
  CHECK(out.value() == identity2());
}

TEST_CASE("affine: zero input passes the bias") {
  Graph g;
  Rng rng(3);
  Var out = affine(g.constant(Tensor(Shape{1, 3})), g.constant(oracle::random_tensor({3, 3}, rng)),
                   g.constant(Tensor::vector({1, 2, 3})));
  CHECK(out.value() == Tensor::matrix(1, 3, {1, 2, 3}));
}

TEST_CASE("affine: random 3x4 by 4x2 matches the triple-loop oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = oracle::random_tensor({3, 4}, rng, 2.0);
    const Tensor w = oracle::random_tensor({4, 2}, rng, 2.0);
    const Tensor b = oracle::random_tensor({2}, rng, 2.0);
    Graph g;
    const Tensor out = affine(g.constant(x), g.constant(w), g.constant(b)).value();
    const auto expected = oracle::matmul_bias(oracle::to_matrix(x), oracle::to_matrix(w), oracle::to_vector(b));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) CHECK(std::fabs(out.at(i, j) - static_cast<double>(expected[i][j])) < 1e-12);
  }
}

TEST_CASE("affine: shape mismatch names the dimensions") {
  Graph g;
  try {
    affine(g.constant(Tensor(Shape{2, 3})), g.constant(Tensor(Shape{4, 2})), g.constant(Tensor(Shape{2})));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("3") != std::string::npos);
    CHECK(what.find("4") != std::string::npos);
  }
  CHECK_THROWS_AS(affine(g.constant(Tensor(Shape{2, 3})), g.constant(Tensor(Shape{3, 2})),
                         g.constant(Tensor(Shape{5}))),
                  ConfigError);
}

TEST_CASE("sigmoid: values, saturation and derivative") {
  Graph g;
  CHECK(sigmoid(g.constant(Tensor::scalar(0.0))).value().item() == 0.5);
  const double big = sigmoid(g.constant(Tensor::scalar(40.0))).value().item();
  CHECK(big < 1.0);
  CHECK(big > 1.0 - 1e-15);
  const double tiny = sigmoid(g.constant(Tensor::scalar(-800.0))).value().item();
  CHECK(tiny > 0.0);
  CHECK(std::isfinite(tiny));

  Var x = g.parameter(Tensor::scalar(0.0));
  g.backward(sum(sigmoid(x)));
  const double analytic = g.grad(x).item();
  const auto numeric = numeric_grad(Tensor::scalar(0.0), [](Graph&, Var v) { return sum(sigmoid(v)); });
  CHECK(analytic == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(std::fabs(analytic - numeric[0]) < 1e-9);
}

TEST_CASE("clip01: forward values and gradient mask") {
  Graph g;
  Var x = g.parameter(Tensor::vector({-0.3, 0.5, 1.7}));
  Var y = clip01(x);
  CHECK(y.value() == Tensor::vector({0.0, 0.5, 1.0}));
  g.backward(sum(y));
  CHECK(g.grad(x) == Tensor::vector({0.0, 1.0, 0.0}));

  const Tensor inside = Tensor::vector({0.0, 0.25, 0.75, 1.0});
  CHECK(clip01(g.constant(inside)).value() == inside);
}

TEST_CASE("clip01: boundary points pass gradient") {
  Graph g;
  Var x = g.parameter(Tensor::vector({0.0, 1.0}));
  g.backward(sum(clip01(x)));
  CHECK(g.grad(x) == Tensor::vector({1.0, 1.0}));
}

TEST_CASE("clip01: idempotent") {
  Rng rng(5);
  const Tensor x = oracle::random_tensor({50}, rng, 3.0);
  Graph g;
  Var once = clip01(g.constant(x));
  CHECK(clip01(once).value() == once.value());
}

TEST_CASE("stop_gradient: blocks the input, passes the other factor") {
  Graph g;
  Var x = g.parameter(Tensor::vector({1.0, -2.0, 3.0}));
  Var y = g.parameter(Tensor::vector({0.5, 0.25, -1.0}));
  g.backward(sum(stop_gradient(x) * y));
  CHECK(g.grad(x) == Tensor::vector({0.0, 0.0, 0.0}));
  CHECK(g.grad(y) == x.value());
}

TEST_CASE("stop_gradient: idempotent") {
  Graph g;
  Var x = g.parameter(Tensor::vector({1.0, 2.0}));
  Var once = stop_gradient(x);
  Var twice = stop_gradient(stop_gradient(x));
  CHECK(once.value() == twice.value());
  g.backward(sum(twice * twice) + sum(x));
  CHECK(g.grad(x) == Tensor::vector({1.0, 1.0}));
}

TEST_CASE("backward: sum and sum of squares") {
  Graph g;
  Var x = g.parameter(Tensor::vector({1.0, 2.0, 3.0}));
  g.backward(sum(x));
  CHECK(g.grad(x) == Tensor::vector({1.0, 1.0, 1.0}));
  g.backward(sum(x * x));
  CHECK(g.grad(x) == Tensor::vector({2.0, 4.0, 6.0}));
}

TEST_CASE("backward: non-scalar root is a usage error") {
  Graph g;
  Var x = g.parameter(Tensor::vector({1.0, 2.0}));
  CHECK_THROWS_AS(g.backward(x), UsageError);
}

TEST_CASE("backward: random two-layer network matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const Tensor x = oracle::random_tensor({3, 4}, rng);
    Tensor params[4] = {oracle::random_tensor({4, 5}, rng), oracle::random_tensor({5}, rng),
                        oracle::random_tensor({5, 2}, rng), oracle::random_tensor({2}, rng)};
    const Tensor target = oracle::random_tensor({3, 2}, rng);
    auto loss = [&](Graph& g, Var* vars) {
      Var h = tanh(affine(g.constant(x), vars[0], vars[1]));
      Var out = sigmoid(affine(h, vars[2], vars[3]));
      Var diff = out - g.constant(target);
      return sum(diff * diff) + scale(sum(abs(vars[0])), 0.01);
    };
    Graph g;
    Var vars[4];
    for (int i = 0; i < 4; ++i) vars[i] = g.parameter(params[i]);
    g.backward(loss(g, vars));
    for (int i = 0; i < 4; ++i) {
      const Tensor analytic = g.grad(vars[i]);
      for (std::size_t j = 0; j < params[i].size(); ++j) {
        auto eval = [&](double delta) {
          Tensor copy[4] = {params[0], params[1], params[2], params[3]};
          copy[i][j] += delta;
          Graph h;
          Var v[4];
          for (int k = 0; k < 4; ++k) v[k] = h.constant(copy[k]);
          return loss(h, v).value().item();
        };
        const double numeric = (eval(1e-5) - eval(-1e-5)) / 2e-5;
        CHECK(oracle::relative_error(analytic[j], numeric) < 1e-4);
      }
    }
  }
}

TEST_CASE("backward: every op agrees with finite differences") {
  Rng rng(21);
  const Tensor x0 = oracle::random_tensor({2, 3}, rng, 0.9);
  const Tensor other = oracle::random_tensor({2, 3}, rng, 0.9);
  using Fn = Var (*)(Graph&, Var, const Tensor&);
  const std::pair<const char*, Fn> cases[] = {
      {"add", [](Graph& g, Var x, const Tensor& o) { return sum(x + g.constant(o)); }},
      {"sub", [](Graph& g, Var x, const Tensor& o) { return sum(g.constant(o) - x); }},
      {"mul", [](Graph& g, Var x, const Tensor& o) { return sum(x * g.constant(o)); }},
      {"scale", [](Graph&, Var x, const Tensor&) { return sum(scale(x, -2.5)); }},
      {"one_minus", [](Graph&, Var x, const Tensor&) { return sum(one_minus(x) * one_minus(x)); }},
      {"tanh", [](Graph&, Var x, const Tensor&) { return sum(tanh(x)); }},
      {"abs", [](Graph&, Var x, const Tensor&) { return sum(abs(x)); }},
      {"log_clamped", [](Graph&, Var x, const Tensor&) { return sum(log_clamped(x * x, 1e-12)); }},
      {"concat", [](Graph& g, Var x, const Tensor& o) {
         Var c = concat_cols(x, g.constant(o));
         return sum(c * c);
       }},
      {"clip01", [](Graph&, Var x, const Tensor&) { return sum(clip01(scale(x, 0.5) + x * x)); }},
  };
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    Graph g;
    Var x = g.parameter(x0);
    g.backward(fn(g, x, other));
    const Tensor analytic = g.grad(x);
    const auto numeric = numeric_grad(x0, [&](Graph& h, Var v) { return fn(h, v, other); });
    for (std::size_t i = 0; i < x0.size(); ++i) {
      CHECK(oracle::relative_error(analytic[i], numeric[i]) < 1e-6);
    }
  }
}

TEST_CASE("log_clamped: clamps below eps without gradient") {
  Graph g;
  Var x = g.parameter(Tensor::vector({0.0, 1e-20, 0.5}));
  Var y = log_clamped(x, 1e-12);
  CHECK(y.value()[0] == doctest::Approx(std::log(1e-12)));
  CHECK(y.value()[1] == doctest::Approx(std::log(1e-12)));
  g.backward(sum(y));
  CHECK(g.grad(x)[0] == 0.0);
  CHECK(g.grad(x)[1] == 0.0);
  CHECK(g.grad(x)[2] == doctest::Approx(2.0));
}

TEST_CASE("abs: subgradient zero at the kink") {
  Graph g;
  Var x = g.parameter(Tensor::vector({-2.0, 0.0, 3.0}));
  g.backward(sum(abs(x)));
  CHECK(g.grad(x) == Tensor::vector({-1.0, 0.0, 1.0}));
}

TEST_CASE("graph: gradients accumulate over shared uses") {
  Graph g;
  Var x = g.parameter(Tensor::vector({2.0}));
  Var y = x * x;
  g.backward(sum(y + y + x));
  CHECK(g.grad(x)[0] == 9.0);
}

TEST_CASE("graph: forward values finite for finite inputs") {
  Rng rng(8);
  Graph g;
  Var x = g.constant(oracle::random_tensor({4, 6}, rng, 50.0));
  Var w = g.constant(oracle::random_tensor({6, 3}, rng, 50.0));
  Var b = g.constant(oracle::random_tensor({3}, rng, 50.0));
  Var p = sigmoid(affine(x, w, b));
  CHECK(p.value().all_finite());
  for (double v : p.value().values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(sum(log_clamped(p, 1e-12)).value().all_finite());
}

TEST_CASE("graph: identical graphs give bitwise identical gradients") {
  auto run = [] {
    Rng rng(77);
    Graph g;
    Var x = g.parameter(oracle::random_tensor({5, 7}, rng));
    Var w = g.parameter(oracle::random_tensor({7, 4}, rng));
    Var b = g.parameter(oracle::random_tensor({4}, rng));
    g.backward(sum(tanh(affine(x, w, b)) * tanh(affine(x, w, b))));
    return std::make_tuple(g.grad(x), g.grad(w), g.grad(b));
  };
  CHECK(run() == run());
}

TEST_CASE("graph: nodes past a stop_gradient get no gradient") {
  Graph g;
  Var a = g.parameter(Tensor::vector({1.0, 2.0}));
  Var b = tanh(a);
  Var c = stop_gradient(b);
  g.backward(sum(c * c));
  CHECK(g.grad(a) == Tensor::vector({0.0, 0.0}));
  CHECK(g.grad(b) == Tensor::vector({0.0, 0.0}));
  CHECK_FALSE(g.requires_grad(c));
}
