#include <doctest.h>

#include <chrono>

#include "seatnet/error.hpp"
#include "seatnet/graph.hpp"
#include "support/gradcheck.hpp"

using namespace seatnet;

TEST_CASE("finite-difference suite: 100 cases per kernel") {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(31337);
  for (const auto& k : gradcheck::kKernels) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) worst = std::max(worst, k.fn(rng));
    INFO(std::string(k.name));
    CHECK(worst < gradcheck::kTolerance);
    MESSAGE(std::string(k.name) << " worst relative error " << worst);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs < 120.0);
}

TEST_CASE("d bce(sigmoid(w), 1) / dw at w = 0 is -0.5") {
  Graph g;
  const auto w = g.parameter("w", Tensor::zeros({1, 1}));
  const auto p = g.sigmoid(w);
  const auto loss = g.bce_loss(g.flatten(p), Tensor::from({1}, {1}));
  const auto grads = g.backward(loss);
  CHECK(grads.at("w")[0] == doctest::Approx(-0.5).epsilon(1e-6));
}

TEST_CASE("unused parameters get an exact zero gradient") {
  Graph g;
  const auto w = g.parameter("w", Tensor::from({1, 1}, {0.3f}));
  g.parameter("unused", Tensor::full({2, 3}, 5.0f));
  const auto loss = g.bce_loss(g.flatten(g.sigmoid(w)), Tensor::from({1}, {0}));
  const auto grads = g.backward(loss);
  CHECK(grads.at("unused").bitwise_equal(Tensor::zeros({2, 3})));
  CHECK(grads.at("w")[0] != 0.0f);
}

TEST_CASE("graph inputs precede their nodes and backward needs a scalar") {
  Graph g;
  const auto x = g.parameter("x", Tensor::full({1, 2, 3, 3}, 1.0f));
  const auto k = g.constant(Tensor::full({1, 2, 1, 1}, 0.5f));
  const auto y = g.relu(g.conv2d(x, k, std::nullopt, 1, ops::Padding::kValid));
  for (NodeId id = 0; id < g.size(); ++id) {
    for (NodeId in : g.inputs(id)) CHECK(in < id);
  }
  CHECK_THROWS_AS(g.backward(y), Error);
}

TEST_CASE("gradients accumulate across shared uses") {
  // loss through w used twice: add(w, w) -> sigmoid -> bce with y = 1
  Graph g;
  const auto w = g.parameter("w", Tensor::from({1, 1}, {0.2f}));
  const auto loss = g.bce_loss(g.flatten(g.sigmoid(g.add(w, w))), Tensor::from({1}, {1}));
  const auto grads = g.backward(loss);
  const double s = 1.0 / (1.0 + std::exp(-0.4));
  CHECK(grads.at("w")[0] == doctest::Approx(2.0 * (s - 1.0)).epsilon(1e-5));
}

TEST_CASE("relu subgradient at zero and max-pool routing to the first maximum") {
  Graph g;
  const auto x = g.parameter("x", Tensor::from({1, 1, 2, 2}, {0.0f, 2.0f, 2.0f, -1.0f}));
  const auto pooled = g.global_max_pool(g.relu(x));
  const auto loss = g.bce_loss(g.sigmoid(g.dense(pooled, g.constant(Tensor::full({1, 1}, 1)),
                                                 g.constant(Tensor::zeros({1})))),
                               Tensor::from({1}, {1}));
  const Tensor gx = g.backward(loss).at("x");
  CHECK(gx[0] == 0.0f);
  CHECK(gx[1] != 0.0f);
  CHECK(gx[2] == 0.0f);
  CHECK(gx[3] == 0.0f);
}
