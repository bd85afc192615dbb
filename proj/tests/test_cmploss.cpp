#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "cmplab/cmploss.hpp"
#include "cmplab/rng.hpp"

using namespace cmplab;

TEST_CASE("comparative loss by hand enumeration") {
  REQUIRE_THAT(comparative_loss({{0.5, 0.7}, 0.0}), Catch::Matchers::WithinAbs(1.2, 1e-15));
  REQUIRE(comparative_loss({{0.3}, 0.0}) == 0.3);  // degenerates to the bare task loss
  REQUIRE_THAT(comparative_loss({{0.2, 0.5, 0.4}, 0.0}), Catch::Matchers::WithinAbs(1.2, 1e-15));
  // baseline pinned to the full model's loss
  REQUIRE_THAT(comparative_loss({{0.5, 0.4}, 0.5}), Catch::Matchers::WithinAbs(0.1, 1e-15));
}

TEST_CASE("cmp weight truth table") {
  REQUIRE(cmp_weight(0, 1, 0.9, 0.7) == 1);
  REQUIRE(cmp_weight(1, 0, 0.7, 0.9) == -1);
  REQUIRE(cmp_weight(0, 1, 0.5, 0.7) == 0);
  REQUIRE(cmp_weight(0, 1, 0.5, 0.5) == 0);
  REQUIRE(cmp_weight(1, 0, 0.5, 0.5) == 0);
  REQUIRE_THROWS_AS(cmp_weight(2, 2, 0.1, 0.1), ContractError);
}

TEST_CASE("dynamic weights by hand evaluation") {
  REQUIRE(dynamic_weights({{0.5, 0.7}, 0.0}) == std::vector<int>{1, 1, -2});
  REQUIRE(dynamic_weights({{0.9, 0.7}, 0.0}) == std::vector<int>{2, 0, -2});
  REQUIRE(dynamic_weights({{0.0, 0.0, 0.0}, 0.0}) == std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("weighted form equals the hinge form") {
  REQUIRE_THAT(weighted_form({{0.5, 0.7}, 0.0}), Catch::Matchers::WithinAbs(1.2, 1e-15));
  REQUIRE_THAT(weighted_form({{0.9, 0.7}, 0.0}), Catch::Matchers::WithinAbs(1.8, 1e-15));
}

TEST_CASE("truncated weighted form differs by the dummy term") {
  RngStream rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    ComparisonChain chain;
    int c = rng.next_int(5);
    for (int i = 0; i <= c; ++i) chain.losses.push_back(rng.uniform(0.0, 2.0));
    chain.b = rng.bernoulli(0.5) ? 0.0 : chain.losses[0];
    auto alpha = dynamic_weights(chain);
    double truncated = 0.0;
    int above = 0;
    for (int i = 0; i <= c; ++i) {
      truncated += alpha[static_cast<size_t>(i)] * chain.losses[static_cast<size_t>(i)];
      if (chain.losses[static_cast<size_t>(i)] > chain.b) ++above;
    }
    double full = weighted_form(chain);
    REQUIRE_THAT(full - truncated, Catch::Matchers::WithinAbs(-above * chain.b, 1e-12));
  }
}

TEST_CASE("strategy weights") {
  ComparisonChain c2{{0.2, 0.5, 0.4}, 0.0};
  auto avg = strategy_weights(Strategy::average, c2);
  for (double w : avg) REQUIRE_THAT(w, Catch::Matchers::WithinRel(1.0 / 3.0, 1e-15));
  REQUIRE(strategy_weights(Strategy::max, c2) == std::vector<double>{0, 1, 0});
  REQUIRE(strategy_weights(Strategy::first, {{0.5, 0.7}, 0.0}) == std::vector<double>{1, 0});
  REQUIRE(strategy_weights(Strategy::second, {{0.5, 0.7}, 0.0}) == std::vector<double>{0, 1});
  REQUIRE_THROWS_AS(strategy_weights(Strategy::second, {{0.5}, 0.0}), ContractError);
  // ties on max pick the lowest index
  REQUIRE(strategy_weights(Strategy::max, {{0.5, 0.5}, 0.0}) == std::vector<double>{1, 0});
}

TEST_CASE("identity and weight-sum invariants over random chains") {
  RngStream rng(11);
  for (int trial = 0; trial < 10000; ++trial) {
    ComparisonChain chain;
    int c = rng.next_int(5);
    for (int i = 0; i <= c; ++i) chain.losses.push_back(rng.uniform(0.0, 2.0));
    chain.b = rng.bernoulli(0.5) ? 0.0 : chain.losses[0];

    double hinge_form = comparative_loss(chain);
    double weighted = weighted_form(chain);
    REQUIRE(std::fabs(hinge_form - weighted) <= 1e-9);

    auto alpha = dynamic_weights(chain);
    int total = 0, first = 0, above = 0;
    for (size_t i = 0; i < alpha.size(); ++i) total += alpha[i];
    for (int i = 0; i <= c; ++i) {
      first += alpha[static_cast<size_t>(i)];
      if (chain.losses[static_cast<size_t>(i)] > chain.b) ++above;
    }
    REQUIRE(total == 0);
    REQUIRE(first == above);
  }
}

TEST_CASE("zero-pair property and ordered chains") {
  RngStream rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    ComparisonChain chain;
    int c = 1 + rng.next_int(4);
    double v = rng.uniform(0.0, 0.5);
    for (int i = 0; i <= c; ++i) {
      chain.losses.push_back(v);
      v += rng.uniform(0.0, 0.5);  // non-decreasing
    }
    chain.b = v + rng.uniform(0.0, 1.0);  // b >= max(l)
    REQUIRE(comparative_loss(chain) == 0.0);
  }
  // a violating pair (i, j) contributes exactly its difference
  REQUIRE_THAT(comparative_loss({{0.7, 0.2}, 0.7}), Catch::Matchers::WithinAbs(0.5, 1e-15));
}

TEST_CASE("scale covariance") {
  RngStream rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    ComparisonChain chain;
    int c = rng.next_int(4);
    for (int i = 0; i <= c; ++i) chain.losses.push_back(rng.uniform(0.0, 2.0));
    chain.b = rng.bernoulli(0.5) ? 0.0 : chain.losses[0];
    double lam = rng.uniform(0.1, 5.0);
    ComparisonChain scaled = chain;
    for (auto& l : scaled.losses) l *= lam;
    scaled.b *= lam;
    REQUIRE_THAT(comparative_loss(scaled),
                 Catch::Matchers::WithinRel(lam * comparative_loss(chain), 1e-12));
    REQUIRE(dynamic_weights(scaled) == dynamic_weights(chain));
  }
}

TEST_CASE("non-finite losses are rejected with the offending index") {
  ComparisonChain chain{{0.5, std::numeric_limits<double>::quiet_NaN()}, 0.0};
  REQUIRE_THROWS_MATCHES(comparative_loss(chain), NumericError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("1")));
  ComparisonChain inf_b{{0.5}, std::numeric_limits<double>::infinity()};
  REQUIRE_THROWS_AS(comparative_loss(inf_b), NumericError);
}

TEST_CASE("graph hinge form matches the value form and routes gradients") {
  RngStream rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    int c = rng.next_int(4);
    std::vector<double> values;
    for (int i = 0; i <= c; ++i) values.push_back(rng.uniform(0.0, 2.0));
    double b = rng.bernoulli(0.5) ? 0.0 : values[0];
    Graph g;
    std::vector<NodeId> nodes;
    for (double v : values) nodes.push_back(g.input(Tensor::scalar(v)));
    NodeId loss = comparative_loss_node(g, nodes, b);
    ComparisonChain chain{values, b};
    REQUIRE_THAT(g.value(loss)[0], Catch::Matchers::WithinAbs(comparative_loss(chain), 1e-12));

    // away from ties, d loss / d l(i) equals the dynamic weight
    bool tie = false;
    auto at = [&](int i) { return i <= c ? values[static_cast<size_t>(i)] : b; };
    for (int i = 0; i <= c + 1 && !tie; ++i)
      for (int j = i + 1; j <= c + 1 && !tie; ++j) tie = at(i) == at(j);
    if (!tie) {
      g.backward(loss);
      auto alpha = dynamic_weights(chain);
      for (int i = 0; i <= c; ++i)
        REQUIRE_THAT(g.grad(nodes[static_cast<size_t>(i)])[0],
                     Catch::Matchers::WithinAbs(alpha[static_cast<size_t>(i)], 1e-12));
    }
  }
}

TEST_CASE("hinge subgradient at an exact tie is zero") {
  Graph g;
  NodeId l0 = g.input(Tensor::scalar(0.5));
  NodeId l1 = g.input(Tensor::scalar(0.5));
  NodeId loss = comparative_loss_node(g, {l0, l1}, 0.0);
  g.backward(loss);
  // tied pair contributes nothing; both baseline pairs are active
  REQUIRE(g.grad(l0)[0] == 1.0);
  REQUIRE(g.grad(l1)[0] == 1.0);
}

TEST_CASE("detached baseline under the full-model policy") {
  Graph g;
  NodeId l0 = g.input(Tensor::scalar(0.9));
  NodeId l1 = g.input(Tensor::scalar(0.4));
  NodeId loss = comparative_loss_node(g, {l0, l1}, 0.9);  // b = l(0) by value
  REQUIRE_THAT(g.value(loss)[0], Catch::Matchers::WithinAbs(0.5, 1e-15));
  g.backward(loss);
  REQUIRE(g.grad(l0)[0] == 1.0);   // only through the (0,1) pair
  REQUIRE(g.grad(l1)[0] == -1.0);  // no flow into the dummy constant
}

TEST_CASE("strategy loss nodes weight gradients as declared") {
  auto grads_for = [](Strategy s) {
    Graph g;
    NodeId l0 = g.input(Tensor::scalar(0.2));
    NodeId l1 = g.input(Tensor::scalar(0.8));
    NodeId loss = strategy_loss_node(g, s, {l0, l1}, 0.0);
    g.backward(loss);
    return std::pair<double, double>{g.grad(l0)[0], g.grad(l1)[0]};
  };
  REQUIRE(grads_for(Strategy::average) == std::pair<double, double>{0.5, 0.5});
  REQUIRE(grads_for(Strategy::first) == std::pair<double, double>{1.0, 0.0});
  REQUIRE(grads_for(Strategy::second) == std::pair<double, double>{0.0, 1.0});
  REQUIRE(grads_for(Strategy::max) == std::pair<double, double>{0.0, 1.0});
  REQUIRE(grads_for(Strategy::cmp) == std::pair<double, double>{1.0, 1.0});
}
