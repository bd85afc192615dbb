#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cmplab/autodiff.hpp"
#include "cmplab/errors.hpp"

namespace cmplab {

// Ordered task-specific losses l(0..c) of a full model and its progressively
// ablated submodels, plus the constant dummy baseline b appended as l(c+1).
struct ComparisonChain {
  std::vector<double> losses;
  double b = 0.0;

  int c() const { return static_cast<int>(losses.size()) - 1; }

  void validate() const {
    if (losses.empty()) throw ContractError("comparison chain needs at least l(0)");
    if (!std::isfinite(b)) throw NumericError("comparison chain: non-finite baseline b");
    for (size_t i = 0; i < losses.size(); ++i)
      if (!std::isfinite(losses[i]))
        throw NumericError("comparison chain: non-finite loss at index " + std::to_string(i));
  }
};

// Pairwise hinge over the c+2 losses: sum over i<j of max(0, l(i) - l(j))
// with l(c+1) = b. Ties contribute nothing.
inline double comparative_loss(const ComparisonChain& chain) {
  chain.validate();
  int c = chain.c();
  double total = 0.0;
  for (int i = 0; i <= c; ++i) {
    for (int j = i + 1; j <= c; ++j) total += std::max(0.0, chain.losses[i] - chain.losses[j]);
    total += std::max(0.0, chain.losses[i] - chain.b);
  }
  return total;
}

// {-1, 0, +1} weight adjustment for the pair (i, j): +1 when the less
// ablated model loses harder, -1 when the more ablated model wins.
inline int cmp_weight(int i, int j, double li, double lj) {
  if (i == j) throw ContractError("cmp_weight: i and j must differ");
  if (i < j && li > lj) return 1;
  if (i > j && li < lj) return -1;
  return 0;
}

// Integer weights for l(0..c) and the dummy entry; they sum to zero and
// the first c+1 sum to the count of losses above b.
inline std::vector<int> dynamic_weights(const ComparisonChain& chain) {
  chain.validate();
  int n = chain.c() + 2;
  auto at = [&](int i) { return i <= chain.c() ? chain.losses[static_cast<size_t>(i)] : chain.b; };
  std::vector<int> alpha(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) alpha[static_cast<size_t>(i)] += cmp_weight(i, j, at(i), at(j));
  return alpha;
}

// The weighted equivalent: sum over all c+2 entries of alpha(i) * l(i).
inline double weighted_form(const ComparisonChain& chain) {
  auto alpha = dynamic_weights(chain);
  double total = 0.0;
  for (int i = 0; i <= chain.c(); ++i) total += alpha[static_cast<size_t>(i)] * chain.losses[i];
  total += alpha.back() * chain.b;
  return total;
}

enum class Strategy { cmp, average, first, second, max };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::cmp: return "cmp";
    case Strategy::average: return "average";
    case Strategy::first: return "first";
    case Strategy::second: return "second";
    default: return "max";
  }
}

inline Strategy strategy_from(const std::string& s) {
  if (s == "cmp") return Strategy::cmp;
  if (s == "average") return Strategy::average;
  if (s == "first") return Strategy::first;
  if (s == "second") return Strategy::second;
  if (s == "max") return Strategy::max;
  throw ConfigError("unknown strategy: " + s);
}

// Heuristic weights over l(0..c). cmp reports its dynamic weights
// truncated to the real models.
inline std::vector<double> strategy_weights(Strategy strategy, const ComparisonChain& chain) {
  chain.validate();
  int c = chain.c();
  std::vector<double> w(static_cast<size_t>(c) + 1, 0.0);
  switch (strategy) {
    case Strategy::average:
      for (auto& x : w) x = 1.0 / (c + 1);
      break;
    case Strategy::first:
      w[0] = 1.0;
      break;
    case Strategy::second:
      if (c < 1) throw ContractError("strategy 'second' needs at least one ablation step");
      w[1] = 1.0;
      break;
    case Strategy::max: {
      size_t best = 0;
      for (size_t i = 1; i < chain.losses.size(); ++i)
        if (chain.losses[i] > chain.losses[best]) best = i;
      w[best] = 1.0;
      break;
    }
    case Strategy::cmp: {
      auto alpha = dynamic_weights(chain);
      for (int i = 0; i <= c; ++i) w[static_cast<size_t>(i)] = alpha[static_cast<size_t>(i)];
      break;
    }
  }
  return w;
}

// ---- graph composition ------------------------------------------------------

// Hinge form over live loss nodes; b enters as a detached constant.
inline NodeId comparative_loss_node(Graph& g, const std::vector<NodeId>& losses, double b) {
  if (losses.empty()) throw ContractError("comparative loss needs at least l(0)");
  for (size_t i = 0; i < losses.size(); ++i)
    if (!std::isfinite(g.value(losses[i])[0]))
      throw NumericError("comparative loss: non-finite loss at index " + std::to_string(i));
  if (!std::isfinite(b)) throw NumericError("comparative loss: non-finite baseline b");

  NodeId bnode = g.input(Tensor::scalar(b));
  NodeId total = -1;
  int c = static_cast<int>(losses.size()) - 1;
  for (int i = 0; i <= c; ++i) {
    for (int j = i + 1; j <= c; ++j) {
      NodeId h = hinge(g, losses[static_cast<size_t>(i)], losses[static_cast<size_t>(j)]);
      total = total < 0 ? h : add(g, total, h);
    }
    NodeId h = hinge(g, losses[static_cast<size_t>(i)], bnode);
    total = total < 0 ? h : add(g, total, h);
  }
  return total;
}

// Heuristic training objective: weights are detached constants computed
// from the current loss values.
inline NodeId strategy_loss_node(Graph& g, Strategy strategy, const std::vector<NodeId>& losses,
                                 double b) {
  if (strategy == Strategy::cmp) return comparative_loss_node(g, losses, b);
  ComparisonChain chain;
  for (NodeId l : losses) chain.losses.push_back(g.value(l)[0]);
  chain.b = b;
  auto w = strategy_weights(strategy, chain);
  NodeId total = -1;
  for (size_t i = 0; i < losses.size(); ++i) {
    if (w[i] == 0.0) continue;
    NodeId term = w[i] == 1.0 ? losses[i] : scale(g, losses[i], w[i]);
    total = total < 0 ? term : add(g, total, term);
  }
  if (total < 0) total = g.input(Tensor::scalar(0.0));
  return total;
}

}  // namespace cmplab
