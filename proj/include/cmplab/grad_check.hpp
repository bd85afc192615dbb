#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "cmplab/autodiff.hpp"
#include "cmplab/errors.hpp"
#include "cmplab/rng.hpp"
#include "cmplab/tensor.hpp"

namespace cmplab {

// Builds a scalar loss from parameter leaves registered in the given graph.
using LossBuilder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

namespace detail {

inline double eval_loss(const LossBuilder& build, const std::vector<Tensor>& params) {
  Graph g;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const auto& p : params) ids.push_back(g.input(p));
  NodeId loss = build(g, ids);
  double v = g.value(loss)[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss value");
  return v;
}

}  // namespace detail

// Max over sampled coordinates of
//   |analytic - central difference| / max(|analytic|, 1e-8).
// Coordinates are drawn uniformly over all parameter entries.
inline double grad_check(const LossBuilder& build, std::vector<Tensor> params, double eps,
                         int n_coords, RngStream& rng) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw ContractError("grad_check: eps must be in (0, 1e-2]");
  if (n_coords < 1) throw ContractError("grad_check: need at least one coordinate");

  Graph g;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const auto& p : params) ids.push_back(g.input(p));
  NodeId loss = build(g, ids);
  if (!std::isfinite(g.value(loss)[0])) throw NumericError("grad_check: non-finite loss value");
  g.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (NodeId id : ids) analytic.push_back(g.grad(id));

  int total = 0;
  for (const auto& p : params) total += p.size();

  double worst = 0.0;
  for (int s = 0; s < n_coords; ++s) {
    int flat = rng.next_int(total);
    size_t t = 0;
    while (flat >= params[t].size()) flat -= params[t++].size();

    double saved = params[t][flat];
    params[t][flat] = saved + eps;
    double up = detail::eval_loss(build, params);
    params[t][flat] = saved - eps;
    double down = detail::eval_loss(build, params);
    params[t][flat] = saved;

    double numeric = (up - down) / (2.0 * eps);
    double a = analytic[t][flat];
    double err = std::fabs(a - numeric) / std::max(std::fabs(a), 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace cmplab
