#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmplab/autodiff.hpp"
#include "cmplab/errors.hpp"
#include "cmplab/rng.hpp"
#include "cmplab/tensor.hpp"

namespace cmplab {

enum class ModelKind { mlp, encoder };
enum class TaskKind { classification, extraction, ranking };

inline std::string to_string(ModelKind k) { return k == ModelKind::mlp ? "mlp" : "encoder"; }
inline std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::classification: return "cls";
    case TaskKind::extraction: return "span";
    default: return "rank";
  }
}
inline ModelKind model_kind_from(const std::string& s) {
  if (s == "mlp") return ModelKind::mlp;
  if (s == "encoder") return ModelKind::encoder;
  throw ConfigError("unknown model kind: " + s);
}
inline TaskKind task_kind_from(const std::string& s) {
  if (s == "cls") return TaskKind::classification;
  if (s == "span") return TaskKind::extraction;
  if (s == "rank") return TaskKind::ranking;
  throw ConfigError("unknown task kind: " + s);
}

// mlp: dims = [d_in, hidden..., d_out], one dropout site per hidden activation.
// encoder: dims = [d_model, d_ff], single head, single block; dropout sites
// after the attention output projection and after the feed-forward output.
struct ModelConfig {
  ModelKind kind = ModelKind::mlp;
  std::vector<int> dims;
  int vocab = 0;        // > 0: token inputs through an embedding table
  int n_heads = 1;      // fixed at 1
  TaskKind task = TaskKind::classification;
  int out_dim = 0;      // encoder head width (classes or ranking vector dim)
  int feature_dim = 0;  // raw feature row width when vocab == 0

  std::vector<std::string> dropout_sites() const {
    std::vector<std::string> s;
    if (kind == ModelKind::mlp) {
      for (size_t i = 1; i + 1 < dims.size(); ++i) s.push_back("h" + std::to_string(i));
    } else {
      s.push_back("attn_out");
      s.push_back("ff_out");
    }
    return s;
  }

  int site_width(const std::string& site) const {
    if (kind == ModelKind::mlp) {
      for (size_t i = 1; i + 1 < dims.size(); ++i)
        if (site == "h" + std::to_string(i)) return dims[i];
    } else if (site == "attn_out" || site == "ff_out") {
      return dims[0];
    }
    throw ContractError("unknown dropout site: " + site);
  }

  void validate() const {
    if (dims.empty()) throw ConfigError("model dims must be non-empty");
    for (int d : dims)
      if (d <= 0) throw ConfigError("model dims must be positive");
    if (kind == ModelKind::mlp && dims.size() < 2)
      throw ConfigError("mlp needs at least [d_in, d_out] dims");
    if (kind == ModelKind::encoder && dims.size() != 2)
      throw ConfigError("encoder dims must be [d_model, d_ff]");
    if (kind == ModelKind::encoder && out_dim <= 0 && task != TaskKind::extraction)
      throw ConfigError("encoder classification/ranking head needs out_dim");
    if (kind == ModelKind::mlp && task == TaskKind::extraction)
      throw ConfigError("extraction requires the encoder (per-token outputs)");
    if (vocab == 0 && feature_dim <= 0)
      throw ConfigError("feature input needs feature_dim when vocab == 0");
    if (n_heads != 1) throw ConfigError("n_heads is fixed at 1");
  }
};

struct ModelParams {
  ModelConfig config;
  std::map<std::string, Tensor> tensors;

  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& [_, t] : tensors) n += t.size();
    return n;
  }
};

// Canonical parameter list; also fixes the initialization draw order.
inline std::vector<std::pair<std::string, std::vector<int>>> param_specs(const ModelConfig& c) {
  std::vector<std::pair<std::string, std::vector<int>>> specs;
  if (c.kind == ModelKind::mlp) {
    if (c.vocab > 0) specs.push_back({"embed", {c.vocab, c.dims[0]}});
    for (size_t i = 1; i < c.dims.size(); ++i) {
      specs.push_back({"w" + std::to_string(i), {c.dims[i - 1], c.dims[i]}});
      specs.push_back({"b" + std::to_string(i), {c.dims[i]}});
    }
  } else {
    int d = c.dims[0], ff = c.dims[1];
    if (c.vocab > 0)
      specs.push_back({"embed", {c.vocab, d}});
    else
      specs.push_back({"w_in", {c.feature_dim, d}});
    specs.push_back({"wq", {d, d}});
    specs.push_back({"wk", {d, d}});
    specs.push_back({"wv", {d, d}});
    specs.push_back({"wo", {d, d}});
    specs.push_back({"ff_w1", {d, ff}});
    specs.push_back({"ff_b1", {ff}});
    specs.push_back({"ff_w2", {ff, d}});
    specs.push_back({"ff_b2", {d}});
    if (c.task == TaskKind::extraction) {
      specs.push_back({"start_w", {d, 1}});
      specs.push_back({"start_b", {1}});
      specs.push_back({"end_w", {d, 1}});
      specs.push_back({"end_b", {1}});
    } else {
      specs.push_back({"head_w", {d, c.out_dim}});
      specs.push_back({"head_b", {c.out_dim}});
    }
  }
  return specs;
}

// Glorot-uniform weights, zero biases. Deterministic given the seed.
inline ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  RngStream rng(seed);
  for (const auto& [name, shape] : param_specs(config)) {
    Tensor t(shape);
    if (shape.size() == 2) {
      double s = std::sqrt(6.0 / (shape[0] + shape[1]));
      for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-s, s);
    }
    p.tensors[name] = std::move(t);
  }
  return p;
}

// Coarse static role split: parameters whose rows or columns attach to a
// dropout site ("vw", further split per step by the live mask) vs the rest.
inline std::string param_role(const ModelConfig& c, const std::string& name) {
  if (c.kind == ModelKind::mlp) {
    size_t hidden = c.dims.size() >= 2 ? c.dims.size() - 2 : 0;
    if (hidden == 0 || name == "embed") return "u";
    if (name == "b" + std::to_string(c.dims.size() - 1)) return "u";
    return "vw";
  }
  if (name == "wo" || name == "ff_w1" || name == "ff_w2" || name == "ff_b2" ||
      name == "head_w" || name == "start_w" || name == "end_w")
    return "vw";
  return "u";
}

struct ParamNodes {
  std::map<std::string, NodeId> id;
};

inline ParamNodes register_params(Graph& g, const ModelParams& p) {
  ParamNodes nodes;
  for (const auto& [name, _] : param_specs(p.config)) nodes.id[name] = g.input(p.tensors.at(name));
  return nodes;
}

// Per-site per-channel mask vectors (width = site width).
using SiteMasks = std::map<std::string, Tensor>;

inline SiteMasks identity_masks(const ModelConfig& c) {
  SiteMasks m;
  for (const auto& site : c.dropout_sites()) m[site] = Tensor::full({c.site_width(site)}, 1.0);
  return m;
}

struct ModelInput {
  bool token_mode = true;
  std::vector<int> tokens;  // concatenated retained segments
  Tensor features;          // [L, feature_dim] when vocab == 0

  int length() const {
    return token_mode ? static_cast<int>(tokens.size()) : features.rows();
  }
};

struct ForwardOut {
  NodeId logits = -1;        // classification [1, k]
  NodeId start_logits = -1;  // extraction [L, 1]
  NodeId end_logits = -1;
  NodeId query = -1;         // ranking [1, out_dim], L2-normalized
  int length = 0;
};

namespace detail {

inline NodeId masked(Graph& g, const ModelConfig& cfg, const SiteMasks* masks,
                     const std::string& site, NodeId x) {
  if (!masks) return x;  // identity: evaluation path, no mask nodes at all
  auto it = masks->find(site);
  if (it == masks->end()) throw ContractError("missing mask for dropout site '" + site + "'");
  const Tensor& v = it->second;
  if (v.size() != cfg.site_width(site))
    throw ShapeError("mask for site '" + site + "' has size " + std::to_string(v.size()) +
                     ", expected " + std::to_string(cfg.site_width(site)));
  const Tensor& xv = g.value(x);
  Tensor tiled(xv.shape());
  if (xv.rank() == 2) {
    for (int i = 0; i < xv.rows(); ++i)
      for (int j = 0; j < xv.cols(); ++j) tiled.at(i, j) = v[j];
  } else {
    for (int i = 0; i < xv.size(); ++i) tiled[i] = v[i];
  }
  return apply_mask(g, x, std::move(tiled));
}

}  // namespace detail

// Single-sample forward. Passing masks == nullptr runs the plain model;
// an explicit mask must cover every declared site.
inline ForwardOut forward(Graph& g, const ModelConfig& cfg, const ParamNodes& pn,
                          const ModelInput& input, const SiteMasks* masks) {
  if (masks) {
    for (const auto& site : cfg.dropout_sites())
      if (masks->find(site) == masks->end())
        throw ContractError("missing mask for dropout site '" + site + "'");
  }
  ForwardOut out;
  out.length = input.length();
  if (out.length == 0) throw ContractError("forward: empty input");

  if (cfg.kind == ModelKind::mlp) {
    NodeId x;
    if (cfg.vocab > 0) {
      if (!input.token_mode) throw ContractError("token model fed feature input");
      x = mean_rows(g, embed(g, pn.id.at("embed"), input.tokens));
    } else {
      if (input.token_mode) throw ContractError("feature model fed token input");
      x = mean_rows(g, g.input(input.features));
    }
    size_t layers = cfg.dims.size() - 1;
    NodeId h = x;
    for (size_t i = 1; i <= layers; ++i) {
      h = affine(g, h, pn.id.at("w" + std::to_string(i)), pn.id.at("b" + std::to_string(i)));
      if (i < layers) {
        h = relu(g, h);
        h = detail::masked(g, cfg, masks, "h" + std::to_string(i), h);
      }
    }
    if (cfg.task == TaskKind::ranking)
      out.query = l2_normalize(g, h);
    else
      out.logits = h;
    return out;
  }

  // encoder
  int d = cfg.dims[0];
  NodeId x;
  if (cfg.vocab > 0) {
    if (!input.token_mode) throw ContractError("token model fed feature input");
    x = embed(g, pn.id.at("embed"), input.tokens);
  } else {
    if (input.token_mode) throw ContractError("feature model fed token input");
    x = matmul(g, g.input(input.features), pn.id.at("w_in"));
  }
  NodeId q = matmul(g, x, pn.id.at("wq"));
  NodeId k = matmul(g, x, pn.id.at("wk"));
  NodeId v = matmul(g, x, pn.id.at("wv"));
  NodeId scores = scale(g, matmul_nt(g, q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  NodeId attn = matmul(g, softmax_rows(g, scores), v);
  NodeId attn_out = detail::masked(g, cfg, masks, "attn_out", matmul(g, attn, pn.id.at("wo")));
  NodeId h1 = add(g, x, attn_out);
  NodeId ff = affine(g, relu(g, affine(g, h1, pn.id.at("ff_w1"), pn.id.at("ff_b1"))),
                     pn.id.at("ff_w2"), pn.id.at("ff_b2"));
  NodeId h2 = add(g, h1, detail::masked(g, cfg, masks, "ff_out", ff));

  switch (cfg.task) {
    case TaskKind::extraction:
      out.start_logits = affine(g, h2, pn.id.at("start_w"), pn.id.at("start_b"));
      out.end_logits = affine(g, h2, pn.id.at("end_w"), pn.id.at("end_b"));
      break;
    case TaskKind::classification:
      out.logits = affine(g, mean_rows(g, h2), pn.id.at("head_w"), pn.id.at("head_b"));
      break;
    case TaskKind::ranking:
      out.query =
          l2_normalize(g, affine(g, mean_rows(g, h2), pn.id.at("head_w"), pn.id.at("head_b")));
      break;
  }
  return out;
}

// Dot-product similarity between a query vector and a document vector.
inline double rank_score(const Tensor& q, const Tensor& d) {
  if (q.size() != d.size())
    throw ShapeError("rank_score: dimension mismatch " + q.shape_str() + " vs " + d.shape_str());
  double acc = 0.0;
  for (int i = 0; i < q.size(); ++i) acc += q[i] * d[i];
  return acc;
}

// Rough per-forward multiply-add count, used for training cost reports.
inline double flops_estimate(const ModelConfig& c, int length) {
  double L = length;
  if (c.kind == ModelKind::mlp) {
    double f = c.vocab > 0 ? L * c.dims[0] : L * c.feature_dim;
    for (size_t i = 1; i < c.dims.size(); ++i) f += 2.0 * c.dims[i - 1] * c.dims[i];
    return f;
  }
  double d = c.dims[0], ff = c.dims[1];
  double f = c.vocab > 0 ? L * d : 2.0 * L * c.feature_dim * d;
  f += 4.0 * 2.0 * L * d * d;       // q, k, v, o projections
  f += 2.0 * 2.0 * L * L * d;       // scores and mix
  f += 2.0 * L * d * ff * 2.0;      // feed-forward
  f += 2.0 * L * d * std::max(1, c.out_dim);
  return f;
}

// ---- checkpoint io ----------------------------------------------------------

inline nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(c.kind);
  j["dims"] = c.dims;
  j["vocab"] = c.vocab;
  j["n_heads"] = c.n_heads;
  j["task"] = to_string(c.task);
  j["out_dim"] = c.out_dim;
  j["feature_dim"] = c.feature_dim;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = model_kind_from(j.at("kind").get<std::string>());
  c.dims = j.at("dims").get<std::vector<int>>();
  c.vocab = j.at("vocab").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.task = task_kind_from(j.at("task").get<std::string>());
  c.out_dim = j.at("out_dim").get<int>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.validate();
  return c;
}

inline nlohmann::ordered_json checkpoint_to_json(const ModelParams& p) {
  nlohmann::ordered_json j;
  j["magic"] = "CMPLAB1";
  j["config"] = config_to_json(p.config);
  nlohmann::ordered_json params;
  for (const auto& [name, _] : param_specs(p.config)) {
    const Tensor& t = p.tensors.at(name);
    nlohmann::ordered_json entry;
    entry["shape"] = t.shape();
    entry["data"] = t.values();
    params[name] = std::move(entry);
  }
  j["params"] = std::move(params);
  return j;
}

inline ModelParams checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("magic") || j.at("magic").get<std::string>() != "CMPLAB1")
    throw ConfigError("not a CMPLAB1 checkpoint");
  ModelParams p;
  p.config = config_from_json(j.at("config"));
  for (const auto& [name, shape] : param_specs(p.config)) {
    const auto& entry = j.at("params").at(name);
    Tensor t(entry.at("shape").get<std::vector<int>>(),
             entry.at("data").get<std::vector<double>>());
    if (t.shape() != shape) throw ConfigError("checkpoint tensor '" + name + "' has wrong shape");
    p.tensors[name] = std::move(t);
  }
  return p;
}

}  // namespace cmplab
