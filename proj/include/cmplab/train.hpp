#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmplab/ablation.hpp"
#include "cmplab/cmploss.hpp"
#include "cmplab/errors.hpp"
#include "cmplab/models.hpp"
#include "cmplab/rng.hpp"
#include "cmplab/tasks.hpp"

namespace cmplab {

enum class BPolicy { zero, full_model_loss };
enum class AblationKind { drop, crop };

inline std::string to_string(BPolicy b) { return b == BPolicy::zero ? "zero" : "full_model_loss"; }
inline std::string to_string(AblationKind a) { return a == AblationKind::drop ? "drop" : "crop"; }
inline BPolicy b_policy_from(const std::string& s) {
  if (s == "zero") return BPolicy::zero;
  if (s == "full_model_loss") return BPolicy::full_model_loss;
  throw ConfigError("unknown b_policy: " + s);
}
inline AblationKind ablation_from(const std::string& s) {
  if (s == "drop") return AblationKind::drop;
  if (s == "crop") return AblationKind::crop;
  throw ConfigError("unknown ablation step: " + s);
}

struct TrainConfig {
  int c = 0;
  double p = 0.1;
  BPolicy b_policy = BPolicy::zero;
  std::vector<AblationKind> schedule;
  Strategy strategy = Strategy::cmp;
  double lr = 0.1;
  int batch_size = 16;
  int epochs = 1;
  std::uint64_t seed = 42;
  TaskKind task = TaskKind::classification;
  int eval_every = 0;  // optimizer steps between eval snapshots; 0 = final only

  // extensions, all off by default
  double momentum = 0.0;
  bool early_stop = false;
  bool batch_mean_hinge = false;  // hinge over batch-mean losses instead of per sample
  int prf_depth = -1;             // ranking: feedback depth of the full input; -1 = all
  bool prf_depth_jitter = false;  // ranking: uniform depth in [0, prf_depth] per visit

  void validate() const {
    if (c < 0) throw ConfigError("c must be >= 0");
    if (static_cast<int>(schedule.size()) != c)
      throw ConfigError("schedule length " + std::to_string(schedule.size()) +
                        " does not match c=" + std::to_string(c));
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("p must be in (0,1)");
    if (strategy == Strategy::second && c < 1)
      throw ConfigError("strategy 'second' requires c >= 1");
    if (batch_size < 1 || epochs < 1) throw ConfigError("batch_size and epochs must be positive");
    if (lr <= 0.0) throw ConfigError("lr must be positive");
    if (batch_mean_hinge)
      for (auto k : schedule)
        if (k == AblationKind::crop)
          throw ConfigError("batch_mean_hinge supports drop-only schedules");
  }
};

inline nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["c"] = c.c;
  j["p"] = c.p;
  j["b_policy"] = to_string(c.b_policy);
  std::vector<std::string> sched;
  for (auto k : c.schedule) sched.push_back(to_string(k));
  j["schedule"] = sched;
  j["strategy"] = to_string(c.strategy);
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["task"] = to_string(c.task);
  j["eval_every"] = c.eval_every;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.c = j.at("c").get<int>();
  c.p = j.at("p").get<double>();
  c.b_policy = b_policy_from(j.at("b_policy").get<std::string>());
  for (const auto& s : j.at("schedule")) c.schedule.push_back(ablation_from(s.get<std::string>()));
  c.strategy = strategy_from(j.at("strategy").get<std::string>());
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.task = task_kind_from(j.at("task").get<std::string>());
  c.eval_every = j.at("eval_every").get<int>();
  if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
  if (j.contains("early_stop")) c.early_stop = j.at("early_stop").get<bool>();
  if (j.contains("batch_mean_hinge")) c.batch_mean_hinge = j.at("batch_mean_hinge").get<bool>();
  if (j.contains("prf_depth")) c.prf_depth = j.at("prf_depth").get<int>();
  if (j.contains("prf_depth_jitter")) c.prf_depth_jitter = j.at("prf_depth_jitter").get<bool>();
  c.validate();
  return c;
}

struct StepRecord {
  long step = 0;
  long sample_id = 0;
  std::vector<double> losses;  // realized l(0..c')
  double b = 0.0;
  std::vector<int> alpha;  // dynamic weights over the realized real models
  double cmp_loss = 0.0;
  int fwd_count = 0;
  bool shortened = false;
};

struct EvalRecord {
  long step = 0;
  std::string metric;
  double value = 0.0;
  std::optional<int> context_size;
};

struct RunRecord {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  long total_forwards = 0;
  double flops_actual = 0.0;
  double flops_baseline = 0.0;  // one forward per sample visit at full context

  double flops_ratio() const {
    return flops_baseline > 0.0 ? flops_actual / flops_baseline : 0.0;
  }

  void write_steps_csv(const std::string& path, int c_max,
                       const std::string& header_comment = "") const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "step,sample_id";
    for (int i = 0; i <= c_max; ++i) out << ",l_" << i;
    out << ",b";
    for (int i = 0; i <= c_max; ++i) out << ",alpha_" << i;
    out << ",cmp_loss,fwd_count\n";
    char buf[64];
    auto fmt = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      return std::string(buf);
    };
    for (const auto& r : steps) {
      out << r.step << "," << r.sample_id;
      for (int i = 0; i <= c_max; ++i)
        out << "," << (i < static_cast<int>(r.losses.size()) ? fmt(r.losses[static_cast<size_t>(i)]) : "");
      out << "," << fmt(r.b);
      for (int i = 0; i <= c_max; ++i)
        out << "," << (i < static_cast<int>(r.alpha.size()) ? std::to_string(r.alpha[static_cast<size_t>(i)]) : "");
      out << "," << fmt(r.cmp_loss) << "," << r.fwd_count << "\n";
    }
  }

  void write_eval_csv(const std::string& path, const std::string& header_comment = "") const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "step,metric_name,metric_value,context_size\n";
    char buf[64];
    for (const auto& r : evals) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.value);
      out << r.step << "," << r.metric << "," << buf << ",";
      if (r.context_size) out << *r.context_size;
      out << "\n";
    }
  }
};

// ---- sgd ---------------------------------------------------------------------

inline void sgd_update(ModelParams& params, const std::map<std::string, Tensor>& grads,
                       double lr) {
  for (auto& [name, t] : params.tensors) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& grad = it->second;
    require_same_shape(t, grad, "sgd_update");
    if (!grad.all_finite()) throw NumericError("sgd_update: non-finite gradient for " + name);
    for (int i = 0; i < t.size(); ++i) t[i] -= lr * grad[i];
  }
}

// ---- chain construction --------------------------------------------------------

struct SampleView {
  const SegmentedContext* ctx = nullptr;
  const RankPool* pool = nullptr;
  long id = 0;
};

inline SampleView sample_view(const Dataset& ds, size_t i) {
  SampleView v;
  v.id = static_cast<long>(i);
  if (ds.task == TaskKind::ranking)
    v.pool = &ds.pools[i];
  else
    v.ctx = &ds.samples[i];
  return v;
}

struct ChainResult {
  std::vector<NodeId> losses;
  double b = 0.0;
  NodeId objective = -1;
  int forwards = 0;
  bool shortened = false;
  std::vector<int> alpha;   // over realized real models
  double cmp_value = 0.0;   // hinge-form value of the realized chain
  double flops = 0.0;
};

namespace detail {

constexpr std::uint64_t kShuffleTag = 0x73687566666c6531ULL;
constexpr std::uint64_t kChainTag = 0x636861696e737431ULL;
constexpr std::uint64_t kOvrTag = 0x6f7672636861696eULL;

inline NodeId fold_mean(Graph& g, const std::vector<NodeId>& xs) {
  NodeId total = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) total = add(g, total, xs[i]);
  return xs.size() > 1 ? scale(g, total, 1.0 / static_cast<double>(xs.size())) : total;
}

}  // namespace detail

// Builds one sample's ablation chain into the graph: x(0) is the full
// input, each schedule entry either extends the mask chain (input kept) or
// the crop chain (parameters kept), and every stage contributes one
// task-specific loss. A crop step with nothing left to remove is skipped
// and flagged rather than aborting.
inline ChainResult build_chain(Graph& g, const ParamNodes& pn, const ModelConfig& mcfg,
                               const TrainConfig& tcfg, const SampleView& sample,
                               RngStream& rng, bool with_objective = true) {
  ChainResult res;

  int depth0 = 0;
  std::optional<CropChain> crop;
  if (sample.pool) {
    int avail = static_cast<int>(sample.pool->feedback_order.size());
    depth0 = tcfg.prf_depth < 0 ? avail : std::min(tcfg.prf_depth, avail);
    if (tcfg.prf_depth_jitter) depth0 = rng.next_int(depth0 + 1);
    crop.emplace(rank_support_flags(depth0));
  } else {
    crop.emplace(sample.ctx->support_flags());
  }
  MaskChain masks(mask_sites_for(mcfg), tcfg.p);

  auto run_forward = [&](void) -> NodeId {
    const auto& retained = crop->retained(crop->steps());
    ModelInput in = sample.pool ? make_input(*sample.pool, retained, depth0)
                                : make_input(*sample.ctx, retained);
    SiteMasks sm;
    const SiteMasks* mp = nullptr;
    if (masks.steps() > 0) {
      sm = masks.masks_for_step(masks.steps());
      mp = &sm;
    }
    ForwardOut out = forward(g, mcfg, pn, in, mp);
    res.flops += flops_estimate(mcfg, in.length());
    TaskTarget target = sample.pool ? make_target(*sample.pool)
                                    : make_target(tcfg.task, *sample.ctx, retained);
    return task_loss(g, tcfg.task, out, target);
  };

  res.losses.push_back(run_forward());
  for (int i = 0; i < tcfg.c; ++i) {
    if (tcfg.schedule[static_cast<size_t>(i)] == AblationKind::drop) {
      masks = drop_step(masks, rng);
    } else {
      try {
        *crop = crop_step(*crop, rng);
      } catch (const NoCroppableSegments&) {
        res.shortened = true;
        continue;
      }
    }
    res.losses.push_back(run_forward());
  }
  res.forwards = static_cast<int>(res.losses.size());

  ComparisonChain values;
  for (NodeId l : res.losses) values.losses.push_back(g.value(l)[0]);
  values.b = tcfg.b_policy == BPolicy::zero ? 0.0 : values.losses[0];
  res.b = values.b;
  res.cmp_value = comparative_loss(values);
  auto alpha_full = dynamic_weights(values);
  res.alpha.assign(alpha_full.begin(), alpha_full.end() - 1);
  if (with_objective) res.objective = strategy_loss_node(g, tcfg.strategy, res.losses, values.b);
  return res;
}

// Deterministic per-epoch visit order; exposed so reference trainers can
// replay the exact schedule.
inline std::vector<size_t> epoch_order(std::uint64_t seed, int epoch, size_t n) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  RngStream rng = RngStream::derive(seed, detail::kShuffleTag + static_cast<std::uint64_t>(epoch));
  rng.shuffle(order);
  return order;
}

// Chain randomness for one (optimizer step, sample) visit.
inline RngStream chain_stream(std::uint64_t seed, long step, long sample_id) {
  return RngStream::derive(seed, detail::kChainTag ^
                                     ((static_cast<std::uint64_t>(step) << 24) +
                                      static_cast<std::uint64_t>(sample_id)));
}

// ---- evaluation ----------------------------------------------------------------

struct EvalResult {
  std::map<std::string, double> metrics;
  std::vector<double> per_query;  // primary metric per sample
};

inline std::string primary_metric(TaskKind task) {
  switch (task) {
    case TaskKind::classification: return "accuracy";
    case TaskKind::extraction: return "f1";
    default: return "mrr@10";
  }
}

// Full-model evaluation (no masks). context_size truncates the non-support
// context: segment tasks keep the first `context_size` non-support segments,
// ranking uses it as the feedback depth.
inline EvalResult evaluate(const ModelParams& params, const Dataset& ds,
                           std::optional<int> context_size = std::nullopt) {
  const ModelConfig& mcfg = params.config;
  EvalResult res;
  std::vector<Prediction> preds;
  std::vector<GoldLabel> golds;
  for (size_t i = 0; i < ds.size(); ++i) {
    Graph g;
    ParamNodes pn = register_params(g, params);
    Prediction pred;
    GoldLabel gold;
    if (ds.task == TaskKind::ranking) {
      const RankPool& pool = ds.pools[i];
      int avail = static_cast<int>(pool.feedback_order.size());
      int depth = context_size ? std::min(*context_size, avail) : avail;
      std::vector<int> retained(static_cast<size_t>(depth) + 1);
      for (int r = 0; r <= depth; ++r) retained[static_cast<size_t>(r)] = r;
      ForwardOut out = forward(g, mcfg, pn, make_input(pool, retained, depth), nullptr);
      const Tensor& q = g.value(out.query);
      std::vector<std::pair<double, int>> scored;
      for (size_t d = 0; d < pool.docs.size(); ++d) {
        Tensor doc({static_cast<int>(pool.docs[d].size())});
        for (int j = 0; j < doc.size(); ++j) doc[j] = pool.docs[d][static_cast<size_t>(j)];
        scored.push_back({rank_score(q, doc), static_cast<int>(d)});
      }
      std::stable_sort(scored.begin(), scored.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      for (const auto& [_, id] : scored) pred.ranked.push_back(id);
      gold.positive = pool.positive;
      double rr = 0.0;
      for (size_t r = 0; r < pred.ranked.size(); ++r)
        if (pred.ranked[r] == gold.positive) {
          rr = 1.0 / (static_cast<double>(r) + 1.0);
          break;
        }
      res.per_query.push_back(rr);
    } else {
      const SegmentedContext& ctx = ds.samples[i];
      std::vector<int> retained;
      int noise_kept = 0;
      for (size_t s = 0; s < ctx.segments.size(); ++s) {
        if (ctx.segments[s].support) {
          retained.push_back(static_cast<int>(s));
        } else if (!context_size || noise_kept < *context_size) {
          retained.push_back(static_cast<int>(s));
          ++noise_kept;
        }
      }
      ForwardOut out = forward(g, mcfg, pn, make_input(ctx, retained), nullptr);
      if (ds.task == TaskKind::classification) {
        const Tensor& logits = g.value(out.logits);
        int best = 0;
        for (int j = 1; j < logits.size(); ++j)
          if (logits[j] > logits[best]) best = j;
        pred.cls = best;
        gold.cls = ctx.label_class;
        res.per_query.push_back(pred.cls == gold.cls ? 1.0 : 0.0);
      } else {
        TaskTarget target = make_target(ds.task, ctx, retained);
        const Tensor& sl = g.value(out.start_logits);
        const Tensor& el = g.value(out.end_logits);
        int bs = 0, be = 0;
        for (int j = 1; j < sl.size(); ++j)
          if (sl[j] > sl[bs]) bs = j;
        for (int j = 1; j < el.size(); ++j)
          if (el[j] > el[be]) be = j;
        pred.start = bs;
        pred.end = be;
        gold.start = target.start;
        gold.end = target.end;
        std::vector<Prediction> p1{pred};
        std::vector<GoldLabel> g1{gold};
        res.per_query.push_back(metrics(TaskKind::extraction, p1, g1).at("f1"));
      }
    }
    preds.push_back(std::move(pred));
    golds.push_back(std::move(gold));
  }
  res.metrics = metrics(ds.task, preds, golds);
  return res;
}

// Fraction of (sample, chain, pair i<j) whose losses violate the expected
// non-decreasing order along the ablation chain.
inline double order_violation_rate(const ModelParams& params, const Dataset& ds,
                                   const TrainConfig& cfg, int n_chains) {
  if (cfg.c < 1) throw ContractError("order_violation_rate: schedule has no pairs (c=0)");
  if (n_chains < 1) throw ContractError("order_violation_rate: n_chains must be >= 1");
  long violations = 0, pairs = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    for (int ch = 0; ch < n_chains; ++ch) {
      Graph g;
      ParamNodes pn = register_params(g, params);
      RngStream rng = RngStream::derive(cfg.seed, detail::kOvrTag ^
                                                      (static_cast<std::uint64_t>(i) * 1000003ULL +
                                                       static_cast<std::uint64_t>(ch)));
      ChainResult chain = build_chain(g, pn, params.config, cfg, sample_view(ds, i), rng,
                                      /*with_objective=*/false);
      std::vector<double> l;
      for (NodeId n : chain.losses) l.push_back(g.value(n)[0]);
      for (size_t a = 0; a < l.size(); ++a)
        for (size_t b = a + 1; b < l.size(); ++b) {
          ++pairs;
          if (l[a] > l[b]) ++violations;
        }
    }
  }
  if (pairs == 0) throw ContractError("order_violation_rate: no comparable pairs realized");
  return static_cast<double>(violations) / static_cast<double>(pairs);
}

// (improved - degraded) / |Q| between per-query metrics at feedback depth k
// and k-1. Ties count neither.
inline double robustness_index(const std::vector<double>& with_k,
                               const std::vector<double>& with_k_minus_1) {
  if (with_k.empty()) throw ContractError("robustness_index: empty query set");
  if (with_k.size() != with_k_minus_1.size())
    throw ContractError("robustness_index: query sets not aligned");
  long up = 0, down = 0;
  for (size_t i = 0; i < with_k.size(); ++i) {
    if (with_k[i] > with_k_minus_1[i]) ++up;
    else if (with_k[i] < with_k_minus_1[i]) ++down;
  }
  return static_cast<double>(up - down) / static_cast<double>(with_k.size());
}

// ---- training loop ---------------------------------------------------------------

struct TrainResult {
  ModelParams params;
  RunRecord record;
};

// One sample, one parameter update. The chain randomness comes from the
// caller so traces stay reproducible.
inline StepRecord train_step(ModelParams& params, const SampleView& sample,
                             const TrainConfig& cfg, RngStream& rng, long step_index = 0) {
  Graph g;
  ParamNodes pn = register_params(g, params);
  ChainResult chain = build_chain(g, pn, params.config, cfg, sample, rng);
  if (!std::isfinite(g.value(chain.objective)[0]))
    throw NumericError("train_step: non-finite objective");
  g.backward(chain.objective);
  std::map<std::string, Tensor> grads;
  for (const auto& [name, id] : pn.id) grads[name] = g.grad(id);
  sgd_update(params, grads, cfg.lr);

  StepRecord rec;
  rec.step = step_index;
  rec.sample_id = sample.id;
  for (NodeId l : chain.losses) rec.losses.push_back(g.value(l)[0]);
  rec.b = chain.b;
  rec.alpha = chain.alpha;
  rec.cmp_loss = chain.cmp_value;
  rec.fwd_count = chain.forwards;
  rec.shortened = chain.shortened;
  return rec;
}

inline void maybe_checkpoint(const ModelParams& params, const std::string& dir,
                             const std::string& name) {
  if (dir.empty()) return;
  std::ofstream out(dir + "/" + name, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint in " + dir);
  out << checkpoint_to_json(params).dump(2) << "\n";
}

inline TrainResult train(const TrainConfig& cfg, const ModelConfig& mcfg, const Dataset& data,
                         const Dataset* eval_data = nullptr, const std::string& out_dir = "") {
  cfg.validate();
  mcfg.validate();
  if (mcfg.task != cfg.task) throw ConfigError("model task does not match training task");
  if (data.task != cfg.task) throw ConfigError("dataset task does not match training task");
  bool wants_crop = false;
  for (auto k : cfg.schedule) wants_crop |= k == AblationKind::crop;
  if (wants_crop && cfg.task != TaskKind::ranking) {
    bool any_noise = false;
    for (const auto& s : data.samples)
      for (const auto& seg : s.segments) any_noise |= !seg.support;
    if (!any_noise) throw ConfigError("crop schedule on a dataset with no non-support segments");
  }

  TrainResult res;
  res.params = init_params(mcfg, cfg.seed);
  std::map<std::string, Tensor> velocity;
  if (cfg.momentum > 0.0)
    for (const auto& [name, t] : res.params.tensors) velocity[name] = Tensor(t.shape());

  const Dataset& eval_ds = eval_data ? *eval_data : data;
  long step = 0;
  double best_metric = -1.0;
  int evals_since_best = 0;
  const std::string primary = primary_metric(cfg.task);

  auto snapshot = [&](long at_step) {
    EvalResult ev = evaluate(res.params, eval_ds);
    for (const auto& [name, value] : ev.metrics)
      res.record.evals.push_back({at_step, name, value, std::nullopt});
    maybe_checkpoint(res.params, out_dir, "model.json");
    double m = ev.metrics.count(primary) ? ev.metrics.at(primary) : 0.0;
    if (m > best_metric) {
      best_metric = m;
      evals_since_best = 0;
    } else {
      ++evals_since_best;
    }
    return m;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = epoch_order(cfg.seed, epoch, data.size());
    for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch_size)) {
      size_t batch_end = std::min(order.size(), pos + static_cast<size_t>(cfg.batch_size));
      Graph g;
      ParamNodes pn = register_params(g, res.params);
      std::vector<NodeId> objectives;
      std::vector<ChainResult> chains;
      try {
        for (size_t bi = pos; bi < batch_end; ++bi) {
          SampleView sv = sample_view(data, order[bi]);
          RngStream rng = chain_stream(cfg.seed, step, sv.id);
          ChainResult chain =
              build_chain(g, pn, mcfg, cfg, sv, rng, /*with_objective=*/!cfg.batch_mean_hinge);
          res.record.total_forwards += chain.forwards;
          res.record.flops_actual += chain.flops;
          res.record.flops_baseline += chain.flops / chain.forwards;
          StepRecord rec;
          rec.step = step;
          rec.sample_id = sv.id;
          for (NodeId l : chain.losses) rec.losses.push_back(g.value(l)[0]);
          rec.b = chain.b;
          rec.alpha = chain.alpha;
          rec.cmp_loss = chain.cmp_value;
          rec.fwd_count = chain.forwards;
          rec.shortened = chain.shortened;
          res.record.steps.push_back(std::move(rec));
          if (!cfg.batch_mean_hinge) objectives.push_back(chain.objective);
          chains.push_back(std::move(chain));
        }

        NodeId batch_objective;
        if (cfg.batch_mean_hinge) {
          size_t len = chains[0].losses.size();
          std::vector<NodeId> mean_losses;
          for (size_t li = 0; li < len; ++li) {
            std::vector<NodeId> at;
            for (const auto& ch : chains) at.push_back(ch.losses[li]);
            mean_losses.push_back(detail::fold_mean(g, at));
          }
          double b = cfg.b_policy == BPolicy::zero ? 0.0 : g.value(mean_losses[0])[0];
          batch_objective = comparative_loss_node(g, mean_losses, b);
        } else {
          batch_objective = detail::fold_mean(g, objectives);
        }
        if (!std::isfinite(g.value(batch_objective)[0]))
          throw NumericError("training objective is not finite at step " + std::to_string(step));

        g.backward(batch_objective);
        std::map<std::string, Tensor> grads;
        for (const auto& [name, id] : pn.id) grads[name] = g.grad(id);
        if (cfg.momentum > 0.0) {
          for (auto& [name, v] : velocity) {
            const Tensor& grad = grads.at(name);
            if (!grad.all_finite()) throw NumericError("non-finite gradient for " + name);
            Tensor& t = res.params.tensors.at(name);
            for (int i = 0; i < v.size(); ++i) {
              v[i] = cfg.momentum * v[i] + grad[i];
              t[i] -= cfg.lr * v[i];
            }
          }
        } else {
          sgd_update(res.params, grads, cfg.lr);
        }
      } catch (const NumericError& e) {
        std::string ckpt = "";
        if (!out_dir.empty()) {
          maybe_checkpoint(res.params, out_dir, "abort.json");
          ckpt = out_dir + "/abort.json";
        }
        throw DivergenceError(std::string("training diverged: ") + e.what(), ckpt);
      }

      ++step;
      if (cfg.eval_every > 0 && step % cfg.eval_every == 0) {
        snapshot(step);
        if (cfg.early_stop && evals_since_best >= 3) {
          snapshot(step);
          return res;
        }
      }
    }
  }
  snapshot(step);
  return res;
}

}  // namespace cmplab
