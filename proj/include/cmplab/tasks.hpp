#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmplab/ablation.hpp"
#include "cmplab/errors.hpp"
#include "cmplab/models.hpp"
#include "cmplab/rng.hpp"

namespace cmplab {

struct Segment {
  std::vector<int> ids;
  bool support = false;
};

// Token span inside one segment; offsets are segment-relative and inclusive,
// so cropping other segments never invalidates the label.
struct Span {
  int segment = -1;
  int start = -1;
  int end = -1;
};

struct SegmentedContext {
  std::vector<Segment> segments;
  int label_class = -1;
  Span label_span;

  std::vector<bool> support_flags() const {
    std::vector<bool> f;
    f.reserve(segments.size());
    for (const auto& s : segments) f.push_back(s.support);
    return f;
  }

  void validate(TaskKind task, int vocab) const {
    bool any_support = false;
    for (const auto& s : segments) {
      any_support |= s.support;
      for (int id : s.ids)
        if (id < 0 || id >= vocab) throw ConfigError("token id out of vocabulary range");
    }
    if (!any_support) throw ConfigError("context needs at least one support segment");
    if (task == TaskKind::extraction) {
      const Span& sp = label_span;
      if (sp.segment < 0 || sp.segment >= static_cast<int>(segments.size()))
        throw ConfigError("span segment index out of range");
      const Segment& seg = segments[static_cast<size_t>(sp.segment)];
      if (!seg.support) throw ConfigError("span must lie inside a support segment");
      if (sp.start < 0 || sp.end < sp.start || sp.end >= static_cast<int>(seg.ids.size()))
        throw ConfigError("span offsets out of segment range");
    }
  }
};

// Per-query candidate pool: dense document vectors, one positive, and a
// feedback list ordered by the synthetic base retriever's score.
struct RankPool {
  std::vector<double> query;
  std::vector<std::vector<double>> docs;
  int positive = -1;
  std::vector<int> feedback_order;
};

struct Dataset {
  TaskKind task = TaskKind::classification;
  int vocab = 0;
  int dim = 0;
  std::vector<SegmentedContext> samples;
  std::vector<RankPool> pools;

  size_t size() const { return task == TaskKind::ranking ? pools.size() : samples.size(); }
};

// ---- generators -------------------------------------------------------------

namespace gen_detail {

constexpr int kClassTokens = 8;

// extraction vocabulary layout
constexpr int kClueToken = 1;
constexpr int kGoldStartLo = 4, kGoldStartHi = 20;
constexpr int kGoldEndLo = 20, kGoldEndHi = 36;
constexpr int kDecoyStartLo = 36, kDecoyStartHi = 52;
constexpr int kDecoyEndLo = 52, kDecoyEndHi = 68;
constexpr int kSpanFillerLo = 68;

inline std::vector<double> unit_normal(RngStream& rng, int dim) {
  std::vector<double> v(static_cast<size_t>(dim));
  double nsq = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    nsq += x * x;
  }
  double n = std::sqrt(nsq);
  for (auto& x : v) x /= n;
  return v;
}

inline std::vector<double> noisy(RngStream& rng, const std::vector<double>& base, double sigma) {
  std::vector<double> v(base.size());
  double nsq = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    v[i] = base[i] + sigma * rng.normal();
    nsq += v[i] * v[i];
  }
  double n = std::sqrt(nsq);
  for (auto& x : v) x /= n;
  return v;
}

inline double vdot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace gen_detail

// Support segments carry class-indicative tokens; noise segments carry
// class-uncorrelated tokens, a fraction of which (spurious_rate) mix in a
// weak correlation with a random class.
inline Dataset gen_classification(std::uint64_t seed, int n_samples, int n_classes, int n_support,
                                  int n_noise, int segment_len, int vocab,
                                  double spurious_rate = 0.1) {
  using namespace gen_detail;
  if (n_samples < 1 || n_classes < 2 || n_support < 1 || n_noise < 0 || segment_len < 1)
    throw ConfigError("gen_classification: invalid sizes");
  if (vocab < n_classes * kClassTokens + kClassTokens)
    throw ConfigError("gen_classification: vocab too small for " + std::to_string(n_classes) +
                      " classes");
  if (spurious_rate < 0.0 || spurious_rate > 1.0)
    throw ConfigError("gen_classification: spurious_rate outside [0,1]");

  Dataset ds;
  ds.task = TaskKind::classification;
  ds.vocab = vocab;
  int noise_lo = n_classes * kClassTokens;
  for (int s = 0; s < n_samples; ++s) {
    RngStream rng = RngStream::derive(seed, static_cast<std::uint64_t>(s));
    int label = rng.next_int(n_classes);
    SegmentedContext ctx;
    ctx.label_class = label;
    for (int i = 0; i < n_support; ++i) {
      Segment seg;
      seg.support = true;
      for (int t = 0; t < segment_len; ++t)
        seg.ids.push_back(label * kClassTokens + rng.next_int(kClassTokens));
      ctx.segments.push_back(std::move(seg));
    }
    for (int i = 0; i < n_noise; ++i) {
      Segment seg;
      seg.support = false;
      bool spurious = rng.bernoulli(spurious_rate);
      int fake_class = spurious ? rng.next_int(n_classes) : 0;
      for (int t = 0; t < segment_len; ++t) {
        if (spurious && rng.bernoulli(0.25))
          seg.ids.push_back(fake_class * kClassTokens + rng.next_int(kClassTokens));
        else
          seg.ids.push_back(noise_lo + rng.next_int(vocab - noise_lo));
      }
      ctx.segments.push_back(std::move(seg));
    }
    rng.shuffle(ctx.segments);
    ctx.validate(ds.task, vocab);
    ds.samples.push_back(std::move(ctx));
  }
  return ds;
}

// Two support segments (a clue segment and the gold segment holding a
// two-token answer span) plus distractors with decoy near-miss spans.
inline Dataset gen_extraction(std::uint64_t seed, int n_samples, int n_distractors,
                              int segment_len, int vocab) {
  using namespace gen_detail;
  if (n_samples < 1 || n_distractors < 0 || segment_len < 3)
    throw ConfigError("gen_extraction: invalid sizes (segment_len must be >= 3)");
  if (vocab < kSpanFillerLo + 8) throw ConfigError("gen_extraction: vocab too small");

  Dataset ds;
  ds.task = TaskKind::extraction;
  ds.vocab = vocab;
  for (int s = 0; s < n_samples; ++s) {
    RngStream rng = RngStream::derive(seed, static_cast<std::uint64_t>(s));
    auto filler = [&] { return kSpanFillerLo + rng.next_int(vocab - kSpanFillerLo); };

    Segment clue;
    clue.support = true;
    for (int t = 0; t < segment_len; ++t) clue.ids.push_back(filler());
    clue.ids[static_cast<size_t>(rng.next_int(segment_len))] = kClueToken;

    Segment gold;
    gold.support = true;
    for (int t = 0; t < segment_len; ++t) gold.ids.push_back(filler());
    int offset = rng.next_int(segment_len - 1);
    gold.ids[static_cast<size_t>(offset)] = kGoldStartLo + rng.next_int(kGoldStartHi - kGoldStartLo);
    gold.ids[static_cast<size_t>(offset) + 1] = kGoldEndLo + rng.next_int(kGoldEndHi - kGoldEndLo);

    std::vector<Segment> segs;
    segs.push_back(std::move(clue));
    segs.push_back(std::move(gold));
    for (int i = 0; i < n_distractors; ++i) {
      Segment d;
      d.support = false;
      for (int t = 0; t < segment_len; ++t) d.ids.push_back(filler());
      int o = rng.next_int(segment_len - 1);
      d.ids[static_cast<size_t>(o)] = kDecoyStartLo + rng.next_int(kDecoyStartHi - kDecoyStartLo);
      d.ids[static_cast<size_t>(o) + 1] = kDecoyEndLo + rng.next_int(kDecoyEndHi - kDecoyEndLo);
      segs.push_back(std::move(d));
    }

    // shuffle segment order, tracking where the gold segment lands
    std::vector<int> order(segs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    SegmentedContext ctx;
    int gold_at = -1;
    for (size_t i = 0; i < order.size(); ++i) {
      if (order[i] == 1) gold_at = static_cast<int>(i);
      ctx.segments.push_back(std::move(segs[static_cast<size_t>(order[i])]));
    }
    ctx.label_span = {gold_at, offset, offset + 1};
    ctx.validate(ds.task, vocab);
    ds.samples.push_back(std::move(ctx));
  }
  return ds;
}

// Per-query pools whose positive is recoverable by averaging the query with
// the relevant feedback vectors. Feedback mixes relevant docs with off-topic
// ones, half of which sit near a shared confuser topic so that naive
// averaging drifts away from the true topic.
inline Dataset gen_ranking(std::uint64_t seed, int n_queries, int pool_size, int n_feedback,
                           int dim) {
  using namespace gen_detail;
  if (n_queries < 1 || pool_size < 2 || n_feedback < 1 || dim < 2)
    throw ConfigError("gen_ranking: invalid sizes");
  if (n_feedback > pool_size) throw ConfigError("gen_ranking: n_feedback exceeds pool size");

  Dataset ds;
  ds.task = TaskKind::ranking;
  ds.dim = dim;
  for (int qi = 0; qi < n_queries; ++qi) {
    RngStream rng = RngStream::derive(seed, static_cast<std::uint64_t>(qi));
    for (int attempt = 0; attempt < 200; ++attempt) {
      // relevant docs are noisy copies of the topic, so the base retriever
      // surfaces them early and each adds information; off-topic docs
      // cluster around a confuser direction that rewards drift
      int n_rel = std::min(pool_size - 1, n_feedback / 2 + 1);
      auto topic = unit_normal(rng, dim);
      auto confuser = unit_normal(rng, dim);

      RankPool pool;
      pool.query = noisy(rng, topic, 1.0);

      std::vector<bool> relevant;
      pool.docs.push_back(noisy(rng, topic, 0.2));  // positive
      relevant.push_back(true);
      for (int i = 0; i < n_rel; ++i) {
        pool.docs.push_back(noisy(rng, topic, 0.45));
        relevant.push_back(true);
      }
      while (static_cast<int>(pool.docs.size()) < pool_size) {
        pool.docs.push_back(noisy(rng, confuser, 0.3));
        relevant.push_back(false);
      }
      std::vector<int> perm(pool.docs.size());
      for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
      rng.shuffle(perm);
      std::vector<std::vector<double>> docs(pool.docs.size());
      std::vector<bool> rel(pool.docs.size());
      for (size_t i = 0; i < perm.size(); ++i) {
        docs[i] = std::move(pool.docs[static_cast<size_t>(perm[i])]);
        rel[i] = relevant[static_cast<size_t>(perm[i])];
        if (perm[i] == 0) pool.positive = static_cast<int>(i);
      }
      pool.docs = std::move(docs);

      pool.feedback_order.resize(pool.docs.size());
      for (size_t i = 0; i < pool.docs.size(); ++i) pool.feedback_order[i] = static_cast<int>(i);
      std::stable_sort(pool.feedback_order.begin(), pool.feedback_order.end(),
                       [&](int a, int b) {
                         return vdot(pool.query, pool.docs[static_cast<size_t>(a)]) >
                                vdot(pool.query, pool.docs[static_cast<size_t>(b)]);
                       });

      // averaging oracle: query + relevant docs among the top feedback
      std::vector<double> probe = pool.query;
      int used = 0;
      for (int i = 0; i < n_feedback; ++i) {
        int doc = pool.feedback_order[static_cast<size_t>(i)];
        if (rel[static_cast<size_t>(doc)]) {
          for (int j = 0; j < dim; ++j) probe[static_cast<size_t>(j)] += pool.docs[static_cast<size_t>(doc)][static_cast<size_t>(j)];
          ++used;
        }
      }
      if (used > 0) {
        int best = 0;
        for (size_t i = 1; i < pool.docs.size(); ++i)
          if (vdot(probe, pool.docs[i]) > vdot(probe, pool.docs[static_cast<size_t>(best)]))
            best = static_cast<int>(i);
        if (best == pool.positive) {
          ds.pools.push_back(std::move(pool));
          break;
        }
      }
      if (attempt == 199) throw ConfigError("gen_ranking: could not satisfy the feedback oracle");
    }
  }
  return ds;
}

// ---- model input assembly -----------------------------------------------------

inline ModelInput make_input(const SegmentedContext& ctx, const std::vector<int>& retained) {
  ModelInput in;
  in.token_mode = true;
  for (int idx : retained) {
    const auto& ids = ctx.segments[static_cast<size_t>(idx)].ids;
    in.tokens.insert(in.tokens.end(), ids.begin(), ids.end());
  }
  return in;
}

// Rows are the query followed by the retained feedback documents, in
// base-retriever order. Row indices: 0 = query (support), i >= 1 = the
// (i-1)-th feedback document. A trailing indicator column marks the query
// row so the model can tell it apart from feedback; the feature width seen
// by the model is therefore dim + 1.
inline ModelInput make_input(const RankPool& pool, const std::vector<int>& retained_rows,
                             int depth) {
  ModelInput in;
  in.token_mode = false;
  int dim = static_cast<int>(pool.query.size());
  in.features = Tensor({static_cast<int>(retained_rows.size()), dim + 1});
  int r = 0;
  for (int row : retained_rows) {
    const std::vector<double>& src =
        row == 0 ? pool.query
                 : pool.docs[static_cast<size_t>(pool.feedback_order[static_cast<size_t>(row - 1)])];
    for (int j = 0; j < dim; ++j) in.features.at(r, j) = src[static_cast<size_t>(j)];
    in.features.at(r, dim) = row == 0 ? 1.0 : 0.0;
    ++r;
  }
  (void)depth;
  return in;
}

inline std::vector<bool> rank_support_flags(int depth) {
  std::vector<bool> f(static_cast<size_t>(depth) + 1, false);
  f[0] = true;  // the query row is the minimal support context
  return f;
}

// Global training targets for the retained input.
struct TaskTarget {
  int cls = -1;
  int start = -1;
  int end = -1;
  int positive = -1;
  Tensor docs;  // ranking candidates, [pool, dim]
};

inline TaskTarget make_target(TaskKind task, const SegmentedContext& ctx,
                              const std::vector<int>& retained) {
  TaskTarget t;
  if (task == TaskKind::classification) {
    t.cls = ctx.label_class;
    return t;
  }
  int base = 0;
  for (int idx : retained) {
    if (idx == ctx.label_span.segment) {
      t.start = base + ctx.label_span.start;
      t.end = base + ctx.label_span.end;
      return t;
    }
    base += static_cast<int>(ctx.segments[static_cast<size_t>(idx)].ids.size());
  }
  throw ContractError("gold span segment missing from retained set");
}

inline TaskTarget make_target(const RankPool& pool) {
  TaskTarget t;
  t.positive = pool.positive;
  int dim = static_cast<int>(pool.query.size());
  t.docs = Tensor({static_cast<int>(pool.docs.size()), dim});
  for (size_t i = 0; i < pool.docs.size(); ++i)
    for (int j = 0; j < dim; ++j) t.docs.at(static_cast<int>(i), j) = pool.docs[i][static_cast<size_t>(j)];
  return t;
}

// ---- task losses -------------------------------------------------------------

inline NodeId task_loss(Graph& g, TaskKind task, const ForwardOut& out, const TaskTarget& target) {
  switch (task) {
    case TaskKind::classification: {
      if (out.logits < 0) throw ContractError("task_loss: classification head missing");
      if (target.cls < 0 || target.cls >= g.value(out.logits).size())
        throw ContractError("task_loss: class label inconsistent with logits");
      return softmax_cross_entropy(g, out.logits, target.cls);
    }
    case TaskKind::extraction: {
      if (out.start_logits < 0 || out.end_logits < 0)
        throw ContractError("task_loss: extraction heads missing");
      int L = g.value(out.start_logits).size();
      if (target.start < 0 || target.start >= L || target.end < 0 || target.end >= L)
        throw ContractError("task_loss: span positions inconsistent with outputs");
      NodeId s = softmax_cross_entropy(g, out.start_logits, target.start);
      NodeId e = softmax_cross_entropy(g, out.end_logits, target.end);
      return scale(g, add(g, s, e), 0.5);
    }
    case TaskKind::ranking: {
      if (out.query < 0) throw ContractError("task_loss: ranking head missing");
      if (target.positive < 0 || target.positive >= target.docs.rows())
        throw ContractError("task_loss: positive id inconsistent with pool");
      NodeId sims = matmul_nt(g, out.query, g.input(target.docs));
      return softmax_cross_entropy(g, sims, target.positive);
    }
  }
  throw ContractError("task_loss: unknown task");
}

// ---- metrics -----------------------------------------------------------------

struct Prediction {
  int cls = -1;
  int start = -1;
  int end = -1;
  std::vector<int> ranked;  // doc ids, best first
};

struct GoldLabel {
  int cls = -1;
  int start = -1;
  int end = -1;
  int positive = -1;
};

inline std::map<std::string, double> metrics(TaskKind task, const std::vector<Prediction>& preds,
                                             const std::vector<GoldLabel>& golds, int k = 10) {
  if (preds.empty()) throw ContractError("metrics: empty input");
  if (preds.size() != golds.size()) throw ContractError("metrics: prediction/label length mismatch");
  std::map<std::string, double> m;
  double n = static_cast<double>(preds.size());
  switch (task) {
    case TaskKind::classification: {
      double acc = 0.0;
      for (size_t i = 0; i < preds.size(); ++i) acc += preds[i].cls == golds[i].cls ? 1.0 : 0.0;
      m["accuracy"] = acc / n;
      break;
    }
    case TaskKind::extraction: {
      double em = 0.0, f1 = 0.0;
      for (size_t i = 0; i < preds.size(); ++i) {
        const auto& p = preds[i];
        const auto& gld = golds[i];
        em += (p.start == gld.start && p.end == gld.end) ? 1.0 : 0.0;
        int plen = p.end >= p.start ? p.end - p.start + 1 : 0;
        int glen = gld.end - gld.start + 1;
        int ov = 0;
        if (plen > 0)
          ov = std::max(0, std::min(p.end, gld.end) - std::max(p.start, gld.start) + 1);
        if (ov > 0) {
          double prec = static_cast<double>(ov) / plen;
          double rec = static_cast<double>(ov) / glen;
          f1 += 2.0 * prec * rec / (prec + rec);
        }
      }
      m["em"] = em / n;
      m["f1"] = f1 / n;
      break;
    }
    case TaskKind::ranking: {
      double mrr = 0.0, recall = 0.0;
      for (size_t i = 0; i < preds.size(); ++i) {
        int rank = 0;
        for (size_t r = 0; r < preds[i].ranked.size(); ++r)
          if (preds[i].ranked[r] == golds[i].positive) {
            rank = static_cast<int>(r) + 1;
            break;
          }
        if (rank > 0 && rank <= k) {
          mrr += 1.0 / rank;
          recall += 1.0;
        }
      }
      m["mrr@" + std::to_string(k)] = mrr / n;
      m["recall@" + std::to_string(k)] = recall / n;
      break;
    }
  }
  return m;
}

// ---- jsonl io ----------------------------------------------------------------

inline nlohmann::ordered_json sample_to_json(const Dataset& ds, size_t i) {
  nlohmann::ordered_json j;
  if (ds.task == TaskKind::ranking) {
    const RankPool& p = ds.pools[i];
    j["query"] = p.query;
    j["docs"] = p.docs;
    j["positive"] = p.positive;
    j["feedback_order"] = p.feedback_order;
    return j;
  }
  const SegmentedContext& ctx = ds.samples[i];
  j["task"] = to_string(ds.task);
  nlohmann::ordered_json segs = nlohmann::ordered_json::array();
  for (const auto& s : ctx.segments) {
    nlohmann::ordered_json seg;
    seg["ids"] = s.ids;
    seg["support"] = s.support;
    segs.push_back(std::move(seg));
  }
  j["segments"] = std::move(segs);
  if (ds.task == TaskKind::classification) {
    j["label"] = ctx.label_class;
  } else {
    nlohmann::ordered_json span;
    span["segment"] = ctx.label_span.segment;
    span["start"] = ctx.label_span.start;
    span["end"] = ctx.label_span.end;
    j["label"] = std::move(span);
  }
  j["meta"] = nlohmann::ordered_json{{"vocab", ds.vocab}};
  return j;
}

inline void write_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  for (size_t i = 0; i < ds.size(); ++i) out << sample_to_json(ds, i).dump() << "\n";
}

inline Dataset read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset: " + path);
  Dataset ds;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (j.contains("query")) {
      if (first) ds.task = TaskKind::ranking;
      RankPool p;
      p.query = j.at("query").get<std::vector<double>>();
      p.docs = j.at("docs").get<std::vector<std::vector<double>>>();
      p.positive = j.at("positive").get<int>();
      p.feedback_order = j.at("feedback_order").get<std::vector<int>>();
      ds.dim = static_cast<int>(p.query.size());
      ds.pools.push_back(std::move(p));
    } else {
      if (first) ds.task = task_kind_from(j.at("task").get<std::string>());
      SegmentedContext ctx;
      for (const auto& seg : j.at("segments")) {
        Segment s;
        s.ids = seg.at("ids").get<std::vector<int>>();
        s.support = seg.at("support").get<bool>();
        ctx.segments.push_back(std::move(s));
      }
      if (ds.task == TaskKind::classification) {
        ctx.label_class = j.at("label").get<int>();
      } else {
        const auto& sp = j.at("label");
        ctx.label_span = {sp.at("segment").get<int>(), sp.at("start").get<int>(),
                          sp.at("end").get<int>()};
      }
      if (j.contains("meta") && j.at("meta").contains("vocab"))
        ds.vocab = j.at("meta").at("vocab").get<int>();
      ds.samples.push_back(std::move(ctx));
    }
    first = false;
  }
  if (ds.size() == 0) throw ConfigError("dataset is empty: " + path);
  return ds;
}

}  // namespace cmplab
