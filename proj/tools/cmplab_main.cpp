// cmplab: synthetic-task training harness around the comparative loss.
// Subcommands: gen, train, eval, compare, sweep. Exit codes: 0 success,
// 2 usage/config error, 3 numeric failure.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmplab/cmplab.hpp"

namespace fs = std::filesystem;
using namespace cmplab;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read back " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<int> split_ints(const std::string& csv) {
  std::vector<int> out;
  for (const auto& s : split_list(csv)) out.push_back(std::stoi(s));
  return out;
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return nlohmann::json::parse(in);
}

int dataset_classes(const Dataset& ds) {
  int k = 0;
  for (const auto& s : ds.samples) k = std::max(k, s.label_class + 1);
  return k;
}

// Model shape from the optional "model" block of the config, otherwise a
// small default sized from the dataset.
ModelConfig resolve_model(const nlohmann::json& cfg_json, const TrainConfig& tc,
                          const Dataset& ds) {
  ModelConfig mc;
  if (cfg_json.contains("model")) {
    const auto& m = cfg_json.at("model");
    mc.kind = model_kind_from(m.value("kind", tc.task == TaskKind::classification
                                                   ? std::string("mlp")
                                                   : std::string("encoder")));
    mc.dims = m.at("dims").get<std::vector<int>>();
    mc.vocab = m.value("vocab", ds.vocab);
    mc.out_dim = m.value("out_dim", 0);
    mc.feature_dim = m.value("feature_dim", ds.dim);
  } else {
    switch (tc.task) {
      case TaskKind::classification:
        mc.kind = ModelKind::mlp;
        mc.dims = {16, 32, dataset_classes(ds)};
        mc.vocab = ds.vocab;
        break;
      case TaskKind::extraction:
        mc.kind = ModelKind::encoder;
        mc.dims = {16, 32};
        mc.vocab = ds.vocab;
        break;
      case TaskKind::ranking:
        mc.kind = ModelKind::encoder;
        mc.dims = {16, 32};
        mc.vocab = 0;
        mc.feature_dim = ds.dim;
        mc.out_dim = ds.dim;
        break;
    }
  }
  mc.task = tc.task;
  if (mc.task == TaskKind::classification && mc.kind == ModelKind::encoder && mc.out_dim == 0)
    mc.out_dim = dataset_classes(ds);
  mc.validate();
  return mc;
}

struct GenArgs {
  std::string task = "cls";
  std::uint64_t seed = 42;
  int n = 100;
  std::string out;
  bool quiet = false;
  int classes = 4;
  int support_segments = 1;
  int noise_segments = 6;
  int segment_len = 8;
  int vocab = 64;
  double spurious_rate = 0.1;
  int distractors = 8;
  int pool = 8;
  int feedback = 5;
  int dim = 16;
};

int cmd_gen(const GenArgs& a) {
  Dataset ds;
  if (a.task == "cls") {
    ds = gen_classification(a.seed, a.n, a.classes, a.support_segments, a.noise_segments,
                            a.segment_len, a.vocab, a.spurious_rate);
  } else if (a.task == "span") {
    int vocab = std::max(a.vocab, 96);
    ds = gen_extraction(a.seed, a.n, a.distractors, a.segment_len, vocab);
  } else if (a.task == "rank") {
    ds = gen_ranking(a.seed, a.n, a.pool, a.feedback, a.dim);
  } else {
    throw ConfigError("unknown task: " + a.task);
  }
  write_jsonl(ds, a.out);
  if (!a.quiet)
    std::printf("wrote %zu samples to %s (digest %016llx)\n", ds.size(), a.out.c_str(),
                static_cast<unsigned long long>(fnv1a_file(a.out)));
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string eval_data;
  std::string out;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  nlohmann::json cfg_json = load_json(a.config);
  TrainConfig tc = train_config_from_json(cfg_json);
  Dataset ds = read_jsonl(a.data);
  if (ds.task != tc.task) throw ConfigError("dataset task does not match config task");
  Dataset eval_ds;
  bool has_eval = !a.eval_data.empty();
  if (has_eval) eval_ds = read_jsonl(a.eval_data);
  ModelConfig mc = resolve_model(cfg_json, tc, ds);

  fs::create_directories(a.out);
  TrainResult res = train(tc, mc, ds, has_eval ? &eval_ds : nullptr, a.out);

  std::string stamp = "generated " + timestamp();
  res.record.write_steps_csv(a.out + "/steps.csv", tc.c, stamp);
  res.record.write_eval_csv(a.out + "/eval.csv", stamp);

  double final_metric = 0.0;
  std::string pm = primary_metric(tc.task);
  for (auto it = res.record.evals.rbegin(); it != res.record.evals.rend(); ++it)
    if (it->metric == pm) {
      final_metric = it->value;
      break;
    }
  long visits = static_cast<long>(res.record.steps.size());
  if (!a.quiet) {
    std::printf("c=%d forwards_per_sample_step=%.3f total_forwards=%ld est_flops_ratio=x%.2f\n",
                tc.c, visits > 0 ? static_cast<double>(res.record.total_forwards) / visits : 0.0,
                res.record.total_forwards, res.record.flops_ratio());
    std::printf("final %s=%s\n", pm.c_str(), fmt_double(final_metric).c_str());
  }
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  int context_size = -1;
  std::string out;
  bool quiet = false;
};

int cmd_eval(const EvalArgs& a) {
  ModelParams params = checkpoint_from_json(load_json(a.model));
  Dataset ds = read_jsonl(a.data);
  if (ds.task != params.config.task) throw ConfigError("dataset task does not match model task");
  std::optional<int> ctx;
  if (a.context_size >= 0) ctx = a.context_size;
  EvalResult res = evaluate(params, ds, ctx);
  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + a.out);
    out << "# generated " << timestamp() << "\n";
    out << "metric_name,metric_value,context_size\n";
    for (const auto& [name, value] : res.metrics) {
      out << name << "," << fmt_double(value) << ",";
      if (ctx) out << *ctx;
      out << "\n";
    }
  }
  if (!a.quiet)
    for (const auto& [name, value] : res.metrics)
      std::printf("%s=%s\n", name.c_str(), fmt_double(value).c_str());
  return 0;
}

struct CompareArgs {
  std::string config;
  std::string data;
  std::string eval_data;
  std::string strategies = "cmp,average,first,second,max";
  std::string seeds = "1,2,3";
  std::string out;
  bool quiet = false;
};

int cmd_compare(const CompareArgs& a) {
  nlohmann::json cfg_json = load_json(a.config);
  TrainConfig base = train_config_from_json(cfg_json);
  Dataset ds = read_jsonl(a.data);
  Dataset eval_ds;
  bool has_eval = !a.eval_data.empty();
  if (has_eval) eval_ds = read_jsonl(a.eval_data);
  auto strategies = split_list(a.strategies);
  auto seeds = split_ints(a.seeds);
  if (strategies.empty() || seeds.empty()) throw ConfigError("compare needs strategies and seeds");
  ModelConfig mc = resolve_model(cfg_json, base, ds);
  std::string pm = primary_metric(base.task);

  fs::create_directories(a.out);
  std::ofstream csv(a.out + "/compare.csv", std::ios::binary);
  if (!csv) throw ConfigError("cannot open for writing: " + a.out + "/compare.csv");
  csv << "# generated " << timestamp() << "\n";
  csv << "strategy,seed,metric_name,metric_value\n";

  for (const auto& sname : strategies) {
    Strategy strat = strategy_from(sname);
    std::vector<double> finals;
    for (int seed : seeds) {
      TrainConfig tc = base;
      tc.strategy = strat;
      tc.seed = static_cast<std::uint64_t>(seed);
      tc.validate();
      TrainResult res = train(tc, mc, ds, has_eval ? &eval_ds : nullptr);
      EvalResult ev = evaluate(res.params, has_eval ? eval_ds : ds);
      for (const auto& [name, value] : ev.metrics)
        csv << sname << "," << seed << "," << name << "," << fmt_double(value) << "\n";
      finals.push_back(ev.metrics.at(pm));
    }
    double mean = 0;
    for (double v : finals) mean += v;
    mean /= static_cast<double>(finals.size());
    double var = 0;
    for (double v : finals) var += (v - mean) * (v - mean);
    double stddev = finals.size() > 1 ? std::sqrt(var / (static_cast<double>(finals.size()) - 1)) : 0.0;
    csv << sname << ",mean," << pm << "," << fmt_double(mean) << "\n";
    csv << sname << ",std," << pm << "," << fmt_double(stddev) << "\n";
    if (!a.quiet)
      std::printf("%s %s mean=%s std=%s\n", sname.c_str(), pm.c_str(), fmt_double(mean).c_str(),
                  fmt_double(stddev).c_str());
  }
  return 0;
}

struct SweepArgs {
  std::string axis;  // c | context | depth
  std::string values;
  std::string config;
  std::string data;
  std::string eval_data;
  std::string seeds = "1";
  std::string out;
  bool quiet = false;
};

int cmd_sweep(const SweepArgs& a) {
  nlohmann::json cfg_json = load_json(a.config);
  TrainConfig base = train_config_from_json(cfg_json);
  Dataset ds = read_jsonl(a.data);
  Dataset eval_ds;
  bool has_eval = !a.eval_data.empty();
  if (has_eval) eval_ds = read_jsonl(a.eval_data);
  const Dataset& target = has_eval ? eval_ds : ds;
  auto values = split_ints(a.values);
  auto seeds = split_ints(a.seeds);
  if (values.empty() || seeds.empty()) throw ConfigError("sweep needs values and seeds");
  if (a.axis != "c" && a.axis != "context" && a.axis != "depth")
    throw ConfigError("unsupported sweep axis: " + a.axis);
  if (a.axis == "depth" && base.task != TaskKind::ranking)
    throw ConfigError("depth sweeps apply to the ranking task only");
  ModelConfig mc = resolve_model(cfg_json, base, ds);

  fs::create_directories(a.out);
  std::ofstream csv(a.out + "/sweep.csv", std::ios::binary);
  if (!csv) throw ConfigError("cannot open for writing: " + a.out + "/sweep.csv");
  csv << "# generated " << timestamp() << "\n";
  csv << "axis,value,seed,metric_name,metric_value\n";

  for (int seed : seeds) {
    TrainConfig tc = base;
    tc.seed = static_cast<std::uint64_t>(seed);

    if (a.axis == "c") {
      for (int v : values) {
        TrainConfig run_cfg = tc;
        run_cfg.c = v;
        run_cfg.schedule.assign(static_cast<size_t>(v), AblationKind::drop);
        run_cfg.validate();
        TrainResult res = train(run_cfg, mc, ds, has_eval ? &eval_ds : nullptr);
        EvalResult ev = evaluate(res.params, target);
        for (const auto& [name, value] : ev.metrics)
          csv << "c," << v << "," << seed << "," << name << "," << fmt_double(value) << "\n";
      }
      continue;
    }

    TrainResult res = train(tc, mc, ds, has_eval ? &eval_ds : nullptr);
    if (a.axis == "context") {
      for (int v : values) {
        EvalResult ev = evaluate(res.params, target, v);
        for (const auto& [name, value] : ev.metrics)
          csv << "context," << v << "," << seed << "," << name << "," << fmt_double(value) << "\n";
      }
    } else {
      // depth sweep with the robustness index against depth-1
      std::map<int, EvalResult> at_depth;
      for (int v : values) {
        at_depth[v] = evaluate(res.params, target, v);
        if (!at_depth.count(v - 1)) at_depth[v - 1] = evaluate(res.params, target, v - 1);
      }
      for (int v : values) {
        for (const auto& [name, value] : at_depth[v].metrics)
          csv << "depth," << v << "," << seed << "," << name << "," << fmt_double(value) << "\n";
        double ri = robustness_index(at_depth[v].per_query, at_depth[v - 1].per_query);
        csv << "depth," << v << "," << seed << ",robustness_index," << fmt_double(ri) << "\n";
      }
    }
  }
  if (!a.quiet) std::printf("sweep written to %s/sweep.csv\n", a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"comparative-loss training lab"};
  app.require_subcommand(1);

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset (jsonl)");
  gen->add_option("--task", gen_args.task, "cls | span | rank");
  gen->add_option("--seed", gen_args.seed);
  gen->add_option("--n", gen_args.n, "number of samples");
  gen->add_option("--out", gen_args.out)->required();
  gen->add_flag("--quiet", gen_args.quiet);
  gen->add_option("--classes", gen_args.classes);
  gen->add_option("--support-segments", gen_args.support_segments);
  gen->add_option("--noise-segments", gen_args.noise_segments);
  gen->add_option("--segment-len", gen_args.segment_len);
  gen->add_option("--vocab", gen_args.vocab);
  gen->add_option("--spurious-rate", gen_args.spurious_rate);
  gen->add_option("--distractors", gen_args.distractors);
  gen->add_option("--pool", gen_args.pool);
  gen->add_option("--feedback", gen_args.feedback);
  gen->add_option("--dim", gen_args.dim);

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "train a model from a json config");
  tr->add_option("--config", train_args.config)->required();
  tr->add_option("--data", train_args.data)->required();
  tr->add_option("--eval-data", train_args.eval_data);
  tr->add_option("--out", train_args.out)->required();
  tr->add_flag("--quiet", train_args.quiet);

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--model", eval_args.model)->required();
  ev->add_option("--data", eval_args.data)->required();
  ev->add_option("--context-size", eval_args.context_size);
  ev->add_option("--out", eval_args.out);
  ev->add_flag("--quiet", eval_args.quiet);

  CompareArgs cmp_args;
  auto* cp = app.add_subcommand("compare", "train one arm per weighting strategy");
  cp->add_option("--config", cmp_args.config)->required();
  cp->add_option("--data", cmp_args.data)->required();
  cp->add_option("--eval-data", cmp_args.eval_data);
  cp->add_option("--strategies", cmp_args.strategies, "comma separated");
  cp->add_option("--seeds", cmp_args.seeds, "comma separated");
  cp->add_option("--out", cmp_args.out)->required();
  cp->add_flag("--quiet", cmp_args.quiet);

  SweepArgs sweep_args;
  auto* sw = app.add_subcommand("sweep", "sweep c, context size, or feedback depth");
  sw->add_option("--axis", sweep_args.axis)->required();
  sw->add_option("--values", sweep_args.values)->required();
  sw->add_option("--config", sweep_args.config)->required();
  sw->add_option("--data", sweep_args.data)->required();
  sw->add_option("--eval-data", sweep_args.eval_data);
  sw->add_option("--seeds", sweep_args.seeds);
  sw->add_option("--out", sweep_args.out)->required();
  sw->add_flag("--quiet", sweep_args.quiet);

  try {
    app.parse(argc, argv);
    if (*gen) return cmd_gen(gen_args);
    if (*tr) return cmd_train(train_args);
    if (*ev) return cmd_eval(eval_args);
    if (*cp) return cmd_compare(cmp_args);
    if (*sw) return cmd_sweep(sweep_args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    if (!e.checkpoint_path.empty())
      std::fprintf(stderr, "last-good checkpoint: %s\n", e.checkpoint_path.c_str());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
