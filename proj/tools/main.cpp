// Command-line front end: dataset synthesis, episodic training, evaluation,
// bias diagnostics, and solver/runtime benchmarks.
//
// Exit codes: 0 ok, 2 usage/config error, 3 training divergence,
// 4 artifact (checkpoint/dataset) mismatch or I/O failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protoflow/checkpoint.hpp"
#include "protoflow/dataset.hpp"
#include "protoflow/episode.hpp"
#include "protoflow/error.hpp"
#include "protoflow/flow.hpp"
#include "protoflow/metatrain.hpp"
#include "protoflow/prototype.hpp"
#include "protoflow/solver.hpp"

using json = nlohmann::json;
using namespace protoflow;

namespace {

// ---------------------------------------------------------------------------
// run configuration: one flat JSON document, unknown keys rejected

json default_config() {
  return json{
      {"flow", "e2gradnet"},        // zero | meangrad | gradnet | e2gradnet
      {"solver", "euler"},          // euler | rk4 | e2
      {"steps", 40},
      {"integral_time", 40.0},
      {"gamma", 10.0},
      {"modules", 4},
      {"n_way", 5},
      {"k_shot", 1},
      {"queries_per_class", 15},
      {"transductive", true},
      {"lr", 1e-4},
      {"weight_decay", 5e-4},
      {"epochs", 50},
      {"episodes_per_epoch", 100},
      {"lr_decay_epochs", json::array({15, 30, 40})},
      {"lr_decay_factor", 0.1},
      {"batch_episodes", 8},
      {"val_episodes", 100},
      {"train_threads", 1},
      {"seed", 1},
      {"train_data", ""},
      {"val_data", ""},
      {"test_data", ""},
      {"synth_classes", 30},
      {"synth_per_class", 200},
      {"synth_dim", 64},
      {"synth_sigma", 0.35},
      {"synth_center_scale", 1.0},
      {"synth_seed", 42},
      {"synth_split", json::array({20, 5, 5})},
  };
}

void merge_config(json& cfg, const json& file, const std::string& origin) {
  if (!file.is_object())
    throw ConfigError(origin + ": config root must be a JSON object");
  for (const auto& [key, value] : file.items()) {
    if (!cfg.contains(key))
      throw ConfigError(origin + ": unknown config key \"" + key + "\"");
    const json& slot = cfg.at(key);
    const bool numeric_ok = slot.is_number() && value.is_number();
    if (!numeric_ok && slot.type() != value.type())
      throw ConfigError(origin + ": key \"" + key + "\" has wrong type");
    cfg[key] = value;
  }
}

json parse_override_value(const json& slot, const std::string& key,
                          const std::string& raw) {
  auto fail = [&]() -> json {
    throw ConfigError("--set " + key + ": cannot parse value \"" + raw + "\"");
  };
  try {
    if (slot.is_boolean()) {
      if (raw == "true" || raw == "1") return true;
      if (raw == "false" || raw == "0") return false;
      return fail();
    }
    if (slot.is_number_unsigned() || slot.is_number_integer()) {
      std::size_t used = 0;
      const long long v = std::stoll(raw, &used);
      if (used != raw.size() || v < 0) return fail();
      return static_cast<std::uint64_t>(v);
    }
    if (slot.is_number_float()) {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      if (used != raw.size()) return fail();
      return v;
    }
    if (slot.is_array()) {  // comma-separated integers; empty clears
      json arr = json::array();
      std::string rest = raw;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string tok = rest.substr(0, comma);
        rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
        if (tok.empty()) return fail();
        std::size_t used = 0;
        const long long v = std::stoll(tok, &used);
        if (used != tok.size() || v < 0) return fail();
        arr.push_back(static_cast<std::uint64_t>(v));
      }
      return arr;
    }
    return json(raw);  // string
  } catch (const std::invalid_argument&) {
    return fail();
  } catch (const std::out_of_range&) {
    return fail();
  }
}

void apply_overrides(json& cfg, const std::vector<std::string>& sets) {
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got \"" + kv + "\"");
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    if (!cfg.contains(key))
      throw ConfigError("--set: unknown config key \"" + key + "\"");
    cfg[key] = parse_override_value(cfg.at(key), key, raw);
  }
}

json load_config(const std::string& path, const std::vector<std::string>& sets) {
  json cfg = default_config();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in.good()) throw ConfigError("config: cannot open " + path);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config: " + path + ": " + e.what());
    }
    merge_config(cfg, file, path);
  }
  apply_overrides(cfg, sets);
  return cfg;
}

// ---------------------------------------------------------------------------
// environment + enum helpers

std::optional<std::uint64_t> env_u64(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  std::size_t used = 0;
  unsigned long long parsed = 0;
  try {
    parsed = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(std::string(name) + ": cannot parse \"" + v + "\"");
  }
  if (used != std::string(v).size())
    throw ConfigError(std::string(name) + ": cannot parse \"" + v + "\"");
  return parsed;
}

FlowKind flow_from_string(const std::string& s) {
  if (s == "zero") return FlowKind::zero;
  if (s == "meangrad") return FlowKind::meangrad;
  if (s == "gradnet") return FlowKind::gradnet;
  if (s == "e2gradnet") return FlowKind::e2gradnet;
  throw ConfigError("unknown flow kind \"" + s + "\"");
}

SolverKind solver_from_string(const std::string& s) {
  if (s == "euler") return SolverKind::euler;
  if (s == "rk4") return SolverKind::rk4;
  if (s == "e2") return SolverKind::e2;
  throw ConfigError("unknown solver kind \"" + s + "\"");
}

const char* flow_to_string(FlowKind k) {
  switch (k) {
    case FlowKind::zero: return "zero";
    case FlowKind::meangrad: return "meangrad";
    case FlowKind::gradnet: return "gradnet";
    case FlowKind::e2gradnet: return "e2gradnet";
  }
  return "?";
}

const char* solver_to_string(SolverKind k) {
  switch (k) {
    case SolverKind::euler: return "euler";
    case SolverKind::rk4: return "rk4";
    case SolverKind::e2: return "e2";
  }
  return "?";
}

EpisodeConfig episode_from(const json& cfg) {
  EpisodeConfig e;
  e.n_way = cfg.at("n_way").get<std::size_t>();
  e.k_shot = cfg.at("k_shot").get<std::size_t>();
  e.queries_per_class = cfg.at("queries_per_class").get<std::size_t>();
  e.mode = cfg.at("transductive").get<bool>() ? EpisodeMode::transductive
                                              : EpisodeMode::inductive;
  return e;
}

MetaConfig meta_from(const json& cfg) {
  MetaConfig m;
  m.lr = cfg.at("lr").get<double>();
  m.weight_decay = cfg.at("weight_decay").get<double>();
  m.epochs = cfg.at("epochs").get<std::size_t>();
  m.episodes_per_epoch = cfg.at("episodes_per_epoch").get<std::size_t>();
  m.lr_decay_epochs.clear();
  for (const auto& v : cfg.at("lr_decay_epochs"))
    m.lr_decay_epochs.push_back(v.get<std::size_t>());
  m.lr_decay_factor = cfg.at("lr_decay_factor").get<double>();
  m.batch_episodes = cfg.at("batch_episodes").get<std::size_t>();
  m.val_episodes = cfg.at("val_episodes").get<std::size_t>();
  m.train_threads = cfg.at("train_threads").get<std::size_t>();
  m.seed = cfg.at("seed").get<std::uint64_t>();
  m.episode = episode_from(cfg);
  return m;
}

// train/val/test datasets from explicit paths or the synthetic generator
struct DataBundle {
  EmbeddingDataset train, val, test;
};

DataBundle load_data(const json& cfg) {
  const std::string train_path = cfg.at("train_data").get<std::string>();
  DataBundle out;
  if (!train_path.empty()) {
    out.train = load_embeddings(train_path);
    const std::string val_path = cfg.at("val_data").get<std::string>();
    const std::string test_path = cfg.at("test_data").get<std::string>();
    if (!val_path.empty()) out.val = load_embeddings(val_path);
    if (!test_path.empty()) out.test = load_embeddings(test_path);
    return out;
  }
  SynthConfig s;
  s.num_classes = cfg.at("synth_classes").get<std::size_t>();
  s.samples_per_class = cfg.at("synth_per_class").get<std::size_t>();
  s.dim = cfg.at("synth_dim").get<std::size_t>();
  s.noise_sigma = cfg.at("synth_sigma").get<double>();
  s.center_scale = cfg.at("synth_center_scale").get<double>();
  s.seed = cfg.at("synth_seed").get<std::uint64_t>();
  EmbeddingDataset full = synth_gaussian(s);
  const auto& split = cfg.at("synth_split");
  if (!split.is_array() || split.size() != 3)
    throw ConfigError("synth_split must be [train, val, test] class counts");
  auto parts = split_by_classes(full, split[0].get<std::size_t>(),
                                split[1].get<std::size_t>(),
                                split[2].get<std::size_t>());
  out.train = std::move(parts[0]);
  out.val = std::move(parts[1]);
  out.test = std::move(parts[2]);
  return out;
}

// The evaluation-side dataset: explicit test_data path, else the synthetic
// test split.
EmbeddingDataset load_eval_data(const json& cfg) {
  const std::string test_path = cfg.at("test_data").get<std::string>();
  if (!test_path.empty()) return load_embeddings(test_path);
  return load_data(cfg).test;
}

Model model_from_config(const json& cfg, const DataBundle& data) {
  const FlowKind flow = flow_from_string(cfg.at("flow").get<std::string>());
  const SolverKind solver =
      solver_from_string(cfg.at("solver").get<std::string>());
  Model m = Model::make(flow, solver, cfg.at("n_way").get<std::size_t>(),
                        data.train.dim(), cfg.at("steps").get<std::size_t>(),
                        cfg.at("integral_time").get<double>(),
                        cfg.at("modules").get<std::size_t>(),
                        cfg.at("seed").get<std::uint64_t>());
  m.classifier.gamma = cfg.at("gamma").get<double>();
  return m;
}

// Checkpoint vs dataset/episode compatibility; violations exit with code 4.
void check_compat(const Model& m, const EmbeddingDataset& ds,
                  const EpisodeConfig& episode) {
  if (ds.dim() != m.dim)
    throw FormatError("checkpoint dim " + std::to_string(m.dim) +
                      " does not match dataset dim " +
                      std::to_string(ds.dim()));
  const bool n_dependent =
      m.flow_kind == FlowKind::gradnet || m.flow_kind == FlowKind::e2gradnet;
  if (n_dependent && episode.n_way != m.n_way)
    throw FormatError("checkpoint was trained for " + std::to_string(m.n_way) +
                      "-way episodes, config asks for " +
                      std::to_string(episode.n_way) + "-way");
}

// ---------------------------------------------------------------------------
// output helpers: stdout tables and CSV share the same numbers; the CSV
// carries full precision and is the machine-readable source of truth

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw IoError("cannot open " + path + " for writing");
  out << content;
  if (!out.good()) throw IoError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// subcommand option structs

struct SynthOpts {
  std::size_t classes = 30;
  std::size_t dim = 64;
  std::size_t per_class = 200;
  double sigma = 0.35;
  double center_scale = 1.0;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::string out;
};

struct TrainOpts {
  std::string config;
  std::vector<std::string> sets;
  std::string out = "checkpoint.pfpw";
  std::string metrics = "metrics.jsonl";
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t threads = 0;
  bool threads_given = false;
};

struct EvalOpts {
  std::string checkpoint;
  std::string config;
  std::vector<std::string> sets;
  std::string out = "eval.csv";
  std::size_t episodes = 600;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::size_t threads = 1;
  bool threads_given = false;
};

struct BiasOpts {
  std::string checkpoint;
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::size_t episodes = 1000;
  std::uint64_t seed = 1;
  bool seed_given = false;
};

struct BenchSolversOpts {
  std::string checkpoint;
  std::string config;
  std::vector<std::string> sets;
  std::string out = "bench_solvers.csv";
  std::size_t episodes = 100;
  std::uint64_t seed = 1;
  bool seed_given = false;
};

struct BenchRuntimeOpts {
  std::string out = "bench_runtime.csv";
  std::size_t repeats = 7;
  std::size_t dim = 8;
  std::size_t queries_small = 55;
  std::size_t queries_large = 115;
  std::uint64_t seed = 1234;
  bool seed_given = false;
};

std::uint64_t pick_seed(bool flag_given, std::uint64_t flag_value,
                        std::uint64_t fallback) {
  if (flag_given) return flag_value;
  if (auto env = env_u64("PROTOFLOW_SEED")) return *env;
  return fallback;
}

std::size_t pick_threads(bool flag_given, std::size_t flag_value,
                         std::size_t fallback) {
  if (flag_given) return flag_value;
  if (auto env = env_u64("PROTOFLOW_THREADS"))
    return static_cast<std::size_t>(*env);
  return fallback;
}

// ---------------------------------------------------------------------------
// commands

int cmd_synth(const SynthOpts& o) {
  if (o.classes < 1 || o.dim < 1 || o.per_class < 1)
    throw ConfigError("synth: --classes, --dim and --per-class must be >= 1");
  if (o.sigma < 0.0) throw ConfigError("synth: --sigma must be >= 0");
  SynthConfig s;
  s.num_classes = o.classes;
  s.dim = o.dim;
  s.samples_per_class = o.per_class;
  s.noise_sigma = o.sigma;
  s.center_scale = o.center_scale;
  s.seed = pick_seed(o.seed_given, o.seed, 1);
  EmbeddingDataset ds = synth_gaussian(s);
  save_pfeb(ds, o.out);
  std::printf("wrote %s: classes=%zu dim=%zu samples=%zu seed=%llu\n",
              o.out.c_str(), ds.num_classes(), ds.dim(), ds.total_samples(),
              static_cast<unsigned long long>(s.seed));
  return 0;
}

int cmd_train(const TrainOpts& o) {
  json cfg = load_config(o.config, o.sets);
  if (o.seed_given) {
    cfg["seed"] = o.seed;
  } else if (auto env = env_u64("PROTOFLOW_SEED")) {
    bool seed_set_explicitly = !o.config.empty() || !o.sets.empty();
    // env var only fills in when neither file nor --set touched the seed
    json defaults = default_config();
    seed_set_explicitly =
        cfg.at("seed").get<std::uint64_t>() !=
        defaults.at("seed").get<std::uint64_t>();
    if (!seed_set_explicitly) cfg["seed"] = *env;
  }
  if (o.threads_given) {
    cfg["train_threads"] = o.threads;
  } else if (auto env = env_u64("PROTOFLOW_THREADS")) {
    if (cfg.at("train_threads").get<std::size_t>() == 1)
      cfg["train_threads"] = static_cast<std::size_t>(*env);
  }

  DataBundle data = load_data(cfg);
  if (data.val.num_classes() == 0)
    throw ConfigError("train: a validation dataset is required "
                      "(val_data or a non-empty synth_split val part)");
  Model model = model_from_config(cfg, data);
  MetaConfig meta = meta_from(cfg);

  TrainResult result = meta_train(data.train, data.val, meta, model);

  std::string jsonl;
  for (const EpochMetrics& em : result.metrics) {
    json line{{"epoch", em.epoch},
              {"train_loss", em.train_loss},
              {"val_acc", em.val_acc},
              {"lr", em.lr}};
    jsonl += line.dump() + "\n";
  }
  write_file(o.metrics, jsonl);
  save_checkpoint(o.out, result.best);

  std::printf("flow=%s solver=%s epochs=%zu best_val_acc=%.4f%s\n",
              flow_to_string(model.flow_kind),
              solver_to_string(model.solver_kind), result.metrics.size(),
              result.best_val_acc, result.diverged ? " DIVERGED" : "");
  std::printf("checkpoint: %s\nmetrics: %s\n", o.out.c_str(),
              o.metrics.c_str());
  return result.diverged ? 3 : 0;
}

int cmd_eval(const EvalOpts& o) {
  json cfg = load_config(o.config, o.sets);
  Model model = Model::from_checkpoint(load_checkpoint(o.checkpoint));
  EmbeddingDataset ds = load_eval_data(cfg);
  EpisodeConfig episode = episode_from(cfg);
  check_compat(model, ds, episode);

  const std::uint64_t seed = pick_seed(o.seed_given, o.seed, 1);
  const std::size_t threads = pick_threads(o.threads_given, o.threads, 1);
  EvalReport report = evaluate(ds, model, episode, o.episodes, seed, threads);

  const std::string label =
      model.flow_kind == FlowKind::zero ? "baseline"
                                        : flow_to_string(model.flow_kind);
  std::printf("%-12s %-8s %10s %10s %9s\n", "model", "solver", "accuracy",
              "ci95", "episodes");
  std::printf("%-12s %-8s %10.4f %10.4f %9zu\n", label.c_str(),
              solver_to_string(model.solver_kind), report.mean_accuracy,
              report.ci95, report.episodes);

  std::string csv = "model,solver,accuracy,ci95,episodes\n";
  csv += label + "," + solver_to_string(model.solver_kind) + "," +
         fmt_full(report.mean_accuracy) + "," + fmt_full(report.ci95) + "," +
         std::to_string(report.episodes) + "\n";
  write_file(o.out, csv);
  return 0;
}

int cmd_bias(const BiasOpts& o, bool prototype) {
  json cfg = load_config(o.config, o.sets);
  Model model = Model::from_checkpoint(load_checkpoint(o.checkpoint));
  EmbeddingDataset ds = load_eval_data(cfg);
  EpisodeConfig episode = episode_from(cfg);
  check_compat(model, ds, episode);
  const std::uint64_t seed = pick_seed(o.seed_given, o.seed, 1);

  double a = 0.0, b = 0.0;
  const char *col_a, *col_b;
  if (prototype) {
    std::tie(a, b) = prototype_bias(ds, model, episode, o.episodes, seed);
    col_a = "sim_init";
    col_b = "sim_final";
  } else {
    std::tie(a, b) = gradient_bias(ds, model, episode, o.episodes, seed);
    col_a = "sim_mean_grad";
    col_b = "sim_inferred_grad";
  }
  std::printf("%-18s %-18s %9s\n", col_a, col_b, "episodes");
  std::printf("%-18.4f %-18.4f %9zu\n", a, b, o.episodes);

  std::string csv = std::string(col_a) + "," + col_b + ",episodes\n";
  csv += fmt_full(a) + "," + fmt_full(b) + "," + std::to_string(o.episodes) +
         "\n";
  write_file(o.out, csv);
  return 0;
}

int cmd_bench_solvers(const BenchSolversOpts& o) {
  json cfg = load_config(o.config, o.sets);
  std::string csv = "measure,solver,value,extra\n";

  // Part 1: empirical global order on the linear decay field dp/dt = -p.
  Rng rng(pick_seed(o.seed_given, o.seed, 1));
  TestOde ode;
  Tensor p0 = Tensor::randn({2, 3}, rng);
  ode.p0 = p0;
  ode.integral_time = 1.0;
  ode.flow = [](const PrototypeState& s) { return neg(s.prototypes); };
  ode.exact = [p0](double t) {
    Tensor out = p0;
    for (double& v : out.data()) v *= std::exp(-t);
    return out;
  };
  const std::vector<std::size_t> counts = {8, 16, 32, 64};
  std::printf("%-16s %-8s %12s\n", "measure", "solver", "value");
  for (SolverKind kind : {SolverKind::euler, SolverKind::rk4}) {
    const double order = empirical_order(kind, ode, counts);
    std::printf("%-16s %-8s %12.4f\n", "order", solver_to_string(kind), order);
    csv += std::string("order,") + solver_to_string(kind) + "," +
           fmt_full(order) + ",\n";
  }

  // Part 2: cross-solver accuracy of one model on the evaluation dataset.
  Model model = o.checkpoint.empty()
                    ? [&] {
                        DataBundle d = load_data(cfg);
                        return model_from_config(cfg, d);
                      }()
                    : Model::from_checkpoint(load_checkpoint(o.checkpoint));
  EmbeddingDataset ds = load_eval_data(cfg);
  EpisodeConfig episode = episode_from(cfg);
  check_compat(model, ds, episode);
  const std::uint64_t eval_seed = pick_seed(o.seed_given, o.seed, 1);
  for (SolverKind kind : {SolverKind::euler, SolverKind::rk4, SolverKind::e2}) {
    model.solver_kind = kind;
    if (kind == SolverKind::e2 && !model.eta)
      model.eta = std::make_unique<E2SolverParams>(model.dim);  // zero init
    EvalReport r = evaluate(ds, model, episode, o.episodes, eval_seed, 1);
    std::printf("%-16s %-8s %12.4f (ci %.4f)\n", "accuracy",
                solver_to_string(kind), r.mean_accuracy, r.ci95);
    csv += std::string("accuracy,") + solver_to_string(kind) + "," +
           fmt_full(r.mean_accuracy) + "," + fmt_full(r.ci95) + "\n";
  }
  write_file(o.out, csv);
  return 0;
}

int cmd_bench_runtime(const BenchRuntimeOpts& o) {
  if (o.repeats < 3) throw ConfigError("bench-runtime: --repeats must be >= 3");
  if (o.queries_large <= o.queries_small)
    throw ConfigError("bench-runtime: --queries-large must exceed "
                      "--queries-small");
  const std::uint64_t seed = pick_seed(o.seed_given, o.seed, 1234);
  struct Row {
    FlowKind flow;
    std::size_t queries, dim;
    ProbeStats stats;
  };
  std::vector<Row> rows;
  auto probe = [&](FlowKind k, std::size_t q, std::size_t d) {
    rows.push_back({k, q, d, flow_complexity_probe(k, 5, 5, q, d, o.repeats,
                                                   4, seed)});
  };
  // scaling grid: samples S = 25 + 5q double from small to large
  for (FlowKind k : {FlowKind::e2gradnet, FlowKind::gradnet}) {
    probe(k, o.queries_small, o.dim);
    probe(k, o.queries_large, o.dim);
  }
  // head-to-head at the default episode shape
  probe(FlowKind::e2gradnet, 15, 64);
  probe(FlowKind::gradnet, 15, 64);

  std::printf("%-10s %7s %5s %8s %12s %12s %12s\n", "flow", "queries", "dim",
              "samples", "median_us", "min_us", "max_us");
  std::string csv = "flow,n_way,k_shot,queries,dim,samples,median_s,min_s,max_s\n";
  for (const Row& r : rows) {
    const std::size_t samples = 5 * 5 + 5 * r.queries;
    std::printf("%-10s %7zu %5zu %8zu %12.1f %12.1f %12.1f\n",
                flow_to_string(r.flow), r.queries, r.dim, samples,
                r.stats.median_seconds * 1e6, r.stats.min_seconds * 1e6,
                r.stats.max_seconds * 1e6);
    csv += std::string(flow_to_string(r.flow)) + ",5,5," +
           std::to_string(r.queries) + "," + std::to_string(r.dim) + "," +
           std::to_string(samples) + "," + fmt_full(r.stats.median_seconds) +
           "," + fmt_full(r.stats.min_seconds) + "," +
           fmt_full(r.stats.max_seconds) + "\n";
  }
  const double e2_ratio = rows[1].stats.median_seconds /
                          rows[0].stats.median_seconds;
  const double gn_ratio = rows[3].stats.median_seconds /
                          rows[2].stats.median_seconds;
  const double speedup = rows[5].stats.median_seconds /
                         rows[4].stats.median_seconds;
  std::printf("doubling ratio: e2gradnet %.2f, gradnet %.2f; "
              "e2gradnet speedup at (5,5,15,%zu): %.1fx\n",
              e2_ratio, gn_ratio, std::size_t{64}, speedup);
  write_file(o.out, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot classification via prototype flow integration"};
  app.require_subcommand(1);

  SynthOpts so;
  CLI::App* synth = app.add_subcommand(
      "synth", "Generate a synthetic embedding dataset (.pfeb)");
  synth->add_option("--classes", so.classes, "number of classes")
      ->capture_default_str();
  synth->add_option("--dim", so.dim, "embedding dimension")
      ->capture_default_str();
  synth->add_option("--per-class", so.per_class, "samples per class")
      ->capture_default_str();
  synth->add_option("--sigma", so.sigma, "per-sample noise stddev")
      ->capture_default_str();
  synth->add_option("--center-scale", so.center_scale,
                    "radius of the class-center sphere")
      ->capture_default_str();
  synth->add_option("--seed", so.seed, "rng seed (PROTOFLOW_SEED fallback)")
      ->trigger_on_parse()
      ->each([&](const std::string&) { so.seed_given = true; });
  synth->add_option("-o,--out", so.out, "output .pfeb path")->required();

  TrainOpts to;
  CLI::App* train = app.add_subcommand("train", "Meta-train a flow model");
  train->add_option("-c,--config", to.config, "JSON run config");
  train->add_option("--set", to.sets, "key=value config overrides")
      ->expected(-1);
  train->add_option("-o,--out", to.out, "checkpoint output path (.pfpw)")
      ->capture_default_str();
  train->add_option("--metrics", to.metrics, "per-epoch metrics JSONL path")
      ->capture_default_str();
  train->add_option("--seed", to.seed, "overrides config seed")
      ->trigger_on_parse()
      ->each([&](const std::string&) { to.seed_given = true; });
  train->add_option("--threads", to.threads, "training worker threads")
      ->trigger_on_parse()
      ->each([&](const std::string&) { to.threads_given = true; });

  EvalOpts eo;
  CLI::App* eval = app.add_subcommand(
      "eval", "Evaluate a checkpoint: mean episode accuracy with 95% CI");
  eval->add_option("--checkpoint", eo.checkpoint, "model checkpoint (.pfpw)")
      ->required();
  eval->add_option("-c,--config", eo.config, "JSON run config");
  eval->add_option("--set", eo.sets, "key=value config overrides")
      ->expected(-1);
  eval->add_option("--episodes", eo.episodes, "evaluation episode count")
      ->capture_default_str();
  eval->add_option("-o,--out", eo.out, "CSV output path")
      ->capture_default_str();
  eval->add_option("--seed", eo.seed, "episode sampling seed")
      ->trigger_on_parse()
      ->each([&](const std::string&) { eo.seed_given = true; });
  eval->add_option("--threads", eo.threads, "evaluation worker threads")
      ->trigger_on_parse()
      ->each([&](const std::string&) { eo.threads_given = true; });

  BiasOpts po, go;
  CLI::App* pbias = app.add_subcommand(
      "proto-bias",
      "Prototype bias: cosine similarity to all-sample class means before "
      "and after integration");
  CLI::App* gbias = app.add_subcommand(
      "grad-bias",
      "Gradient bias: support-mean and inferred flow vs the full-population "
      "gradient");
  po.out = "proto_bias.csv";
  go.out = "grad_bias.csv";
  for (auto [cmd, opts] : {std::pair{pbias, &po}, std::pair{gbias, &go}}) {
    cmd->add_option("--checkpoint", opts->checkpoint, "model checkpoint")
        ->required();
    cmd->add_option("-c,--config", opts->config, "JSON run config");
    cmd->add_option("--set", opts->sets, "key=value config overrides")
        ->expected(-1);
    cmd->add_option("--episodes", opts->episodes, "episode count")
        ->capture_default_str();
    cmd->add_option("-o,--out", opts->out, "CSV output path")
        ->capture_default_str();
    cmd->add_option("--seed", opts->seed, "episode sampling seed")
        ->trigger_on_parse()
        ->each([opts](const std::string&) { opts->seed_given = true; });
  }

  BenchSolversOpts bso;
  CLI::App* bsol = app.add_subcommand(
      "bench-solvers",
      "Empirical integrator orders plus cross-solver accuracy comparison");
  bsol->add_option("--checkpoint", bso.checkpoint,
                   "model checkpoint (untrained config model when omitted)");
  bsol->add_option("-c,--config", bso.config, "JSON run config");
  bsol->add_option("--set", bso.sets, "key=value config overrides")
      ->expected(-1);
  bsol->add_option("--episodes", bso.episodes, "accuracy episode count")
      ->capture_default_str();
  bsol->add_option("-o,--out", bso.out, "CSV output path")
      ->capture_default_str();
  bsol->add_option("--seed", bso.seed, "rng seed")
      ->trigger_on_parse()
      ->each([&](const std::string&) { bso.seed_given = true; });

  BenchRuntimeOpts bro;
  CLI::App* brun = app.add_subcommand(
      "bench-runtime", "Flow evaluation wall-time scaling grids");
  brun->add_option("-o,--out", bro.out, "CSV output path")
      ->capture_default_str();
  brun->add_option("--repeats", bro.repeats, "timed repeats per shape (>=3)")
      ->capture_default_str();
  brun->add_option("--dim", bro.dim, "dimension for the scaling grid")
      ->capture_default_str();
  brun->add_option("--queries-small", bro.queries_small,
                   "queries/class at the small scaling point")
      ->capture_default_str();
  brun->add_option("--queries-large", bro.queries_large,
                   "queries/class at the large scaling point")
      ->capture_default_str();
  brun->add_option("--seed", bro.seed, "probe input seed")
      ->trigger_on_parse()
      ->each([&](const std::string&) { bro.seed_given = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(so);
    if (*train) return cmd_train(to);
    if (*eval) return cmd_eval(eo);
    if (*pbias) return cmd_bias(po, true);
    if (*gbias) return cmd_bias(go, false);
    if (*bsol) return cmd_bench_solvers(bso);
    if (*brun) return cmd_bench_runtime(bro);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
