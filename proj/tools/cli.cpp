#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cgf/error.hpp"
#include "cgf/eval.hpp"
#include "cgf/flow.hpp"
#include "cgf/graphdata.hpp"
#include "cgf/train.hpp"

namespace cgf::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// Bad flags, configs or missing inputs: exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

json default_config() {
  return json::parse(R"({
    "task": "graph-gen",
    "dataset": {"generator": "community-small", "min_nodes": 12, "max_nodes": 16, "count": 200, "seed": 7,
                "dir": "data"},
    "model": {"blocks": 2, "hidden": 32, "edge_types": 1, "aggregator": "sum", "factor_out": [],
              "dequant": "variational", "seed": 1},
    "solver": {"method": "rk4", "steps": 4, "rtol": 1e-5, "atol": 1e-7},
    "train": {"lr": 0.001, "beta1": 0.9, "beta2": 0.999, "batch_size": 8, "epochs": 12, "max_steps": 0,
              "clip_norm": 10.0, "seed": 0},
    "toy": {"rho": 0.8, "count": 2000, "seed": 1},
    "output_dir": "run"
  })");
}

/// Overlays `src` onto `dst`; every key in `src` must already exist in `dst`.
void merge_into(json& dst, const json& src, const std::string& path) {
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!dst.contains(it.key())) throw UsageError("unknown config key '" + key + "'");
    if (dst[it.key()].is_object()) {
      if (!it.value().is_object()) throw UsageError("config key '" + key + "' must be an object");
      merge_into(dst[it.key()], it.value(), key);
    } else {
      dst[it.key()] = it.value();
    }
  }
}

void set_dotted(json& cfg, const std::string& dotted, const std::string& raw) {
  json* node = &cfg;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) throw UsageError("unknown config key '" + dotted + "'");
    node = &(*node)[part];
  }
  if (node->is_object()) throw UsageError("config key '" + dotted + "' is a section, not a value");
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings
  }
  *node = value;
}

/// Applies trailing "--a.b value" / "--a.b=value" overrides.
void apply_overrides(json& cfg, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) throw UsageError("unexpected argument '" + a + "'");
    std::string key = a.substr(2), value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw UsageError("missing value for --" + key);
      value = extras[++i];
    }
    set_dotted(cfg, key, value);
  }
}

SizeRange parse_sizes(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) {
      const auto n = std::stoul(text);
      return {n, n};
    }
    return {std::stoul(text.substr(0, colon)), std::stoul(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw UsageError("size range '" + text + "' must look like LO:HI");
  }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config ") + section + "." + key + ": " + e.what());
  }
}

struct RunSpec {
  std::string task;
  FlowConfig flow;
  std::uint64_t model_seed = 1;
  TrainConfig train;
  fs::path data_dir;
  fs::path output_dir;
  double rho = 0.8;
  std::size_t toy_count = 0;
  std::uint64_t toy_seed = 0;
};

RunSpec resolve(const json& cfg) {
  RunSpec r;
  try {
    r.task = cfg.at("task").get<std::string>();
    r.output_dir = cfg.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  if (r.task != "graph-gen" && r.task != "toy-gaussian") {
    throw UsageError("task must be 'graph-gen' or 'toy-gaussian', got '" + r.task + "'");
  }
  FlowConfig& f = r.flow;
  f.blocks = get<std::size_t>(cfg, "model", "blocks");
  f.hidden = get<std::size_t>(cfg, "model", "hidden");
  f.edge_types = get<std::size_t>(cfg, "model", "edge_types");
  const auto agg = get<std::string>(cfg, "model", "aggregator");
  if (agg != "sum" && agg != "mean") throw UsageError("model.aggregator must be 'sum' or 'mean'");
  f.aggregator = agg == "sum" ? Aggregator::kSum : Aggregator::kMean;
  f.factor_out = get<std::vector<bool>>(cfg, "model", "factor_out");
  const auto dq = get<std::string>(cfg, "model", "dequant");
  if (dq != "uniform" && dq != "variational") throw UsageError("model.dequant must be 'uniform' or 'variational'");
  f.dequant = dq == "uniform" ? DequantMode::kUniform : DequantMode::kVariational;
  f.dim = 1;
  f.discrete = r.task == "graph-gen";
  r.model_seed = get<std::uint64_t>(cfg, "model", "seed");
  const auto method = get<std::string>(cfg, "solver", "method");
  if (method == "rk4") {
    f.solver = SolverConfig::rk4(get<std::size_t>(cfg, "solver", "steps"));
  } else if (method == "dopri5") {
    f.solver = SolverConfig::dopri5(get<double>(cfg, "solver", "rtol"), get<double>(cfg, "solver", "atol"));
  } else {
    throw UsageError("solver.method must be 'rk4' or 'dopri5'");
  }
  TrainConfig& t = r.train;
  t.lr = get<double>(cfg, "train", "lr");
  t.beta1 = get<double>(cfg, "train", "beta1");
  t.beta2 = get<double>(cfg, "train", "beta2");
  t.batch_size = get<std::size_t>(cfg, "train", "batch_size");
  t.epochs = get<std::size_t>(cfg, "train", "epochs");
  t.max_steps = get<std::size_t>(cfg, "train", "max_steps");
  t.clip_norm = get<double>(cfg, "train", "clip_norm");
  t.seed = get<std::uint64_t>(cfg, "train", "seed");
  t.solver = SolverConfig::rk4(f.solver.method == SolverMethod::kRk4 ? f.solver.steps : 4);
  r.data_dir = get<std::string>(cfg, "dataset", "dir");
  r.rho = get<double>(cfg, "toy", "rho");
  r.toy_count = get<std::size_t>(cfg, "toy", "count");
  r.toy_seed = get<std::uint64_t>(cfg, "toy", "seed");
  try {
    f.validate();
    t.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (r.task == "toy-gaussian" && !(r.rho > -1.0 && r.rho < 1.0)) throw UsageError("toy.rho must lie in (-1, 1)");
  return r;
}

std::vector<Graph> read_graph_file(const fs::path& p) {
  if (!fs::exists(p)) throw UsageError("missing dataset file: " + p.string());
  return read_graphs(p);
}

std::vector<Graph> filter_sizes(const std::vector<Graph>& gs, const std::optional<SizeRange>& r) {
  if (!r) return gs;
  std::vector<Graph> out;
  for (const auto& g : gs) {
    if (r->contains(g.n())) out.push_back(g);
  }
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UsageError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(p.string() + ": " + e.what());
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// ------------------------------------------------------------------ make-data

struct MakeDataArgs {
  std::string generator = "community-small";
  std::size_t count = 200;
  std::uint64_t seed = 0;
  std::size_t min_nodes = 0, max_nodes = 0;
  std::string out = "data";
};

int cmd_make_data(const MakeDataArgs& a, std::ostream& out) {
  const auto names = generator_names();
  if (std::find(names.begin(), names.end(), a.generator) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw UsageError("unknown generator '" + a.generator + "'; available: " + list);
  }
  SizeRange sizes = a.generator == "community-small" ? SizeRange{12, 20} : SizeRange{4, 18};
  if (a.min_nodes) sizes.lo = a.min_nodes;
  if (a.max_nodes) sizes.hi = a.max_nodes;
  if (a.count < 10) throw UsageError("--count must be at least 10");
  Rng rng(mix_seed(a.seed, 0xDA7A));
  std::vector<Graph> graphs;
  graphs.reserve(a.count);
  try {
    for (std::size_t i = 0; i < a.count; ++i) graphs.push_back(sample_dataset_graph(a.generator, rng, sizes));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const std::size_t n_train = a.count * 8 / 10, n_val = a.count / 10;
  const fs::path dir(a.out);
  fs::create_directories(dir);
  const std::span<const Graph> all(graphs);
  write_graphs(dir / "train.jsonl", all.subspan(0, n_train));
  write_graphs(dir / "val.jsonl", all.subspan(n_train, n_val));
  write_graphs(dir / "test.jsonl", all.subspan(n_train + n_val));
  json meta;
  meta["generator"] = a.generator;
  meta["count"] = a.count;
  meta["seed"] = a.seed;
  meta["min_nodes"] = sizes.lo;
  meta["max_nodes"] = sizes.hi;
  meta["splits"] = {{"train", n_train}, {"val", n_val}, {"test", a.count - n_train - n_val}};
  write_text(dir / "meta.json", meta.dump(2) + "\n");
  out << "wrote " << n_train << "/" << n_val << "/" << (a.count - n_train - n_val) << " graphs to " << dir.string()
      << "\n";
  return 0;
}

// ---------------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  bool dry_run = false;
  std::string train_sizes, eval_sizes;
  std::vector<std::string> overrides;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  json cfg = default_config();
  if (!a.config.empty()) {
    if (!fs::exists(a.config)) throw UsageError("missing config file: " + a.config);
    merge_into(cfg, read_json_file(a.config), "");
  }
  apply_overrides(cfg, a.overrides);
  const RunSpec spec = resolve(cfg);
  std::optional<SizeRange> train_sizes, eval_sizes;
  if (!a.train_sizes.empty()) train_sizes = parse_sizes(a.train_sizes);
  if (!a.eval_sizes.empty()) eval_sizes = parse_sizes(a.eval_sizes);

  std::vector<TypedGraph> train_data, eval_data;
  if (spec.task == "graph-gen") {
    const auto tr = filter_sizes(read_graph_file(spec.data_dir / "train.jsonl"), train_sizes);
    const auto ev = filter_sizes(read_graph_file(spec.data_dir / "test.jsonl"), eval_sizes);
    if (tr.empty()) throw UsageError("no training graphs match the requested sizes");
    if (ev.empty()) throw UsageError("no evaluation graphs match the requested sizes");
    train_data = graph_dataset(tr);
    eval_data = graph_dataset(ev);
  } else {
    train_data = toy_gaussian_dataset(spec.toy_count, spec.rho, spec.toy_seed);
    eval_data = toy_gaussian_dataset(std::max<std::size_t>(1, spec.toy_count / 2), spec.rho, spec.toy_seed + 1);
  }

  FlowModel model = FlowModel::create(spec.flow, spec.model_seed);
  out << "task: " << spec.task << "\n";
  out << "parameters: " << model.params().total_count() << "\n";
  out << "training graphs: " << train_data.size() << "\n";
  if (a.dry_run) {
    out << "dry run: configuration is valid\n";
    return 0;
  }
  fs::create_directories(spec.output_dir);
  write_text(spec.output_dir / "config.json", cfg.dump(2) + "\n");
  const fs::path ckpt_path = spec.output_dir / "model.cgf";
  auto save = [&](const FlowModel& m, const OptimizerState& opt) {
    save_checkpoint(ckpt_path, Checkpoint{m.config(), m.params(), opt, spec.model_seed});
  };
  TrainResult result;
  try {
    result = train(model, train_data, spec.train, nullptr, [&](std::size_t epoch, const FlowModel& m, const OptimizerState& opt) {
      save(m, opt);
      err << "epoch " << epoch << " done\n";
    });
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    err << "last good checkpoint kept at " << ckpt_path.string() << "\n";
    return 1;
  }
  save(model, result.optimizer);
  {
    std::ostringstream csv;
    write_loss_csv(csv, result.curve);
    write_text(spec.output_dir / "loss.csv", csv.str());
  }
  Rng eval_rng(mix_seed(spec.train.seed, 0xE7));
  const double eval_bpd = nll_bits_per_dim(model, eval_data, eval_rng);
  json summary;
  summary["task"] = spec.task;
  summary["steps"] = result.curve.size();
  summary["final_train_bits_per_dim"] = result.epoch_means.empty() ? 0.0 : result.epoch_means.back();
  summary["eval_bits_per_dim"] = eval_bpd;
  summary["eval_graphs"] = eval_data.size();
  if (spec.task == "toy-gaussian") {
    summary["eval_nats_per_var"] = eval_bpd * std::numbers::ln2;
    summary["entropy_nats_per_var"] = toy_gaussian_entropy_per_var(spec.rho);
  }
  write_text(spec.output_dir / "summary.json", summary.dump(2) + "\n");
  out << "final bits/dim: " << fmt(eval_bpd) << "\n";
  return 0;
}

// --------------------------------------------------------------------- sample

struct SampleArgs {
  std::string checkpoint;
  std::size_t num = 1024;
  std::uint64_t seed = 0;
  std::string out = "samples.jsonl";
  std::string sizes;
  std::string size_reference;
  std::string dot_dir;
  std::string conditional;
};

std::string to_dot(const Graph& g) {
  std::string s = "graph G {\n";
  for (std::size_t i = 0; i < g.n(); ++i) s += "  " + std::to_string(i) + ";\n";
  for (const auto& [u, v] : g.edges()) s += "  " + std::to_string(u) + " -- " + std::to_string(v) + ";\n";
  return s + "}\n";
}

FlowModel load_model(const std::string& path) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  if (!fs::exists(path)) throw UsageError("missing checkpoint: " + path);
  const Checkpoint ck = load_checkpoint(path);
  return FlowModel::from_params(ck.config, ck.params);
}

Neighborhoods toy_pair() {
  Neighborhoods nb(2, 1);
  nb.add_undirected(0, 1);
  return nb;
}

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const FlowModel model = load_model(a.checkpoint);
  Rng rng(mix_seed(a.seed, 0x5A));
  std::ostringstream lines;
  if (!model.config().discrete) {
    std::optional<Observation> obs;
    if (!a.conditional.empty()) {
      const json j = read_json_file(a.conditional);
      Observation o;
      try {
        for (const auto& item : j.at("observed")) {
          o.indices.push_back(item.at(0).get<std::size_t>());
        }
        o.values = Tensor(o.indices.size(), 1);
        for (std::size_t i = 0; i < o.indices.size(); ++i) o.values[i] = j.at("observed").at(i).at(1).get<double>();
      } catch (const json::exception& e) {
        throw UsageError(std::string("conditional file: ") + e.what());
      }
      obs = std::move(o);
    }
    const Neighborhoods nb = toy_pair();
    for (std::size_t i = 0; i < a.num; ++i) {
      const Tensor x = obs ? conditional_sample(model, *obs, nb, rng) : sample(model, nb, rng);
      json row = json::array();
      for (std::size_t r = 0; r < x.rows(); ++r) row.push_back(json::array({x(r, 0)}));
      lines << json{{"states", row}}.dump() << "\n";
    }
    write_text(a.out, lines.str());
    out << "wrote " << a.num << " samples to " << a.out << "\n";
    return 0;
  }

  std::vector<std::size_t> node_counts;
  std::optional<Observation> obs;
  std::size_t cond_nodes = 0;
  if (!a.conditional.empty()) {
    const json j = read_json_file(a.conditional);
    try {
      cond_nodes = j.at("nodes").get<std::size_t>();
      const LineGraphTemplate tmpl = line_graph_of_complete(cond_nodes);
      Observation o;
      for (const auto& e : j.at("edges")) {
        const auto u = e.at(0).get<std::uint32_t>(), v = e.at(1).get<std::uint32_t>();
        if (u >= cond_nodes || v >= cond_nodes || u == v) throw UsageError("conditional edge out of range");
        o.indices.push_back(tmpl.index_of(std::min(u, v), std::max(u, v)));
      }
      o.values = Tensor(o.indices.size(), 1);
      std::size_t i = 0;
      // Observed states sit at the centre of their dequantization bin in model space.
      for (const auto& e : j.at("edges")) o.values[i++] = e.at(2).get<int>() ? 0.5 : -0.5;
      obs = std::move(o);
    } catch (const json::exception& e) {
      throw UsageError(std::string("conditional file: ") + e.what());
    }
  }
  std::vector<Graph> reference;
  if (!a.size_reference.empty()) reference = read_graph_file(a.size_reference);
  std::optional<SizeRange> range;
  if (!a.sizes.empty()) range = parse_sizes(a.sizes);
  if (!obs && reference.empty() && !range) throw UsageError("give --sizes, --size-reference or --conditional");

  std::vector<Graph> graphs;
  for (std::size_t i = 0; i < a.num; ++i) {
    std::size_t n;
    if (obs) {
      n = cond_nodes;
    } else if (!reference.empty()) {
      n = reference[std::uniform_int_distribution<std::size_t>(0, reference.size() - 1)(rng)].n();
    } else {
      n = std::uniform_int_distribution<std::size_t>(range->lo, range->hi)(rng);
    }
    if (obs) {
      const LineGraphTemplate tmpl = line_graph_of_complete(n);
      graphs.push_back(decode_graph(tmpl, conditional_sample(model, *obs, tmpl.nbrs, rng), 0.0));
    } else {
      graphs.push_back(sample_graph(model, n, rng));
    }
  }
  write_graphs(a.out, graphs);
  if (!a.dot_dir.empty()) {
    fs::create_directories(a.dot_dir);
    for (std::size_t i = 0; i < graphs.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "graph_%05zu.dot", i);
      write_text(fs::path(a.dot_dir) / name, to_dot(graphs[i]));
    }
  }
  out << "wrote " << graphs.size() << " graphs to " << a.out << "\n";
  return 0;
}

// ----------------------------------------------------------------------- eval

struct EvalArgs {
  std::string reference, generated, checkpoint, out = "metrics.json";
  std::vector<std::string> metrics;
  double sigma = 1.0;
  std::string distance = "tv";
  std::size_t num = 1024;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::vector<StatKind> kinds;
  for (const auto& m : a.metrics) {
    if (m == "degree") {
      kinds.push_back(StatKind::kDegree);
    } else if (m == "clustering") {
      kinds.push_back(StatKind::kClustering);
    } else if (m == "orbit") {
      kinds.push_back(StatKind::kOrbit);
    } else {
      throw UsageError("unknown metric '" + m + "' (expected degree, clustering or orbit)");
    }
  }
  if (kinds.empty()) kinds = all_stat_kinds();
  MMDConfig mc{a.sigma, GroundDistance::kTotalVariation};
  if (a.distance == "w1") {
    mc.distance = GroundDistance::kWasserstein1;
  } else if (a.distance != "tv") {
    throw UsageError("--distance must be 'tv' or 'w1'");
  }
  if (!(a.sigma > 0.0)) throw UsageError("--sigma must be positive");
  const auto reference = read_graph_file(a.reference);
  if (reference.empty()) throw UsageError("reference set is empty: " + a.reference);
  MetricsReport report;
  if (!a.checkpoint.empty()) {
    const FlowModel model = load_model(a.checkpoint);
    report = evaluate_protocol(model, reference, std::max(a.num, reference.size()), a.seed, kinds, mc);
  } else {
    if (a.generated.empty()) throw UsageError("give --generated or --checkpoint");
    const auto generated = read_graph_file(a.generated);
    if (generated.empty()) throw UsageError("generated set is empty: " + a.generated);
    report = compare_graph_sets(reference, generated, kinds, mc);
    report.seed = a.seed;
  }
  const std::string text = metrics_to_json(report);
  write_text(a.out, text);
  out << text;
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continuous graph flow: data generation, training, sampling and evaluation"};
  app.require_subcommand(1);

  MakeDataArgs md;
  auto* make_data = app.add_subcommand("make-data", "Generate train/val/test graph splits (80/10/10)");
  make_data->add_option("--generator", md.generator, "Generator name (community-small, ego-small)");
  make_data->add_option("--count", md.count, "Number of graphs");
  make_data->add_option("--seed", md.seed, "Random seed");
  make_data->add_option("--min-nodes", md.min_nodes, "Smallest graph size");
  make_data->add_option("--max-nodes", md.max_nodes, "Largest graph size");
  make_data->add_option("--out", md.out, "Output directory");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model; extra --section.key value flags override the config");
  train_cmd->add_option("--config", ta.config, "JSON run configuration");
  train_cmd->add_flag("--dry-run", ta.dry_run, "Validate the configuration and print the parameter count");
  train_cmd->add_option("--train-sizes", ta.train_sizes, "Only train on graphs with LO:HI nodes");
  train_cmd->add_option("--eval-sizes", ta.eval_sizes, "Only evaluate on graphs with LO:HI nodes");
  train_cmd->allow_extras();

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "Sample graphs (or toy states) from a checkpoint");
  sample_cmd->add_option("--checkpoint", sa.checkpoint, "Model checkpoint")->required();
  sample_cmd->add_option("--num", sa.num, "Number of samples");
  sample_cmd->add_option("--seed", sa.seed, "Random seed");
  sample_cmd->add_option("--out", sa.out, "Output JSONL file");
  sample_cmd->add_option("--sizes", sa.sizes, "Uniform node counts LO:HI");
  sample_cmd->add_option("--size-reference", sa.size_reference, "Draw node counts from this JSONL set");
  sample_cmd->add_option("--dot", sa.dot_dir, "Also write one DOT file per graph into this directory");
  sample_cmd->add_option("--conditional", sa.conditional, "JSON file with observed variables");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "MMD between a reference set and generated graphs");
  eval_cmd->add_option("--reference", ea.reference, "Reference (test) JSONL")->required();
  eval_cmd->add_option("--generated", ea.generated, "Generated JSONL");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "Generate from this checkpoint instead");
  eval_cmd->add_option("--num", ea.num, "Graphs to generate with --checkpoint");
  eval_cmd->add_option("--seed", ea.seed, "Random seed (recorded in the report)");
  eval_cmd->add_option("--metrics", ea.metrics, "Subset of degree,clustering,orbit")->delimiter(',');
  eval_cmd->add_option("--sigma", ea.sigma, "Kernel bandwidth");
  eval_cmd->add_option("--distance", ea.distance, "Ground distance: tv or w1");
  eval_cmd->add_option("--out", ea.out, "Metrics JSON output");

  SelftestOptions so;
  auto* selftest_cmd = app.add_subcommand("selftest", "Gradient, solver, trace and invertibility diagnostics");
  selftest_cmd->add_flag("--inject-fault", so.inject_fault, "Flip the sign of the tanh VJP (mutation test)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (make_data->parsed()) return cmd_make_data(md, out);
    if (train_cmd->parsed()) {
      ta.overrides = train_cmd->remaining();
      return cmd_train(ta, out, err);
    }
    if (sample_cmd->parsed()) return cmd_sample(sa, out);
    if (eval_cmd->parsed()) return cmd_eval(ea, out);
    if (selftest_cmd->parsed()) return selftest(so, out) ? 0 : 1;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace cgf::cli
