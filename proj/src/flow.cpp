#include "cgf/flow.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "cgf/error.hpp"

namespace cgf {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------- config

void FlowConfig::validate() const {
  if (dim == 0) throw Error("flow: dim must be positive");
  if (blocks == 0) throw Error("flow: at least one block is required");
  if (hidden == 0) throw Error("flow: hidden width must be positive");
  if (edge_types == 0) throw Error("flow: edge_types must be positive");
  if (!factor_out.empty() && factor_out.size() != blocks - 1) {
    throw Error("flow: factor_out needs " + std::to_string(blocks - 1) + " entries (one per boundary), got " +
                std::to_string(factor_out.size()));
  }
  if (discrete && dim != 1) throw Error("flow: discrete data requires dim 1");
  solver.validate();
  for (std::size_t d : block_dims()) {
    if (d == 0) throw Error("flow: factor-out schedule leaves a block with no features");
  }
}

std::vector<std::size_t> FlowConfig::block_dims() const {
  std::vector<std::size_t> dims{dim};
  for (std::size_t b = 0; b + 1 < blocks; ++b) {
    const bool split = b < factor_out.size() && factor_out[b];
    dims.push_back(dims.back() - (split ? dims.back() / 2 : 0));
  }
  return dims;
}

std::size_t FlowConfig::factored_after(std::size_t b) const {
  if (b >= factor_out.size() || !factor_out[b]) return 0;
  return block_dims().at(b) / 2;
}

namespace {

ojson solver_json(const SolverConfig& s) {
  ojson j;
  j["method"] = s.method == SolverMethod::kRk4 ? "rk4" : "dopri5";
  j["steps"] = s.steps;
  j["rtol"] = s.rtol;
  j["atol"] = s.atol;
  return j;
}

SolverConfig solver_from_json(const ojson& j) {
  SolverConfig s;
  const std::string method = j.at("method").get<std::string>();
  if (method == "rk4") {
    s.method = SolverMethod::kRk4;
  } else if (method == "dopri5") {
    s.method = SolverMethod::kDopri5;
  } else {
    throw FormatError("unknown solver method '" + method + "'");
  }
  s.steps = j.at("steps").get<std::size_t>();
  s.rtol = j.at("rtol").get<double>();
  s.atol = j.at("atol").get<double>();
  return s;
}

ojson config_json(const FlowConfig& c) {
  ojson j;
  j["dim"] = c.dim;
  j["blocks"] = c.blocks;
  j["hidden"] = c.hidden;
  j["edge_types"] = c.edge_types;
  j["aggregator"] = c.aggregator == Aggregator::kSum ? "sum" : "mean";
  j["factor_out"] = c.factor_out;
  j["solver"] = solver_json(c.solver);
  j["discrete"] = c.discrete;
  j["dequant"] = c.dequant == DequantMode::kUniform ? "uniform" : "variational";
  return j;
}

FlowConfig config_from_json(const ojson& j) {
  FlowConfig c;
  c.dim = j.at("dim").get<std::size_t>();
  c.blocks = j.at("blocks").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.edge_types = j.at("edge_types").get<std::size_t>();
  const std::string agg = j.at("aggregator").get<std::string>();
  if (agg != "sum" && agg != "mean") throw FormatError("unknown aggregator '" + agg + "'");
  c.aggregator = agg == "sum" ? Aggregator::kSum : Aggregator::kMean;
  c.factor_out = j.at("factor_out").get<std::vector<bool>>();
  c.solver = solver_from_json(j.at("solver"));
  c.discrete = j.at("discrete").get<bool>();
  const std::string dq = j.at("dequant").get<std::string>();
  if (dq != "uniform" && dq != "variational") throw FormatError("unknown dequant mode '" + dq + "'");
  c.dequant = dq == "uniform" ? DequantMode::kUniform : DequantMode::kVariational;
  return c;
}

std::string block_prefix(std::size_t b) { return "block" + std::to_string(b); }

DynamicsSpec block_spec(const FlowConfig& cfg, std::size_t d) {
  return DynamicsSpec{d, cfg.hidden, cfg.edge_types, cfg.aggregator};
}

}  // namespace

std::string to_json_string(const FlowConfig& cfg) { return config_json(cfg).dump(); }

FlowConfig flow_config_from_json_string(const std::string& text) {
  try {
    return config_from_json(ojson::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("flow config: ") + e.what());
  }
}

// ------------------------------------------------------------------ stack algebra

double std_normal_log_density(const Tensor& z) {
  static const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (double v : z.data()) acc += -0.5 * v * v - kHalfLog2Pi;
  return acc;
}

namespace {

void check_stack(const FieldStack& stack) {
  if (stack.fields.empty()) throw Error("flow: empty block stack");
  if (stack.factored.size() + 1 != stack.fields.size()) throw Error("flow: factored list size mismatch");
}

Tensor run_block(VectorField& field, const Tensor& x, const SolverConfig& solver, bool reverse, std::size_t b) {
  try {
    Tensor out = reverse ? reverse_integrate(field, x, solver) : integrate(field, x, solver);
    if (!out.all_finite()) throw SolverError("non-finite state");
    return out;
  } catch (const SolverError& e) {
    throw SolverError("block " + std::to_string(b) + ": " + e.what());
  }
}

}  // namespace

LogProbResult log_prob(const FieldStack& stack, const Tensor& x, const SolverConfig& solver,
                       TraceMode trace, Rng& rng) {
  check_stack(stack);
  LogProbResult out;
  Tensor cur = x;
  for (std::size_t b = 0; b < stack.fields.size(); ++b) {
    VectorField& field = *stack.fields[b];
    TraceEstimator est = ExactTrace{};
    if (trace != TraceMode::kExact) {
      est = NoiseVector::sample(cur.rows(), cur.cols(),
                                trace == TraceMode::kRademacher ? NoiseKind::kRademacher : NoiseKind::kGaussian, rng);
    }
    AugmentedState s;
    try {
      s = reverse_integrate_with_logdet(field, cur, solver, est);
      if (!s.x.all_finite()) throw SolverError("non-finite state");
    } catch (const SolverError& e) {
      throw SolverError("block " + std::to_string(b) + ": " + e.what());
    }
    out.block_delta.push_back(s.delta_logp);
    if (b + 1 < stack.fields.size()) {
      const std::size_t k = stack.factored[b];
      if (k > 0) {
        Tensor f = slice_cols(s.x, 0, k);
        out.base_terms.push_back(std_normal_log_density(f));
        out.latents.factored.push_back(std::move(f));
        cur = slice_cols(s.x, k, s.x.cols() - k);
      } else {
        out.latents.factored.emplace_back();
        cur = std::move(s.x);
      }
    } else {
      cur = std::move(s.x);
    }
  }
  out.base_terms.push_back(std_normal_log_density(cur));
  out.latents.z = std::move(cur);
  double lp = 0.0;
  for (double v : out.base_terms) lp += v;
  for (double v : out.block_delta) lp -= v;
  out.log_prob = lp;
  return out;
}

Latents encode_latents(const FieldStack& stack, const Tensor& x, const SolverConfig& solver) {
  check_stack(stack);
  Latents out;
  Tensor cur = x;
  for (std::size_t b = 0; b < stack.fields.size(); ++b) {
    Tensor y = run_block(*stack.fields[b], cur, solver, true, b);
    const std::size_t k = b + 1 < stack.fields.size() ? stack.factored[b] : 0;
    if (b + 1 < stack.fields.size()) out.factored.push_back(k > 0 ? slice_cols(y, 0, k) : Tensor());
    cur = k > 0 ? slice_cols(y, k, y.cols() - k) : std::move(y);
  }
  out.z = std::move(cur);
  return out;
}

Tensor decode_latents(const FieldStack& stack, const Latents& latents, const SolverConfig& solver) {
  check_stack(stack);
  Tensor cur = latents.z;
  for (std::size_t b = stack.fields.size(); b-- > 0;) {
    cur = run_block(*stack.fields[b], cur, solver, false, b);
    if (b > 0 && stack.factored[b - 1] > 0) cur = hconcat(latents.factored.at(b - 1), cur);
  }
  return cur;
}

Latents draw_latents(std::size_t n, std::span<const std::size_t> block_dims,
                     std::span<const std::size_t> factored, Rng& rng) {
  Latents out;
  out.z = normal_tensor(n, block_dims.back(), rng);
  out.factored.resize(factored.size());
  for (std::size_t b = factored.size(); b-- > 0;) {
    if (factored[b] > 0) out.factored[b] = normal_tensor(n, factored[b], rng);
  }
  return out;
}

// -------------------------------------------------------------------------- model

FlowModel FlowModel::create(const FlowConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  FlowModel m;
  m.cfg_ = cfg;
  Rng rng(mix_seed(seed, 0xF10));
  const auto dims = cfg.block_dims();
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    m.fields_.push_back(DynamicsField::create(m.store_, block_prefix(b), block_spec(cfg, dims[b]), rng));
  }
  if (cfg.discrete) {
    m.store_.add("dequant.mean", Tensor::scalar(0.0));
    m.store_.add("dequant.log_std", Tensor::scalar(0.0));
  }
  return m;
}

FlowModel FlowModel::from_params(const FlowConfig& cfg, ParamStore params) {
  cfg.validate();
  FlowModel m;
  m.cfg_ = cfg;
  m.store_ = std::move(params);
  const auto dims = cfg.block_dims();
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    m.fields_.push_back(DynamicsField::attach(m.store_, block_prefix(b), block_spec(cfg, dims[b])));
  }
  std::size_t expected = 0;
  for (const auto& f : m.fields_) expected += f.param_indices().size();
  if (cfg.discrete) {
    m.store_.index_of("dequant.mean");
    m.store_.index_of("dequant.log_std");
    expected += 2;
  }
  if (expected != m.store_.size()) {
    throw FormatError("parameter set has " + std::to_string(m.store_.size()) + " tensors, model expects " +
                      std::to_string(expected));
  }
  return m;
}

DequantConfig FlowModel::dequant() const {
  DequantConfig d;
  d.mode = cfg_.dequant;
  if (cfg_.discrete) {
    d.mean = store_.value(store_.index_of("dequant.mean"))[0];
    d.log_std = store_.value(store_.index_of("dequant.log_std"))[0];
  }
  return d;
}

std::vector<std::unique_ptr<GraphField>> FlowModel::bind(const Neighborhoods& nbrs) const {
  std::vector<std::unique_ptr<GraphField>> out;
  for (const auto& f : fields_) out.push_back(std::make_unique<GraphField>(f, store_, nbrs));
  return out;
}

FieldStack make_stack(const FlowModel& model, std::span<const std::unique_ptr<GraphField>> fields) {
  FieldStack s;
  for (const auto& f : fields) s.fields.push_back(f.get());
  for (std::size_t b = 0; b + 1 < model.config().blocks; ++b) s.factored.push_back(model.config().factored_after(b));
  return s;
}

LogProbResult log_prob(const FlowModel& model, const Tensor& x, const Neighborhoods& nbrs,
                       const SolverConfig& solver, TraceMode trace, Rng& rng) {
  if (x.rows() != nbrs.n() || x.cols() != model.config().dim) {
    throw ShapeError("log_prob: state " + x.shape_str() + " does not match " + std::to_string(nbrs.n()) +
                     " variables of dim " + std::to_string(model.config().dim));
  }
  auto fields = model.bind(nbrs);
  return log_prob(make_stack(model, fields), x, solver, trace, rng);
}

LogProbResult log_prob(const FlowModel& model, const Tensor& x, const Neighborhoods& nbrs, TraceMode trace,
                       Rng& rng) {
  return log_prob(model, x, nbrs, model.config().solver, trace, rng);
}

namespace {

std::vector<std::size_t> factored_list(const FlowConfig& cfg) {
  std::vector<std::size_t> f;
  for (std::size_t b = 0; b + 1 < cfg.blocks; ++b) f.push_back(cfg.factored_after(b));
  return f;
}

}  // namespace

Tensor sample(const FlowModel& model, const Neighborhoods& nbrs, Rng& rng) {
  const auto dims = model.config().block_dims();
  const auto factored = factored_list(model.config());
  const Latents lat = draw_latents(nbrs.n(), dims, factored, rng);
  auto fields = model.bind(nbrs);
  return decode_latents(make_stack(model, fields), lat, model.config().solver);
}

Tensor conditional_sample(const FlowModel& model, const Observation& observed, const Neighborhoods& nbrs,
                          Rng& rng) {
  const auto& cfg = model.config();
  const std::size_t n = nbrs.n();
  const std::size_t k = observed.indices.size();
  if (k > 0 && (observed.values.rows() != k || observed.values.cols() != cfg.dim)) {
    throw ShapeError("conditional_sample: observed values " + observed.values.shape_str() + " for " +
                     std::to_string(k) + " indices of dim " + std::to_string(cfg.dim));
  }
  std::vector<bool> seen(n, false);
  for (std::size_t i : observed.indices) {
    if (i >= n) throw Error("conditional_sample: observed index " + std::to_string(i) + " out of range");
    if (seen[i]) throw Error("conditional_sample: duplicate observed index " + std::to_string(i));
    seen[i] = true;
  }
  const auto dims = cfg.block_dims();
  const auto factored = factored_list(cfg);
  Latents lat = draw_latents(n, dims, factored, rng);
  if (k > 0) {
    const Neighborhoods sub = nbrs.induced(observed.indices);
    auto sub_fields = model.bind(sub);
    const Latents obs = encode_latents(make_stack(model, sub_fields), observed.values, cfg.solver);
    auto scatter = [&](Tensor& dst, const Tensor& src) {
      for (std::size_t r = 0; r < k; ++r) {
        std::copy(src.row(r).begin(), src.row(r).end(), dst.row(observed.indices[r]).begin());
      }
    };
    scatter(lat.z, obs.z);
    for (std::size_t b = 0; b < factored.size(); ++b) {
      if (factored[b] > 0) scatter(lat.factored[b], obs.factored[b]);
    }
  }
  auto fields = model.bind(nbrs);
  return decode_latents(make_stack(model, fields), lat, cfg.solver);
}

Graph sample_graph(const FlowModel& model, std::size_t n, Rng& rng) {
  if (!model.config().discrete) throw Error("sample_graph requires a discrete (graph generation) model");
  const LineGraphTemplate tmpl = line_graph_of_complete(n);
  const Tensor y = sample(model, tmpl.nbrs, rng);
  // y = x + u - 1 with u in (0, 1): an edge is present iff y > 0.
  return decode_graph(tmpl, y, 0.0);
}

// --------------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[4] = {'C', 'G', 'F', '1'};
constexpr int kFormatVersion = 1;

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return bits;
}

double get_f64(const std::string& in, std::size_t pos) {
  const std::uint64_t bits = get_u64(in, pos);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  ojson h;
  h["format_version"] = kFormatVersion;
  h["seed"] = ckpt.seed;
  h["config"] = config_json(ckpt.config);
  ojson params = ojson::array();
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    params.push_back({{"name", ckpt.params.name(i)},
                      {"shape", {ckpt.params.value(i).rows(), ckpt.params.value(i).cols()}}});
  }
  h["params"] = params;
  if (ckpt.optimizer) {
    h["optimizer"] = {{"step", ckpt.optimizer->step}};
  } else {
    h["optimizer"] = nullptr;
  }
  const std::string header = h.dump();
  std::string out(kMagic, 4);
  put_le<std::uint64_t>(out, header.size());
  out += header;
  const std::size_t total = ckpt.params.total_count();
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    for (double v : ckpt.params.value(i).data()) put_le(out, v);
  }
  if (ckpt.optimizer) {
    if (ckpt.optimizer->m.size() != total || ckpt.optimizer->v.size() != total) {
      throw Error("checkpoint: optimizer moments do not match the parameter count");
    }
    for (double v : ckpt.optimizer->m) put_le(out, v);
    for (double v : ckpt.optimizer->v) put_le(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12) throw FormatError("checkpoint truncated: missing header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a CGF1 checkpoint (bad magic)");
  const std::uint64_t hlen = get_u64(bytes, 4);
  if (hlen > bytes.size() - 12) throw FormatError("checkpoint truncated: header runs past end of file");
  ojson h;
  try {
    h = ojson::parse(bytes.substr(12, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  Checkpoint ck;
  std::size_t pos = 12 + hlen;
  try {
    const int version = h.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kFormatVersion) + ")");
    }
    ck.seed = h.at("seed").get<std::uint64_t>();
    ck.config = config_from_json(h.at("config"));
    auto read_block = [&](std::size_t count) {
      if (count > (bytes.size() - pos) / 8) throw FormatError("checkpoint truncated: payload too short");
      std::vector<double> v(count);
      for (std::size_t i = 0; i < count; ++i) v[i] = get_f64(bytes, pos + 8 * i);
      pos += 8 * count;
      return v;
    };
    for (const auto& p : h.at("params")) {
      const auto shape = p.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw FormatError("checkpoint: parameter shape must have two entries");
      ck.params.add(p.at("name").get<std::string>(), Tensor(shape[0], shape[1], read_block(shape[0] * shape[1])));
    }
    if (!h.at("optimizer").is_null()) {
      OptimizerState st;
      st.step = h.at("optimizer").at("step").get<std::uint64_t>();
      st.m = read_block(ck.params.total_count());
      st.v = read_block(ck.params.total_count());
      ck.optimizer = std::move(st);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  if (pos != bytes.size()) throw FormatError("checkpoint has trailing bytes after the payload");
  ck.config.validate();
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace cgf
