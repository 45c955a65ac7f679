#include "cgf/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>

namespace cgf {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error("train: learning rate must be finite and non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw Error("train: moment decays must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) throw Error("train: adam epsilon must be positive");
  if (batch_size == 0) throw Error("train: batch size must be positive");
  if (epochs == 0) throw Error("train: epochs must be positive");
  if (!(clip_norm > 0.0)) throw Error("train: clip norm must be positive");
  solver.validate();
  if (solver.method != SolverMethod::kRk4) throw Error("train: the training solver must be rk4");
  if (solver.t0 != 0.0 || solver.t1 != 1.0) throw Error("train: the training solver must span [0, 1]");
}

double bits_per_dim(double nats, std::size_t dims) {
  return nats / (static_cast<double>(dims) * std::numbers::ln2);
}

std::vector<TypedGraph> graph_dataset(std::span<const Graph> graphs) {
  std::vector<TypedGraph> out;
  out.reserve(graphs.size());
  std::vector<std::unique_ptr<LineGraphTemplate>> templates;
  for (const Graph& g : graphs) {
    const std::size_t n = g.n();
    if (n < 2) throw Error("graph_dataset: graphs need at least two nodes");
    if (templates.size() <= n) templates.resize(n + 1);
    if (!templates[n]) templates[n] = std::make_unique<LineGraphTemplate>(line_graph_of_complete(n));
    out.push_back(TypedGraph{encode_graph(*templates[n], g), templates[n]->nbrs});
  }
  return out;
}

std::vector<TypedGraph> toy_gaussian_dataset(std::size_t count, double rho, std::uint64_t seed) {
  if (!(rho > -1.0 && rho < 1.0)) throw Error("toy_gaussian_dataset: rho must lie in (-1, 1)");
  Rng rng(mix_seed(seed, 0x70F));
  Neighborhoods nb(2, 1);
  nb.add_undirected(0, 1);
  std::vector<TypedGraph> out;
  out.reserve(count);
  const double c = std::sqrt(1.0 - rho * rho);
  for (std::size_t i = 0; i < count; ++i) {
    const double a = standard_normal(rng);
    const double b = standard_normal(rng);
    out.push_back(TypedGraph{Tensor::from_rows({{a}, {rho * a + c * b}}), nb});
  }
  return out;
}

double toy_gaussian_entropy_per_var(double rho) {
  // 0.5 * log((2 pi e)^2 (1 - rho^2)) spread over two variables.
  return 0.5 * (std::log(2.0 * std::numbers::pi * std::numbers::e) + 0.5 * std::log(1.0 - rho * rho));
}

std::span<const std::unique_ptr<GraphField>> FieldCache::get(const Neighborhoods& nbrs) {
  for (auto& e : entries_) {
    if (e.nbrs == nbrs) return e.fields;
  }
  if (entries_.size() >= capacity_) entries_.erase(entries_.begin());
  entries_.push_back(Entry{nbrs, {}});
  // Bind to the cached copy so the fields never reference a caller's temporary.
  entries_.back().fields = model_.bind(entries_.back().nbrs);
  return entries_.back().fields;
}

namespace {

std::vector<std::size_t> slot_offsets(const ParamStore& store) {
  std::vector<std::size_t> off(store.size() + 1, 0);
  for (std::size_t i = 0; i < store.size(); ++i) off[i + 1] = off[i] + store.value(i).size();
  return off;
}

struct DataSide {
  Tensor y;
  DequantSample dq;
  double correction = 0.0;
};

DataSide prepare(const FlowModel& model, const TypedGraph& g, Rng& rng) {
  const FlowConfig& cfg = model.config();
  if (g.states.rows() != g.nbrs.n() || g.states.cols() != cfg.dim) {
    throw ShapeError("graph states " + g.states.shape_str() + " do not match " + std::to_string(g.nbrs.n()) +
                     " variables of dim " + std::to_string(cfg.dim));
  }
  DataSide d;
  if (cfg.discrete) {
    d.dq = dequantize(g.states, model.dequant(), rng);
    d.correction = d.dq.correction;
    d.y = d.dq.values;
    for (double& v : d.y.data()) v += kDiscreteShift;
  } else {
    d.y = g.states;
  }
  return d;
}

}  // namespace

GraphLoss graph_loss(const FlowModel& model, FieldCache& cache, const TypedGraph& g, const SolverConfig& solver,
                     Rng& rng, std::span<double> grad, double weight) {
  const FlowConfig& cfg = model.config();
  const ParamStore& store = model.params();
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != store.total_count()) throw ShapeError("graph_loss: gradient size mismatch");

  DataSide data = prepare(model, g, rng);
  const auto fields = cache.get(g.nbrs);
  const std::size_t blocks = cfg.blocks;
  std::vector<std::unique_ptr<ReversedField>> rev;
  std::vector<Rk4Forward> fwd;
  std::vector<Tensor> factored(blocks);
  double base = 0.0, delta = 0.0;
  Tensor cur = data.y;
  for (std::size_t b = 0; b < blocks; ++b) {
    rev.push_back(std::make_unique<ReversedField>(*fields[b], solver.t0, solver.t1));
    const Tensor eps = rademacher_tensor(cur.rows(), cur.cols(), rng);
    fwd.push_back(rk4_forward(*rev.back(), cur, solver, eps));
    const Tensor& out = fwd.back().x1;
    if (!out.all_finite()) throw DivergenceError("block " + std::to_string(b) + " produced a non-finite state");
    delta += fwd.back().delta_logp;
    const std::size_t k = b + 1 < blocks ? cfg.factored_after(b) : 0;
    if (k > 0) {
      factored[b] = slice_cols(out, 0, k);
      base += std_normal_log_density(factored[b]);
      cur = slice_cols(out, k, out.cols() - k);
    } else {
      cur = out;
    }
  }
  base += std_normal_log_density(cur);
  GraphLoss loss;
  loss.nats = -(base - delta) + data.correction;
  const std::size_t dims = g.states.size();
  loss.bits_per_dim = bits_per_dim(loss.nats, dims);
  if (!std::isfinite(loss.nats)) throw DivergenceError("loss is not finite");
  if (!want_grad) return loss;

  const double w = weight / (static_cast<double>(dims) * std::numbers::ln2);
  const auto offsets = slot_offsets(store);
  Tensor cot = w * cur;  // d(-log N(z))/dz = z
  for (std::size_t b = blocks; b-- > 0;) {
    if (!factored[b].empty()) cot = hconcat(w * factored[b], cot);
    const Rk4Backward back = rk4_backward(*rev[b], fwd[b].record, cot, w);
    const auto& slots = model.block(b).param_indices();
    std::size_t k = 0;
    for (std::size_t slot : slots) {
      for (std::size_t i = offsets[slot]; i < offsets[slot + 1]; ++i) grad[i] += back.param_grad[k++];
    }
    cot = back.x0_cot;
  }
  if (cfg.discrete) {
    const DequantGrad dg = dequantize_backward(data.dq, model.dequant(), cot, w);
    grad[offsets[store.index_of("dequant.mean")]] += dg.d_mean;
    grad[offsets[store.index_of("dequant.log_std")]] += dg.d_log_std;
  }
  return loss;
}

double nll_bits_per_dim(const FlowModel& model, std::span<const TypedGraph> batch, Rng& rng,
                        const EvalOptions& opts) {
  if (batch.empty()) throw Error("nll_bits_per_dim: empty batch");
  double total = 0.0;
  for (const TypedGraph& g : batch) {
    const DataSide d = prepare(model, g, rng);
    const bool exact = g.states.size() <= opts.exact_trace_limit;
    const std::size_t reps = exact ? 1 : std::max<std::size_t>(1, opts.stochastic_samples);
    double lp = 0.0;
    auto fields = model.bind(g.nbrs);
    const FieldStack stack = make_stack(model, fields);
    for (std::size_t r = 0; r < reps; ++r) {
      lp += log_prob(stack, d.y, model.config().solver, exact ? TraceMode::kExact : TraceMode::kRademacher, rng)
                .log_prob;
    }
    lp /= static_cast<double>(reps);
    const double bpd = bits_per_dim(-lp + d.correction, g.states.size());
    if (!std::isfinite(bpd)) throw Error("nll_bits_per_dim: non-finite loss");
    total += bpd;
  }
  return total / static_cast<double>(batch.size());
}

double clip_global_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (double& g : grad) g *= s;
  }
  return norm;
}

Adam::Adam(const TrainConfig& cfg, std::size_t param_count) : cfg_(cfg) {
  state_.m.assign(param_count, 0.0);
  state_.v.assign(param_count, 0.0);
}

Adam::Adam(const TrainConfig& cfg, OptimizerState state) : cfg_(cfg), state_(std::move(state)) {}

double Adam::step(std::span<double> params, std::span<double> grad) {
  if (params.size() != state_.m.size() || grad.size() != state_.m.size()) {
    throw ShapeError("adam: parameter count mismatch");
  }
  const double norm = clip_global_norm(grad, cfg_.clip_norm);
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state_.m[i] = cfg_.beta1 * state_.m[i] + (1.0 - cfg_.beta1) * grad[i];
    state_.v[i] = cfg_.beta2 * state_.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double mhat = state_.m[i] / c1;
    const double vhat = state_.v[i] / c2;
    params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
  }
  return norm;
}

TrainResult train(FlowModel& model, std::span<const TypedGraph> data, const TrainConfig& cfg,
                  const OptimizerState* resume, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw Error("train: empty dataset");
  ParamStore& store = model.mutable_params();
  const std::size_t p = store.total_count();
  Adam adam = resume ? Adam(cfg, *resume) : Adam(cfg, p);
  FieldCache cache(model);
  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::vector<double> grad(p);
  std::size_t step = adam.state().step;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, 0x5000 + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sum = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double weight = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      Rng rng(mix_seed(cfg.seed, 0x10000000ULL + step));
      double batch_loss = 0.0;
      const std::vector<double> before = store.flatten();
      try {
        for (std::size_t i = start; i < end; ++i) {
          batch_loss += weight * graph_loss(model, cache, data[order[i]], cfg.solver, rng, grad, weight).bits_per_dim;
        }
        for (double g : grad) {
          if (!std::isfinite(g)) throw DivergenceError("gradient is not finite");
        }
      } catch (const DivergenceError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step) + ": " + e.what());
      }
      std::vector<double> flat = before;
      adam.step(flat, grad);
      bool finite = true;
      for (double v : flat) finite = finite && std::isfinite(v);
      if (!finite) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step) + ": parameters became non-finite");
      }
      store.assign_flat(flat);
      result.curve.push_back(LossRecord{epoch, step, batch_loss});
      epoch_sum += batch_loss;
      ++epoch_batches;
      ++step;
    }
    if (epoch_batches == 0) break;
    result.epoch_means.push_back(epoch_sum / static_cast<double>(epoch_batches));
    if (on_epoch) on_epoch(epoch, model, adam.state());
  }
  result.optimizer = adam.state();
  return result;
}

void write_loss_csv(std::ostream& out, std::span<const LossRecord> curve) {
  out << "epoch,step,nll_bits_per_dim\n";
  const auto old = out.precision(17);
  for (const auto& r : curve) out << r.epoch << ',' << r.step << ',' << r.bits_per_dim << '\n';
  out.precision(old);
}

}  // namespace cgf
