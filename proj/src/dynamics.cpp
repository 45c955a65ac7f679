#include "cgf/dynamics.hpp"

#include <cmath>

#include "cgf/error.hpp"

namespace cgf {

namespace {

MlpSlots make_mlp(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                  std::size_t out, Rng& rng) {
  auto gaussian = [&](std::size_t r, std::size_t c, double sd) {
    Tensor t(r, c);
    std::normal_distribution<double> dist(0.0, sd);
    for (double& v : t.data()) v = dist(rng);
    return t;
  };
  MlpSlots s;
  s.w1 = store.add(prefix + ".w1", gaussian(in, hidden, 1.0 / std::sqrt(static_cast<double>(in))));
  s.b1 = store.add(prefix + ".b1", Tensor(1, hidden));
  s.w2 = store.add(prefix + ".w2",
                   gaussian(hidden, out, 0.01 / std::sqrt(static_cast<double>(hidden))));
  s.b2 = store.add(prefix + ".b2", Tensor(1, out));
  return s;
}

MlpSlots find_mlp(const ParamStore& store, const std::string& prefix) {
  return {store.index_of(prefix + ".w1"), store.index_of(prefix + ".b1"),
          store.index_of(prefix + ".w2"), store.index_of(prefix + ".b2")};
}

struct Pair {
  Var value;
  Var tangent;
};

// in -> tanh(in W1 + b1) W2 + b2, optionally pushing a tangent through alongside.
Pair apply_mlp(Tape& tape, const ParamStore& store, const MlpSlots& s, Var in, Var in_dot) {
  Var w1 = tape.param(store, s.w1);
  Var w2 = tape.param(store, s.w2);
  Var h = tape.tanh(tape.affine(in, w1, tape.param(store, s.b1)));
  Var out = tape.affine(h, w2, tape.param(store, s.b2));
  if (!in_dot.valid()) return {out, {}};
  Var dh = tape.scale_shift(tape.mul(h, h), -1.0, 1.0);
  Var h_dot = tape.mul(dh, tape.affine(in_dot, w1));
  return {out, tape.affine(h_dot, w2)};
}

}  // namespace

DynamicsField DynamicsField::create(ParamStore& store, const std::string& prefix,
                                    const DynamicsSpec& spec, Rng& rng) {
  if (spec.dim == 0 || spec.hidden == 0 || spec.edge_types == 0) {
    throw Error("DynamicsSpec: dim, hidden and edge_types must be positive");
  }
  const std::size_t m = spec.dim;
  for (std::size_t k = 0; k < spec.edge_types; ++k) {
    make_mlp(store, prefix + ".edge" + std::to_string(k), 2 * m + 1, spec.hidden, m, rng);
  }
  make_mlp(store, prefix + ".unary", m + 1, spec.hidden, m, rng);
  return attach(store, prefix, spec);
}

DynamicsField DynamicsField::attach(const ParamStore& store, const std::string& prefix,
                                    const DynamicsSpec& spec) {
  DynamicsField f;
  f.spec_ = spec;
  const std::size_t m = spec.dim;
  auto check = [&](const MlpSlots& s, std::size_t in) {
    if (store.value(s.w1).rows() != in || store.value(s.w1).cols() != spec.hidden ||
        store.value(s.w2).rows() != spec.hidden || store.value(s.w2).cols() != m) {
      throw ShapeError("parameters under '" + prefix + "' do not match the dynamics spec");
    }
    for (auto i : {s.w1, s.b1, s.w2, s.b2}) f.params_.push_back(i);
  };
  for (std::size_t k = 0; k < spec.edge_types; ++k) {
    f.edge_nets_.push_back(find_mlp(store, prefix + ".edge" + std::to_string(k)));
    check(f.edge_nets_.back(), 2 * m + 1);
  }
  f.unary_net_ = find_mlp(store, prefix + ".unary");
  check(f.unary_net_, m + 1);
  return f;
}

std::size_t DynamicsField::param_count(const ParamStore& store) const {
  std::size_t c = 0;
  for (auto i : params_) c += store.value(i).size();
  return c;
}

FieldTape DynamicsField::record(const ParamStore& store, const Neighborhoods& nbrs,
                                bool with_trace) const {
  if (nbrs.edge_type_count() > spec_.edge_types) {
    throw Error("neighbourhoods use " + std::to_string(nbrs.edge_type_count()) +
                " edge types, field has " + std::to_string(spec_.edge_types));
  }
  const std::size_t n = nbrs.n();
  const std::size_t m = spec_.dim;
  FieldTape ft;
  ft.with_trace = with_trace;
  Tape& tape = ft.tape;
  ft.x = tape.input(n, m);
  ft.t = tape.input(1, 1);
  if (with_trace) ft.eps = tape.input(n, m);

  auto zeros = [&](std::size_t rows) { return tape.constant(Tensor(rows, 1)); };

  // Unary term.
  Var un_in = tape.concat_cols({ft.x, tape.broadcast(ft.t, n, 1)});
  Var un_dot;
  if (with_trace) un_dot = tape.concat_cols({ft.eps, zeros(n)});
  Pair unary = apply_mlp(tape, store, unary_net_, un_in, un_dot);

  // Messages, grouped by edge type; within a type ordered by receiver then list order.
  std::vector<Var> msgs, msg_dots;
  std::vector<std::uint32_t> receivers;
  for (std::size_t type = 0; type < spec_.edge_types; ++type) {
    std::vector<std::uint32_t> recv, send;
    for (std::size_t i = 0; i < n; ++i) {
      for (const Neighbor& nb : nbrs.of(i)) {
        if (nb.edge_type != type) continue;
        recv.push_back(static_cast<std::uint32_t>(i));
        send.push_back(nb.node);
      }
    }
    if (recv.empty()) continue;
    const std::size_t e = recv.size();
    Var in = tape.concat_cols({tape.gather_rows(ft.x, recv), tape.gather_rows(ft.x, send),
                               tape.broadcast(ft.t, e, 1)});
    Var in_dot;
    if (with_trace) {
      in_dot = tape.concat_cols({tape.gather_rows(ft.eps, recv), tape.gather_rows(ft.eps, send),
                                 zeros(e)});
    }
    Pair msg = apply_mlp(tape, store, edge_nets_[type], in, in_dot);
    msgs.push_back(msg.value);
    if (with_trace) msg_dots.push_back(msg.tangent);
    receivers.insert(receivers.end(), recv.begin(), recv.end());
  }

  auto aggregate = [&](std::vector<Var> parts) {
    Var stacked = parts.size() == 1 ? parts[0] : tape.concat_rows(std::move(parts));
    return spec_.aggregator == Aggregator::kSum ? tape.segment_sum(stacked, receivers, n)
                                                : tape.segment_mean(stacked, receivers, n);
  };

  if (msgs.empty()) {
    ft.f = unary.value;
  } else {
    ft.f = tape.add(unary.value, aggregate(msgs));
  }
  tape.mark_output(ft.f);
  if (with_trace) {
    Var f_dot = msgs.empty() ? unary.tangent : tape.add(unary.tangent, aggregate(msg_dots));
    ft.trace_rate = tape.sum_all(tape.mul(ft.eps, f_dot));
    tape.mark_output(ft.trace_rate);
  }
  return ft;
}

namespace {

void check_state(const Tensor& x, const Neighborhoods& nbrs, std::size_t m) {
  if (x.rows() != nbrs.n() || x.cols() != m) {
    throw ShapeError("field expects states " + std::to_string(nbrs.n()) + "x" + std::to_string(m) +
                     ", got " + x.shape_str());
  }
}

}  // namespace

Tensor eval_field(const DynamicsField& field, const ParamStore& store, const Tensor& x,
                  const Neighborhoods& nbrs, double t) {
  check_state(x, nbrs, field.spec().dim);
  FieldTape ft = field.record(store, nbrs, false);
  const std::vector<Tensor> in{x, Tensor::scalar(t)};
  ft.tape.forward(in, store);
  return ft.tape.value(ft.f);
}

FieldVjp field_vjp(const DynamicsField& field, const ParamStore& store, const Tensor& x,
                   const Neighborhoods& nbrs, double t, const Tensor& cot) {
  check_state(x, nbrs, field.spec().dim);
  FieldTape ft = field.record(store, nbrs, false);
  const std::vector<Tensor> in{x, Tensor::scalar(t)};
  ft.tape.forward(in, store);
  TapeGradients g = ft.tape.vjp(cot);
  return {std::move(g.inputs[0]), std::move(g.params)};
}

GraphField::GraphField(const DynamicsField& field, const ParamStore& store, Neighborhoods nbrs)
    : field_(field), store_(store), nbrs_(std::move(nbrs)), param_count_(field.param_count(store)) {}

FieldTape& GraphField::plain() {
  if (!plain_) plain_.emplace(field_.record(store_, nbrs_, false));
  return *plain_;
}

FieldTape& GraphField::traced() {
  if (!traced_) traced_.emplace(field_.record(store_, nbrs_, true));
  return *traced_;
}

void GraphField::flatten_into(const std::vector<Tensor>& grads, std::span<double> out) const {
  if (out.empty()) return;
  if (out.size() != param_count_) throw ShapeError("param_grad span has the wrong length");
  std::size_t off = 0;
  for (auto idx : field_.param_indices()) {
    const std::size_t sz = store_.value(idx).size();
    if (idx < grads.size() && !grads[idx].empty()) {
      for (std::size_t j = 0; j < sz; ++j) out[off + j] += grads[idx][j];
    }
    off += sz;
  }
}

Tensor GraphField::eval(const Tensor& x, double t) {
  check_state(x, nbrs_, cols());
  FieldTape& ft = plain();
  const std::vector<Tensor> in{x, Tensor::scalar(t)};
  ft.tape.forward(in, store_);
  return ft.tape.value(ft.f);
}

Tensor GraphField::vjp(const Tensor& x, double t, const Tensor& cot, std::span<double> param_grad) {
  check_state(x, nbrs_, cols());
  FieldTape& ft = plain();
  const std::vector<Tensor> in{x, Tensor::scalar(t)};
  ft.tape.forward(in, store_);
  TapeGradients g = ft.tape.vjp(cot);
  flatten_into(g.params, param_grad);
  return std::move(g.inputs[0]);
}

std::pair<Tensor, Tensor> GraphField::eval_and_vjp(const Tensor& x, double t, const Tensor& cot,
                                                  std::span<double> param_grad) {
  check_state(x, nbrs_, cols());
  FieldTape& ft = plain();
  const std::vector<Tensor> in{x, Tensor::scalar(t)};
  ft.tape.forward(in, store_);
  Tensor f = ft.tape.value(ft.f);
  TapeGradients g = ft.tape.vjp(cot);
  flatten_into(g.params, param_grad);
  return {std::move(f), std::move(g.inputs[0])};
}

double GraphField::exact_trace(const Tensor& x, double t) {
  check_state(x, nbrs_, cols());
  FieldTape& ft = plain();
  const std::vector<Tensor> in{x, Tensor::scalar(t)};
  ft.tape.forward(in, store_);
  double tr = 0.0;
  Tensor basis(x.rows(), x.cols());
  for (std::size_t j = 0; j < x.size(); ++j) {
    basis[j] = 1.0;
    tr += ft.tape.vjp(basis).inputs[0][j];
    basis[j] = 0.0;
  }
  return tr;
}

TraceEval GraphField::eval_with_trace(const Tensor& x, double t, const Tensor& eps) {
  check_state(x, nbrs_, cols());
  FieldTape& ft = traced();
  const std::vector<Tensor> in{x, Tensor::scalar(t), eps};
  ft.tape.forward(in, store_);
  return {ft.tape.value(ft.f), ft.tape.value(ft.trace_rate)[0]};
}

Tensor GraphField::vjp_with_trace(const Tensor& x, double t, const Tensor& eps, const Tensor& cot_f,
                                  double cot_trace, std::span<double> param_grad) {
  check_state(x, nbrs_, cols());
  FieldTape& ft = traced();
  const std::vector<Tensor> in{x, Tensor::scalar(t), eps};
  ft.tape.forward(in, store_);
  const std::vector<Tensor> cots{cot_f, Tensor::scalar(cot_trace)};
  TapeGradients g = ft.tape.vjp(cots);
  flatten_into(g.params, param_grad);
  return std::move(g.inputs[0]);
}

}  // namespace cgf
