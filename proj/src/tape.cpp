#include "cgf/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "cgf/error.hpp"

namespace cgf {

namespace {

std::atomic<Fault> g_fault{Fault::kNone};

void reshape(Tensor& t, std::size_t rows, std::size_t cols) {
  if (t.rows() != rows || t.cols() != cols) t = Tensor(rows, cols);
}

// Writes (fresh) or accumulates into a gradient buffer.
struct Sink {
  double* data;
  bool fresh;
  void put(std::size_t i, double v) const {
    if (fresh) {
      data[i] = v;
    } else {
      data[i] += v;
    }
  }
};

}  // namespace

void set_fault(Fault fault) { g_fault.store(fault); }
Fault current_fault() { return g_fault.load(); }

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kParam: return "param";
    case OpKind::kConstant: return "constant";
    case OpKind::kAffine: return "affine";
    case OpKind::kTanh: return "tanh";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kScaleShift: return "scale_shift";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kSegmentSum: return "segment_sum";
    case OpKind::kSegmentMean: return "segment_mean";
    case OpKind::kBroadcast: return "broadcast";
    case OpKind::kSumAll: return "sum_all";
  }
  return "unknown";
}

Var Tape::input(std::size_t rows, std::size_t cols) {
  OpSpec s;
  s.kind = OpKind::kInput;
  s.rows = rows;
  s.cols = cols;
  return append(std::move(s));
}

Var Tape::param(const ParamStore& store, std::size_t index) {
  OpSpec s;
  s.kind = OpKind::kParam;
  s.param_index = index;
  s.rows = store.value(index).rows();
  s.cols = store.value(index).cols();
  param_slots_ = std::max(param_slots_, store.size());
  return append(std::move(s));
}

Var Tape::constant(Tensor value) {
  OpSpec s;
  s.kind = OpKind::kConstant;
  s.constant = std::make_shared<const Tensor>(std::move(value));
  return append(std::move(s));
}

Var Tape::affine(Var x, Var w, Var b) {
  OpSpec s;
  s.kind = OpKind::kAffine;
  s.args = {x, w};
  if (b.valid()) s.args.push_back(b);
  return append(std::move(s));
}

Var Tape::tanh(Var x) {
  OpSpec s;
  s.kind = OpKind::kTanh;
  s.args = {x};
  return append(std::move(s));
}

Var Tape::add(Var a, Var b) {
  OpSpec s;
  s.kind = OpKind::kAdd;
  s.args = {a, b};
  return append(std::move(s));
}

Var Tape::mul(Var a, Var b) {
  OpSpec s;
  s.kind = OpKind::kMul;
  s.args = {a, b};
  return append(std::move(s));
}

Var Tape::scale_shift(Var x, double scale, double shift) {
  OpSpec s;
  s.kind = OpKind::kScaleShift;
  s.args = {x};
  s.a = scale;
  s.b = shift;
  return append(std::move(s));
}

Var Tape::concat_cols(std::vector<Var> parts) {
  OpSpec s;
  s.kind = OpKind::kConcatCols;
  s.args = std::move(parts);
  return append(std::move(s));
}

Var Tape::concat_rows(std::vector<Var> parts) {
  OpSpec s;
  s.kind = OpKind::kConcatRows;
  s.args = std::move(parts);
  return append(std::move(s));
}

Var Tape::gather_rows(Var x, std::vector<std::uint32_t> rows) {
  OpSpec s;
  s.kind = OpKind::kGatherRows;
  s.args = {x};
  s.index = std::make_shared<const std::vector<std::uint32_t>>(std::move(rows));
  return append(std::move(s));
}

Var Tape::segment_sum(Var x, std::vector<std::uint32_t> segment, std::size_t segments) {
  OpSpec s;
  s.kind = OpKind::kSegmentSum;
  s.args = {x};
  s.rows = segments;
  s.index = std::make_shared<const std::vector<std::uint32_t>>(std::move(segment));
  return append(std::move(s));
}

Var Tape::segment_mean(Var x, std::vector<std::uint32_t> segment, std::size_t segments) {
  OpSpec s;
  s.kind = OpKind::kSegmentMean;
  s.args = {x};
  s.rows = segments;
  s.index = std::make_shared<const std::vector<std::uint32_t>>(std::move(segment));
  return append(std::move(s));
}

Var Tape::broadcast(Var scalar, std::size_t rows, std::size_t cols) {
  OpSpec s;
  s.kind = OpKind::kBroadcast;
  s.args = {scalar};
  s.rows = rows;
  s.cols = cols;
  return append(std::move(s));
}

Var Tape::sum_all(Var x) {
  OpSpec s;
  s.kind = OpKind::kSumAll;
  s.args = {x};
  return append(std::move(s));
}

void Tape::check_var(Var v, std::size_t op_index) const {
  if (!v.valid() || v.id >= op_index) {
    throw Error("op " + std::to_string(op_index) + ": argument does not refer to an earlier op");
  }
}

Var Tape::push(OpSpec spec, std::size_t rows, std::size_t cols) {
  ops_.push_back(std::move(spec));
  shapes_.emplace_back(rows, cols);
  evaluated_ = false;
  return Var{static_cast<std::uint32_t>(ops_.size() - 1)};
}

Var Tape::append(OpSpec spec) {
  const std::size_t idx = ops_.size();
  auto fail = [&](const std::string& what) -> ShapeError {
    std::string msg = "op " + std::to_string(idx) + " (" + op_name(spec.kind) + "): " + what;
    for (std::size_t i = 0; i < spec.args.size(); ++i) {
      if (spec.args[i].valid() && spec.args[i].id < idx) {
        msg += (i == 0 ? " [" : ", ") + std::to_string(rows(spec.args[i])) + "x" +
               std::to_string(cols(spec.args[i]));
        if (i + 1 == spec.args.size()) msg += "]";
      }
    }
    return ShapeError(msg);
  };
  auto need_args = [&](std::size_t lo, std::size_t hi) {
    if (spec.args.size() < lo || spec.args.size() > hi) throw fail("wrong argument count");
    for (Var v : spec.args) check_var(v, idx);
  };

  switch (spec.kind) {
    case OpKind::kInput: {
      need_args(0, 0);
      input_vars_.push_back(Var{static_cast<std::uint32_t>(idx)});
      const auto r = spec.rows, c = spec.cols;
      return push(std::move(spec), r, c);
    }
    case OpKind::kParam: {
      need_args(0, 0);
      const auto r = spec.rows, c = spec.cols;
      param_slots_ = std::max(param_slots_, spec.param_index + 1);
      return push(std::move(spec), r, c);
    }
    case OpKind::kConstant: {
      need_args(0, 0);
      if (!spec.constant) throw fail("missing constant value");
      const auto r = spec.constant->rows(), c = spec.constant->cols();
      return push(std::move(spec), r, c);
    }
    case OpKind::kAffine: {
      need_args(2, 3);
      const Var x = spec.args[0], w = spec.args[1];
      if (cols(x) != rows(w)) throw fail("inner dimensions differ");
      if (spec.args.size() == 3) {
        const Var b = spec.args[2];
        if (rows(b) != 1 || cols(b) != cols(w)) throw fail("bias must be 1 x out");
      }
      const auto r = rows(x), c = cols(w);
      return push(std::move(spec), r, c);
    }
    case OpKind::kTanh:
    case OpKind::kScaleShift:
    case OpKind::kSumAll: {
      need_args(1, 1);
      const Var x = spec.args[0];
      if (spec.kind == OpKind::kSumAll) return push(std::move(spec), 1, 1);
      const auto r = rows(x), c = cols(x);
      return push(std::move(spec), r, c);
    }
    case OpKind::kAdd:
    case OpKind::kMul: {
      need_args(2, 2);
      const Var a = spec.args[0], b = spec.args[1];
      if (rows(a) != rows(b) || cols(a) != cols(b)) throw fail("operand shapes differ");
      const auto r = rows(a), c = cols(a);
      return push(std::move(spec), r, c);
    }
    case OpKind::kConcatCols: {
      need_args(1, SIZE_MAX);
      std::size_t c = 0;
      const std::size_t r = rows(spec.args[0]);
      for (Var v : spec.args) {
        if (rows(v) != r) throw fail("row counts differ");
        c += cols(v);
      }
      return push(std::move(spec), r, c);
    }
    case OpKind::kConcatRows: {
      need_args(1, SIZE_MAX);
      std::size_t r = 0;
      const std::size_t c = cols(spec.args[0]);
      for (Var v : spec.args) {
        if (cols(v) != c) throw fail("column counts differ");
        r += rows(v);
      }
      return push(std::move(spec), r, c);
    }
    case OpKind::kGatherRows: {
      need_args(1, 1);
      if (!spec.index) throw fail("missing row index");
      const std::size_t src_rows = rows(spec.args[0]);
      for (auto i : *spec.index) {
        if (i >= src_rows) throw fail("row index " + std::to_string(i) + " out of range");
      }
      const auto r = spec.index->size(), c = cols(spec.args[0]);
      return push(std::move(spec), r, c);
    }
    case OpKind::kSegmentSum:
    case OpKind::kSegmentMean: {
      need_args(1, 1);
      if (!spec.index) throw fail("missing segment index");
      if (spec.index->size() != rows(spec.args[0])) throw fail("segment index length differs");
      for (auto i : *spec.index) {
        if (i >= spec.rows) throw fail("segment id " + std::to_string(i) + " out of range");
      }
      const auto r = spec.rows, c = cols(spec.args[0]);
      return push(std::move(spec), r, c);
    }
    case OpKind::kBroadcast: {
      need_args(1, 1);
      if (rows(spec.args[0]) != 1 || cols(spec.args[0]) != 1) throw fail("expects a 1x1 operand");
      const auto r = spec.rows, c = spec.cols;
      return push(std::move(spec), r, c);
    }
  }
  throw Error("op " + std::to_string(idx) + ": kind " +
              std::to_string(static_cast<int>(spec.kind)) + " is not a recordable primitive");
}

void Tape::mark_output(Var v) {
  check_var(v, ops_.size());
  outputs_.push_back(v);
}

const Tensor& Tape::value(Var v) const {
  if (!evaluated_) throw Error("tape has not been evaluated");
  return values_.at(v.id);
}

void Tape::forward(std::span<const Tensor> inputs, const ParamStore& params) {
  if (inputs.size() != input_vars_.size()) {
    throw ShapeError("forward: expected " + std::to_string(input_vars_.size()) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
  values_.resize(ops_.size());
  std::size_t next_input = 0;
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    const OpSpec& op = ops_[i];
    const auto [r, c] = shapes_[i];
    Tensor& out = values_[i];
    auto arg = [&](std::size_t k) -> const Tensor& { return values_[op.args[k].id]; };
    switch (op.kind) {
      case OpKind::kInput: {
        const Tensor& in = inputs[next_input++];
        if (in.rows() != r || in.cols() != c) {
          throw ShapeError("op " + std::to_string(i) + " (input): expected " + std::to_string(r) +
                           "x" + std::to_string(c) + ", got " + in.shape_str());
        }
        out = in;
        break;
      }
      case OpKind::kParam: {
        const Tensor& p = params.value(op.param_index);
        if (p.rows() != r || p.cols() != c) {
          throw ShapeError("op " + std::to_string(i) + " (param '" + params.name(op.param_index) +
                           "'): expected " + std::to_string(r) + "x" + std::to_string(c) +
                           ", got " + p.shape_str());
        }
        out = p;
        break;
      }
      case OpKind::kConstant:
        out = *op.constant;
        break;
      case OpKind::kAffine: {
        const Tensor& x = arg(0);
        const Tensor& w = arg(1);
        reshape(out, r, c);
        const std::size_t k = x.cols();
        for (std::size_t row = 0; row < r; ++row) {
          double* o = out.row(row).data();
          if (op.args.size() == 3) {
            const double* b = arg(2).data().data();
            for (std::size_t j = 0; j < c; ++j) o[j] = b[j];
          } else {
            for (std::size_t j = 0; j < c; ++j) o[j] = 0.0;
          }
          const double* xr = x.row(row).data();
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double xv = xr[kk];
            const double* wr = w.row(kk).data();
            for (std::size_t j = 0; j < c; ++j) o[j] += xv * wr[j];
          }
        }
        break;
      }
      case OpKind::kTanh: {
        const Tensor& x = arg(0);
        reshape(out, r, c);
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = std::tanh(x[j]);
        break;
      }
      case OpKind::kAdd: {
        const Tensor& a = arg(0);
        const Tensor& b = arg(1);
        reshape(out, r, c);
        for (std::size_t j = 0; j < a.size(); ++j) out[j] = a[j] + b[j];
        break;
      }
      case OpKind::kMul: {
        const Tensor& a = arg(0);
        const Tensor& b = arg(1);
        reshape(out, r, c);
        for (std::size_t j = 0; j < a.size(); ++j) out[j] = a[j] * b[j];
        break;
      }
      case OpKind::kScaleShift: {
        const Tensor& x = arg(0);
        reshape(out, r, c);
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = op.a * x[j] + op.b;
        break;
      }
      case OpKind::kConcatCols: {
        reshape(out, r, c);
        std::size_t off = 0;
        for (std::size_t k = 0; k < op.args.size(); ++k) {
          const Tensor& p = arg(k);
          const std::size_t pc = p.cols();
          for (std::size_t row = 0; row < r; ++row) {
            const double* src = p.row(row).data();
            double* dst = out.row(row).data() + off;
            for (std::size_t j = 0; j < pc; ++j) dst[j] = src[j];
          }
          off += pc;
        }
        break;
      }
      case OpKind::kConcatRows: {
        reshape(out, r, c);
        std::size_t off = 0;
        for (std::size_t k = 0; k < op.args.size(); ++k) {
          const Tensor& p = arg(k);
          std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
          off += p.size();
        }
        break;
      }
      case OpKind::kGatherRows: {
        const Tensor& x = arg(0);
        reshape(out, r, c);
        const auto& idx = *op.index;
        for (std::size_t row = 0; row < r; ++row) {
          const double* src = x.row(idx[row]).data();
          double* dst = out.row(row).data();
          for (std::size_t j = 0; j < c; ++j) dst[j] = src[j];
        }
        break;
      }
      case OpKind::kSegmentSum:
      case OpKind::kSegmentMean: {
        const Tensor& x = arg(0);
        reshape(out, r, c);
        out.fill(0.0);
        const auto& seg = *op.index;
        for (std::size_t row = 0; row < x.rows(); ++row) {
          const double* src = x.row(row).data();
          double* dst = out.row(seg[row]).data();
          for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
        if (op.kind == OpKind::kSegmentMean) {
          std::vector<std::size_t> count(r, 0);
          for (auto s : seg) ++count[s];
          for (std::size_t row = 0; row < r; ++row) {
            if (count[row] == 0) continue;
            const double inv = 1.0 / static_cast<double>(count[row]);
            for (double& v : out.row(row)) v *= inv;
          }
        }
        break;
      }
      case OpKind::kBroadcast: {
        reshape(out, r, c);
        out.fill(arg(0)[0]);
        break;
      }
      case OpKind::kSumAll: {
        const Tensor& x = arg(0);
        double s = 0.0;
        for (double v : x.data()) s += v;
        reshape(out, 1, 1);
        out[0] = s;
        break;
      }
    }
  }
  evaluated_ = true;
}

TapeGradients Tape::vjp(const Tensor& output_cotangent) {
  return vjp(std::span<const Tensor>(&output_cotangent, 1));
}

TapeGradients Tape::vjp(std::span<const Tensor> output_cotangents) {
  if (!evaluated_) throw Error("vjp: tape has not been evaluated");
  if (output_cotangents.size() != outputs_.size()) {
    throw ShapeError("vjp: expected " + std::to_string(outputs_.size()) + " cotangents, got " +
                     std::to_string(output_cotangents.size()));
  }
  const std::size_t n = ops_.size();
  grads_.resize(n);
  std::vector<char> has(n, 0);

  // Which ops can reach an input or parameter.
  std::vector<char> live(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const OpKind k = ops_[i].kind;
    if (k == OpKind::kInput || k == OpKind::kParam) {
      live[i] = 1;
    } else {
      for (Var a : ops_[i].args) live[i] |= live[a.id];
    }
  }

  auto sink = [&](Var v) -> Sink {
    Tensor& g = grads_[v.id];
    const auto [r, c] = shapes_[v.id];
    reshape(g, r, c);
    const bool fresh = !has[v.id];
    has[v.id] = 1;
    return Sink{g.data().data(), fresh};
  };
  // Zeroed sink for scatter-style accumulation.
  auto zeroed = [&](Var v) -> double* {
    Tensor& g = grads_[v.id];
    const auto [r, c] = shapes_[v.id];
    reshape(g, r, c);
    if (!has[v.id]) g.fill(0.0);
    has[v.id] = 1;
    return g.data().data();
  };

  for (std::size_t k = 0; k < outputs_.size(); ++k) {
    const Var o = outputs_[k];
    const Tensor& cot = output_cotangents[k];
    if (cot.rows() != rows(o) || cot.cols() != cols(o)) {
      throw ShapeError("vjp: cotangent " + std::to_string(k) + " has shape " + cot.shape_str() +
                       ", output is " + std::to_string(rows(o)) + "x" + std::to_string(cols(o)));
    }
    Sink s = sink(o);
    for (std::size_t j = 0; j < cot.size(); ++j) s.put(j, cot[j]);
  }

  const double tanh_sign = current_fault() == Fault::kFlipTanhVjpSign ? -1.0 : 1.0;

  for (std::size_t ii = n; ii-- > 0;) {
    if (!has[ii] || !live[ii]) continue;
    const OpSpec& op = ops_[ii];
    const Tensor& g = grads_[ii];
    const auto [r, c] = shapes_[ii];
    auto arg_live = [&](std::size_t k) { return live[op.args[k].id] != 0; };
    switch (op.kind) {
      case OpKind::kInput:
      case OpKind::kParam:
      case OpKind::kConstant:
        break;
      case OpKind::kAffine: {
        const Tensor& x = values_[op.args[0].id];
        const Tensor& w = values_[op.args[1].id];
        const std::size_t kdim = x.cols();
        if (arg_live(0)) {
          Sink dx = sink(op.args[0]);
          for (std::size_t row = 0; row < r; ++row) {
            const double* gr = g.row(row).data();
            for (std::size_t kk = 0; kk < kdim; ++kk) {
              const double* wr = w.row(kk).data();
              double s = 0.0;
              for (std::size_t j = 0; j < c; ++j) s += gr[j] * wr[j];
              dx.put(row * kdim + kk, s);
            }
          }
        }
        if (arg_live(1)) {
          double* dw = zeroed(op.args[1]);
          for (std::size_t row = 0; row < r; ++row) {
            const double* gr = g.row(row).data();
            const double* xr = x.row(row).data();
            for (std::size_t kk = 0; kk < kdim; ++kk) {
              const double xv = xr[kk];
              double* d = dw + kk * c;
              for (std::size_t j = 0; j < c; ++j) d[j] += xv * gr[j];
            }
          }
        }
        if (op.args.size() == 3 && arg_live(2)) {
          double* db = zeroed(op.args[2]);
          for (std::size_t row = 0; row < r; ++row) {
            const double* gr = g.row(row).data();
            for (std::size_t j = 0; j < c; ++j) db[j] += gr[j];
          }
        }
        break;
      }
      case OpKind::kTanh: {
        if (!arg_live(0)) break;
        const Tensor& y = values_[ii];
        Sink dx = sink(op.args[0]);
        for (std::size_t j = 0; j < g.size(); ++j) dx.put(j, tanh_sign * g[j] * (1.0 - y[j] * y[j]));
        break;
      }
      case OpKind::kAdd: {
        for (std::size_t k = 0; k < 2; ++k) {
          if (!arg_live(k)) continue;
          Sink d = sink(op.args[k]);
          for (std::size_t j = 0; j < g.size(); ++j) d.put(j, g[j]);
        }
        break;
      }
      case OpKind::kMul: {
        const Tensor& a = values_[op.args[0].id];
        const Tensor& b = values_[op.args[1].id];
        if (arg_live(0)) {
          Sink d = sink(op.args[0]);
          for (std::size_t j = 0; j < g.size(); ++j) d.put(j, g[j] * b[j]);
        }
        if (arg_live(1)) {
          Sink d = sink(op.args[1]);
          for (std::size_t j = 0; j < g.size(); ++j) d.put(j, g[j] * a[j]);
        }
        break;
      }
      case OpKind::kScaleShift: {
        if (!arg_live(0)) break;
        Sink d = sink(op.args[0]);
        for (std::size_t j = 0; j < g.size(); ++j) d.put(j, op.a * g[j]);
        break;
      }
      case OpKind::kConcatCols: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < op.args.size(); ++k) {
          const std::size_t pc = cols(op.args[k]);
          if (arg_live(k)) {
            Sink d = sink(op.args[k]);
            for (std::size_t row = 0; row < r; ++row) {
              const double* src = g.row(row).data() + off;
              for (std::size_t j = 0; j < pc; ++j) d.put(row * pc + j, src[j]);
            }
          }
          off += pc;
        }
        break;
      }
      case OpKind::kConcatRows: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < op.args.size(); ++k) {
          const std::size_t sz = rows(op.args[k]) * cols(op.args[k]);
          if (arg_live(k)) {
            Sink d = sink(op.args[k]);
            for (std::size_t j = 0; j < sz; ++j) d.put(j, g[off + j]);
          }
          off += sz;
        }
        break;
      }
      case OpKind::kGatherRows: {
        if (!arg_live(0)) break;
        double* dx = zeroed(op.args[0]);
        const auto& idx = *op.index;
        for (std::size_t row = 0; row < r; ++row) {
          const double* gr = g.row(row).data();
          double* d = dx + static_cast<std::size_t>(idx[row]) * c;
          for (std::size_t j = 0; j < c; ++j) d[j] += gr[j];
        }
        break;
      }
      case OpKind::kSegmentSum:
      case OpKind::kSegmentMean: {
        if (!arg_live(0)) break;
        const auto& seg = *op.index;
        std::vector<double> scale(r, 1.0);
        if (op.kind == OpKind::kSegmentMean) {
          std::vector<std::size_t> count(r, 0);
          for (auto s : seg) ++count[s];
          for (std::size_t row = 0; row < r; ++row) {
            scale[row] = count[row] ? 1.0 / static_cast<double>(count[row]) : 0.0;
          }
        }
        Sink d = sink(op.args[0]);
        for (std::size_t row = 0; row < seg.size(); ++row) {
          const double* gr = g.row(seg[row]).data();
          const double sc = scale[seg[row]];
          for (std::size_t j = 0; j < c; ++j) d.put(row * c + j, sc * gr[j]);
        }
        break;
      }
      case OpKind::kBroadcast: {
        if (!arg_live(0)) break;
        double s = 0.0;
        for (double v : g.data()) s += v;
        Sink d = sink(op.args[0]);
        d.put(0, s);
        break;
      }
      case OpKind::kSumAll: {
        if (!arg_live(0)) break;
        Sink d = sink(op.args[0]);
        const std::size_t sz = rows(op.args[0]) * cols(op.args[0]);
        for (std::size_t j = 0; j < sz; ++j) d.put(j, g[0]);
        break;
      }
    }
  }

  TapeGradients out;
  out.inputs.reserve(input_vars_.size());
  for (Var v : input_vars_) {
    if (has[v.id]) {
      out.inputs.push_back(grads_[v.id]);
    } else {
      out.inputs.emplace_back(rows(v), cols(v));
    }
  }
  out.params.resize(param_slots_);
  for (std::size_t i = 0; i < n; ++i) {
    if (ops_[i].kind != OpKind::kParam) continue;
    Tensor& dst = out.params[ops_[i].param_index];
    if (dst.empty()) dst = Tensor(shapes_[i].first, shapes_[i].second);
    if (has[i]) dst += grads_[i];
  }
  return out;
}

}  // namespace cgf
