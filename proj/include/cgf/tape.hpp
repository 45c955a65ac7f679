#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cgf/param_store.hpp"
#include "cgf/tensor.hpp"

namespace cgf {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

/// The closed set of primitive operations. Every kind has a VJP rule.
enum class OpKind : std::uint8_t {
  kInput,
  kParam,
  kConstant,
  kAffine,      // x * W (+ b)
  kTanh,
  kAdd,
  kMul,         // elementwise
  kScaleShift,  // a * x + b with scalar a, b
  kConcatCols,
  kConcatRows,
  kGatherRows,
  kSegmentSum,  // neighbour reduction: out[seg[r]] += x[r]
  kSegmentMean,
  kBroadcast,   // 1x1 -> rows x cols
  kSumAll,      // -> 1x1
};

const char* op_name(OpKind kind);

/// Raw op description accepted by Tape::append. The named builders below are thin wrappers.
struct OpSpec {
  OpKind kind = OpKind::kInput;
  std::vector<Var> args;
  double a = 0.0;
  double b = 0.0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t param_index = 0;
  std::shared_ptr<const std::vector<std::uint32_t>> index;
  std::shared_ptr<const Tensor> constant;
};

struct TapeGradients {
  std::vector<Tensor> inputs;  // one per declared input, in declaration order
  std::vector<Tensor> params;  // one per ParamStore slot; empty tensors for unused slots
};

/// Records a computation over the closed op set once, then replays it forward on new
/// inputs and pulls cotangents back through it. A tape is single-threaded.
class Tape {
 public:
  Var input(std::size_t rows, std::size_t cols);
  Var param(const ParamStore& store, std::size_t index);
  Var constant(Tensor value);
  Var affine(Var x, Var w, Var b = {});
  Var tanh(Var x);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale_shift(Var x, double scale, double shift);
  Var concat_cols(std::vector<Var> parts);
  Var concat_rows(std::vector<Var> parts);
  Var gather_rows(Var x, std::vector<std::uint32_t> rows);
  Var segment_sum(Var x, std::vector<std::uint32_t> segment, std::size_t segments);
  Var segment_mean(Var x, std::vector<std::uint32_t> segment, std::size_t segments);
  Var broadcast(Var scalar, std::size_t rows, std::size_t cols);
  Var sum_all(Var x);

  /// Validates and records an op. Throws ShapeError naming the op index on bad shapes,
  /// and Error on kinds outside the closed set.
  Var append(OpSpec spec);

  void mark_output(Var v);
  const std::vector<Var>& outputs() const { return outputs_; }
  const std::vector<Var>& inputs() const { return input_vars_; }
  std::size_t size() const { return ops_.size(); }
  std::size_t rows(Var v) const { return shapes_.at(v.id).first; }
  std::size_t cols(Var v) const { return shapes_.at(v.id).second; }

  /// Replays every op. `inputs` follow declaration order of input().
  void forward(std::span<const Tensor> inputs, const ParamStore& params);
  bool evaluated() const { return evaluated_; }
  const Tensor& value(Var v) const;

  /// v^T J for the last forward pass, one cotangent per marked output.
  TapeGradients vjp(std::span<const Tensor> output_cotangents);
  TapeGradients vjp(const Tensor& output_cotangent);

 private:
  Var push(OpSpec spec, std::size_t rows, std::size_t cols);
  void check_var(Var v, std::size_t op_index) const;

  std::vector<OpSpec> ops_;
  std::vector<std::pair<std::size_t, std::size_t>> shapes_;
  std::vector<Var> input_vars_;
  std::vector<Var> outputs_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::size_t param_slots_ = 0;
  bool evaluated_ = false;
};

/// Deliberate defects for mutation-testing the gradient checks.
enum class Fault { kNone, kFlipTanhVjpSign };
void set_fault(Fault fault);
Fault current_fault();

}  // namespace cgf
