#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgf/param_store.hpp"
#include "cgf/tape.hpp"

namespace cgf {

struct GradCheckEntry {
  std::string name;  // "input[k]" or the parameter name
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool passed = false;
  double max_error() const;
};

/// Relative error with a small absolute floor so exact zeros compare cleanly.
double relative_error(double a, double b, double floor = 1e-3);

/// Compares tape VJPs against central differences of L = sum_k <w_k, output_k> with
/// seeded random weights w. Every input and every parameter the tape touches is checked.
GradCheckReport grad_check(Tape& tape, const std::vector<Tensor>& inputs, const ParamStore& params,
                           double tolerance, std::uint64_t seed, double step = 1e-5);

/// Same, with inputs drawn uniformly from [-2, 2] using `seed`.
GradCheckReport grad_check(Tape& tape, const ParamStore& params, double tolerance,
                           std::uint64_t seed, double step = 1e-5);

}  // namespace cgf
