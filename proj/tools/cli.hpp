#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cgf::cli {

/// Runs one command line (without the program name). Returns the process exit code:
/// 0 success, 1 runtime or model failure, 2 usage or configuration error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct SelftestOptions {
  bool inject_fault = false;
};

struct CheckResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string failure;  // exception text when the check threw
};

/// Runs every diagnostic check (gradients, solvers, trace estimators, invertibility, adjoint).
std::vector<CheckResult> run_checks(const SelftestOptions& opts = {});

/// Runs the diagnostic checks and prints one line per check. Returns true when all pass.
bool selftest(const SelftestOptions& opts, std::ostream& out);

}  // namespace cgf::cli
