#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace detcal {

/// Returns f(x) and writes the gradient into `grad` (same size as x).
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct OptimizerOptions {
  int max_iterations = 1000;
  /// Stop once the infinity norm of the gradient drops below this.
  double gradient_tolerance = 1e-6;
  int history = 10;
  int max_line_search = 50;
};

struct OptimizerResult {
  std::vector<double> x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
};

/// Limited-memory BFGS with a backtracking Armijo line search. Deterministic:
/// no randomness, fixed evaluation order.
OptimizerResult minimize_lbfgs(const Objective& objective, std::vector<double> x0,
                               const OptimizerOptions& opts = {});

}  // namespace detcal
