#include "detcal/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace detcal {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double inf_norm(const std::vector<double>& a) {
  double m = 0.0;
  for (const double v : a) m = std::max(m, std::abs(v));
  return m;
}

struct Pair {
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

}  // namespace

OptimizerResult minimize_lbfgs(const Objective& objective, std::vector<double> x0,
                               const OptimizerOptions& opts) {
  const std::size_t n = x0.size();
  OptimizerResult res;
  res.x = std::move(x0);
  std::vector<double> g(n);
  double f = objective(res.x, g);
  res.value = f;
  res.gradient_norm = inf_norm(g);
  if (!std::isfinite(f)) {
    res.stop_reason = "non-finite objective at start";
    return res;
  }

  std::deque<Pair> memory;
  std::vector<double> d(n), x_new(n), g_new(n), alpha(static_cast<std::size_t>(opts.history));

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    res.gradient_norm = inf_norm(g);
    if (res.gradient_norm <= opts.gradient_tolerance) {
      res.converged = true;
      res.stop_reason = "gradient tolerance reached";
      return res;
    }

    // Two-loop recursion for d = -H g.
    d = g;
    for (std::size_t k = memory.size(); k-- > 0;) {
      alpha[k] = memory[k].rho * dot(memory[k].s, d);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[k] * memory[k].y[i];
    }
    double gamma = 1.0;
    if (!memory.empty()) {
      gamma = dot(memory.back().s, memory.back().y) / dot(memory.back().y, memory.back().y);
    } else {
      gamma = 1.0 / std::max(1.0, std::sqrt(dot(g, g)));
    }
    for (auto& v : d) v *= gamma;
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const double beta = memory[k].rho * dot(memory[k].y, d);
      for (std::size_t i = 0; i < n; ++i) d[i] += (alpha[k] - beta) * memory[k].s[i];
    }
    for (auto& v : d) v = -v;

    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      // Lost descent; restart from steepest descent.
      memory.clear();
      const double scale = 1.0 / std::max(1.0, std::sqrt(dot(g, g)));
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i] * scale;
      slope = dot(g, d);
    }

    constexpr double kArmijo = 1e-4;
    double step = 1.0;
    bool accepted = false;
    double f_new = f;
    for (int ls = 0; ls < opts.max_line_search; ++ls) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = res.x[i] + step * d[i];
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.stop_reason = "line search failed";
      return res;
    }

    Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = x_new[i] - res.x[i];
      p.y[i] = g_new[i] - g[i];
    }
    const double sy = dot(p.s, p.y);
    if (sy > 1e-12 * std::sqrt(dot(p.s, p.s) * dot(p.y, p.y))) {
      p.rho = 1.0 / sy;
      memory.push_back(std::move(p));
      if (memory.size() > static_cast<std::size_t>(opts.history)) memory.pop_front();
    }

    res.x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    res.value = f;
  }
  res.gradient_norm = inf_norm(g);
  res.converged = res.gradient_norm <= opts.gradient_tolerance;
  res.stop_reason = res.converged ? "gradient tolerance reached" : "iteration cap reached";
  return res;
}

}  // namespace detcal
