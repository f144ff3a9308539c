#pragma once

// Self-checks run by `linkrate validate`: analytic identities, the exact
// oracle against the bound machinery, and (full level) Monte Carlo.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "linkrate/exact_oracle.hpp"
#include "linkrate/markov_link.hpp"
#include "linkrate/overhead_rate.hpp"
#include "linkrate/parallel.hpp"
#include "linkrate/simulator.hpp"

namespace linkrate {

enum class ValidationLevel { fast, full };

struct ValidationOptions {
  ValidationLevel level = ValidationLevel::fast;
  std::uint64_t seed = 20261019;
  // Added to every recursion coefficient before the closed-form comparison;
  // a nonzero value must make that check fail.
  double inject_fault = 0.0;
  long mc_steps = 10'000'000;
};

// measured <= tolerance passes; measured is a worst-case error or excess.
struct CheckResult {
  std::string name;
  double measured;
  double tolerance;
  bool passed;
  std::string detail;
};

// 20 x 20 grid u, d in {0.025, 0.075, ..., 0.975}.
inline std::vector<LinkParams> standard_grid() {
  std::vector<LinkParams> grid;
  for (int i = 0; i < 20; ++i)
    for (int k = 0; k < 20; ++k) grid.emplace_back(0.025 + 0.05 * i, 0.025 + 0.05 * k);
  return grid;
}

inline const std::vector<LinkParams>& oracle_points() {
  static const std::vector<LinkParams> points{LinkParams(0.5, 0.5), LinkParams(0.3, 0.1),
                                              LinkParams(0.9, 0.9), LinkParams(0.05, 0.05),
                                              LinkParams(0.7, 0.2)};
  return points;
}

namespace detail {

inline std::string format_param(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

inline CheckResult finish(std::string name, double measured, double tolerance, std::string detail = {}) {
  const bool ok = measured <= tolerance;  // NaN fails
  return {std::move(name), measured, tolerance, ok, std::move(detail)};
}

inline std::string at(const LinkParams& p) {
  return "u=" + format_param(p.u()) + " d=" + format_param(p.d());
}

inline CheckResult check_exact_special_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pick(0.01, 0.99);
  double worst = 0.0;
  std::string where;
  for (int i = 0; i < 10; ++i) {
    const double u = pick(rng);
    const LinkParams p(u, 1.0 - u);
    const double exact = link_entropy(p) / stationary(p).down;
    const RateEstimate est = entropy_rate(p, 1e-12, 40);
    const BoundsSequence b = bounds(p, 40);
    double err = std::abs(est.value - exact);
    for (int j = 1; j <= 40; ++j) err = std::max(err, std::abs(b.upper(j) - b.lower(j)));
    if (err >= worst) {
      worst = err;
      where = at(p);
    }
  }
  return finish("exact_special_case", worst, 1e-12, where);
}

inline CheckResult check_r_closed_form(double fault) {
  double worst = 0.0;
  std::string where;
  for (const auto& p : standard_grid()) {
    const RjTable table(p, 3);
    for (int j = 1; j <= 3; ++j) {
      const double err = std::abs(table.r(j) + fault - rj_closed_form(p, j));
      if (err >= worst) {
        worst = err;
        where = at(p) + " j=" + std::to_string(j);
      }
    }
  }
  return finish("r_closed_form", worst, 1e-10, where);
}

inline CheckResult check_bracketing() {
  double worst = 0.0;
  std::string where;
  for (const auto& p : standard_grid()) {
    const BoundsSequence b = bounds(p, 41);
    for (int j = 1; j <= 40; ++j) {
      const double v = std::max({b.lower(j) - b.lower(j + 1), b.upper(j + 1) - b.upper(j),
                                 b.lower(j) - b.upper(j), 0.0});
      if (v > worst) {
        worst = v;
        where = at(p) + " j=" + std::to_string(j);
      }
    }
  }
  return finish("bracketing", worst, 1e-12, where);
}

inline CheckResult check_convergence_slope() {
  double worst = -std::numeric_limits<double>::infinity();
  std::string where;
  for (const auto& p : {LinkParams(0.3, 0.1), LinkParams(0.9, 0.9), LinkParams(0.05, 0.05)}) {
    const ConvergenceFit fit = convergence_fit(bounds(p, 40), 4, 40);
    const double excess = fit.slope - (fit.reference_slope + 0.05);
    if (excess > worst) {
      worst = excess;
      where = at(p) + " slope=" + format_param(fit.slope);
    }
  }
  return finish("convergence_slope", worst, 0.0, where);
}

inline CheckResult check_stationary_pmf() {
  double worst = 0.0;
  for (const auto& p : oracle_points()) {
    const auto [up, down] = stationary(p);
    for (int t = 1; t <= 10; ++t) {
      const HistoryLaw law = oracle_joint(p, t, 1);
      for (int m = 0; m < t; ++m)
        worst = std::max(worst, std::abs(law.probability({m}) - down * std::pow(up, m)));
    }
  }
  return finish("oracle_stationary_pmf", worst, 1e-12);
}

inline CheckResult check_dp_vs_triangle(int t_max) {
  double worst = 0.0;
  for (const auto& p : oracle_points()) {
    for (int t = 1; t <= t_max; ++t) {
      const int window = std::min(t, 3);
      const HistoryLaw brute = triangle_joint(p, t, window);
      for (int j = 1; j <= window; ++j)
        worst = std::max(worst, max_abs_difference(oracle_joint(p, t, j), brute.keep_recent(j)));
    }
  }
  return finish("oracle_dp_vs_triangle", worst, 1e-12, "t<=" + std::to_string(t_max));
}

inline CheckResult check_record_probability() {
  double worst = 0.0;
  for (const auto& p : oracle_points()) {
    const RjTable table(p, 8);
    for (int j = 1; j <= 8; ++j)
      worst = std::max(worst, std::abs(stationary_record_probability(p, j) - table.p(j)));
  }
  return finish("oracle_record_probability", worst, 1e-10);
}

inline CheckResult check_window_entropy() {
  double worst = 0.0;
  for (const auto& p : oracle_points()) {
    const BoundsSequence b = bounds(p, 3);
    for (int j = 1; j <= 3; ++j)
      worst = std::max(worst, std::abs(stationary_conditional_entropy(p, j).value - b.upper(j)));
  }
  return finish("oracle_window_entropy", worst, 1e-9);
}

inline CheckResult check_dual_path(std::uint64_t seed) {
  double mismatches = 0.0;
  for (const auto& p : oracle_points()) {
    SimConfig c{p};
    c.horizon = 100;
    c.burn_in = 0;
    c.seed = seed;
    const auto a = simulate_m_trace(c).values;
    const auto b = simulate_m_trace_spacetime(c).values;
    for (std::size_t i = 0; i < a.size(); ++i) mismatches += a[i] != b[i];
  }
  return finish("dual_path_traces", mismatches, 0.0);
}

struct MonteCarloRun {
  MTrace trace;
  RjTable table;
  BoundsSequence bounds;
};

inline CheckResult check_mc_records(const MonteCarloRun& run) {
  double worst = 0.0;
  for (int j = 1; j <= 5; ++j) {
    const Estimate e = empirical_pj(run.trace, j);
    worst = std::max(worst, std::abs(e.value - run.table.p(j)) / e.stderr_);
  }
  return finish("mc_record_probability", worst, 3.0, "measured in batch-means sigmas");
}

inline CheckResult check_mc_plugin(const MonteCarloRun& run) {
  const PluginEntropy h = plugin_conditional_entropy(run.trace, 2);
  const double delta = 3.0 * h.stderr_ + h.bias_bound;
  const double outside = std::max({run.bounds.lower(2) - delta - h.value, h.value - run.bounds.upper(2) - delta, 0.0});
  return finish("mc_plugin_entropy", outside, 0.0, "estimate=" + format_param(h.value));
}

}  // namespace detail

inline std::vector<CheckResult> run_validation(const ValidationOptions& options) {
  std::vector<std::function<std::vector<CheckResult>()>> tasks{
      [&] { return std::vector{detail::check_exact_special_case(options.seed)}; },
      [&] { return std::vector{detail::check_r_closed_form(options.inject_fault)}; },
      [] { return std::vector{detail::check_bracketing()}; },
      [] { return std::vector{detail::check_convergence_slope()}; },
      [] { return std::vector{detail::check_stationary_pmf()}; },
      [&] {
        return std::vector{detail::check_dp_vs_triangle(options.level == ValidationLevel::full ? 6 : 5)};
      },
      [] { return std::vector{detail::check_record_probability()}; },
      [] { return std::vector{detail::check_window_entropy()}; },
      [&] { return std::vector{detail::check_dual_path(options.seed)}; },
  };
  if (options.level == ValidationLevel::full) {
    tasks.emplace_back([&] {
      const LinkParams p(0.3, 0.1);
      SimConfig c{p};
      c.horizon = options.mc_steps + c.burn_in;
      c.seed = options.seed;
      const detail::MonteCarloRun run{simulate_m_trace(c), RjTable(p, 5), bounds(p, 2)};
      return std::vector{detail::check_mc_records(run), detail::check_mc_plugin(run)};
    });
  }
  const auto groups = parallel_map<std::vector<CheckResult>>(tasks.size(), [&](std::size_t i) { return tasks[i](); });
  std::vector<CheckResult> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

}  // namespace linkrate
