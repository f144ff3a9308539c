#pragma once

// `linkrate` command-line front end. run() is the whole program minus main,
// so it can be driven from tests with captured streams.
//
// Exit codes: 0 ok, 2 usage or domain error, 3 non-convergence, 4 I/O,
// 5 validation failure.

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "linkrate/error.hpp"
#include "linkrate/markov_link.hpp"
#include "linkrate/overhead_rate.hpp"
#include "linkrate/parallel.hpp"
#include "linkrate/run_record.hpp"
#include "linkrate/simulator.hpp"
#include "linkrate/validation.hpp"

namespace linkrate::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kNotConverged = 3, kIo = 4, kValidation = 5 };

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kSweepCsvHeader = "u,d,base,rate,half_width,lower,upper,j_used,converged,gap1";

// "a:b:n" -> n evenly spaced values from a to b inclusive.
inline std::vector<double> parse_grid_axis(const std::string& spec) {
  static const std::regex pattern(R"(^\s*([^:]+):([^:]+):([0-9]+)\s*$)");
  std::smatch m;
  if (!std::regex_match(spec, m, pattern)) throw DomainError("grid axis must look like a:b:n, got '" + spec + "'");
  double a = 0.0;
  double b = 0.0;
  try {
    const std::string lo = m[1].str();
    const std::string hi = m[2].str();
    std::size_t used_a = 0;
    std::size_t used_b = 0;
    a = std::stod(lo, &used_a);
    b = std::stod(hi, &used_b);
    if (used_a != lo.size() || used_b != hi.size()) throw std::invalid_argument("trailing text");
  } catch (const std::logic_error&) {
    throw DomainError("grid axis bounds are not numbers: '" + spec + "'");
  }
  const long n = std::stol(m[3].str());
  if (n < 1 || n > 100000) throw DomainError("grid axis count must lie in [1, 100000]");
  if (n == 1 && a != b) throw DomainError("a single-point axis needs a == b");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) out.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  return out;
}

namespace detail {

struct Common {
  double u = 0.0;
  double d = 0.0;
  std::string base = "bits";
  std::string format = "json";
  std::string out_path;

  LinkParams params() const { return LinkParams(u, d, parse_entropy_base(base)); }
};

inline void add_params(CLI::App* cmd, Common& c) {
  cmd->add_option("--u", c.u, "up-rate u (closed -> open)")->required();
  cmd->add_option("--d", c.d, "down-rate d (open -> closed)")->required();
}

inline void add_output(CLI::App* cmd, Common& c, const std::string& default_format) {
  c.format = default_format;
  cmd->add_option("--base", c.base, "entropy unit")->check(CLI::IsMember({"bits", "nats"}));
  cmd->add_option("--format", c.format, "output format")->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--out", c.out_path, "write output to this file instead of stdout");
}

// Opens the requested sink; stdout when no path is given.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw IoError("cannot open '" + path + "' for writing");
      stream_ = file_.get();
    }
  }
  std::ostream& stream() { return *stream_; }
  void finish(const std::string& path) {
    stream_->flush();
    if (!*stream_) throw IoError("write to '" + (path.empty() ? std::string("stdout") : path) + "' failed");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

inline void emit(const RunRecord& record, const Common& c, std::ostream& out) {
  Sink sink(c.out_path, out);
  if (c.format == "csv") {
    write_record_csv(sink.stream(), record);
  } else {
    write_record_json(sink.stream(), record);
  }
  sink.finish(c.out_path);
}

struct RateArgs : Common {
  double halfwidth = 1e-9;
  int jcap = 256;
};

inline int cmd_rate(const RateArgs& a, std::ostream& out) {
  const LinkParams p = a.params();
  const RateEstimate est = entropy_rate(p, a.halfwidth, a.jcap);
  RunRecord r = make_record("rate", record_params(p));
  r.settings = {{"halfwidth", a.halfwidth}, {"jcap", a.jcap}};
  r.outputs = {{"rate", est.value},        {"half_width", est.half_width},
               {"lower", est.lower},       {"upper", est.upper},
               {"j_used", est.j_used},     {"converged", est.converged},
               {"identity_residual", est.identity_residual}};
  emit(r, a, out);
  return est.converged ? kOk : kNotConverged;
}

struct BoundsArgs : Common {
  int jmax = 20;
};

inline int cmd_bounds(const BoundsArgs& a, std::ostream& out) {
  const LinkParams p = a.params();
  if (a.jmax < 1) throw DomainError("--jmax must be >= 1");
  const BoundsSequence seq = bounds(p, a.jmax);
  const RjTable table(p, a.jmax);
  nlohmann::json j = nlohmann::json::array(), lower = j, upper = j, gap = j, r_col = j, p_col = j, rates = j;
  for (int k = 1; k <= a.jmax; ++k) {
    j.push_back(k);
    lower.push_back(seq.lower(k));
    upper.push_back(seq.upper(k));
    gap.push_back(seq.gap(k));
    r_col.push_back(table.r(k));
    p_col.push_back(table.p(k));
    rates.push_back(seq.jstep_rate(k));
  }
  RunRecord r = make_record("bounds", record_params(p));
  r.settings = {{"jmax", a.jmax}, {"tol", table.tolerance()}};
  r.outputs = {{"j", j},         {"lower", lower}, {"upper", upper},     {"gap", gap},
               {"r", r_col},     {"p", p_col},     {"jstep_rate", rates}};
  nlohmann::json fit = nullptr;
  if (a.jmax >= 4) {
    try {
      const ConvergenceFit f = convergence_fit(seq, 4, std::min(a.jmax, 40));
      fit = {{"exact", f.exact},   {"slope", f.slope},
             {"c", f.c_fit},       {"points", f.points},
             {"reference_slope", f.reference_slope}};
    } catch (const InsufficientDataError&) {
      // too few resolvable gaps: leave the fit out
    }
  }
  r.outputs["fit"] = fit;
  emit(r, a, out);
  return kOk;
}

struct SweepArgs : Common {
  std::string u_axis;
  std::string d_axis;
  double halfwidth = 1e-9;
  int jcap = 256;
};

struct SweepRow {
  LinkParams params{0.5, 0.5};
  RateEstimate est{};
  double gap1 = 0.0;
};

inline int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const EntropyBase base = parse_entropy_base(a.base);
  std::vector<LinkParams> points;
  for (double u : parse_grid_axis(a.u_axis))
    for (double d : parse_grid_axis(a.d_axis)) points.emplace_back(u, d, base);
  if (!(a.halfwidth > 0.0)) throw DomainError("--halfwidth must be positive");
  if (a.jcap < 1) throw DomainError("--jcap must be >= 1");

  Sink sink(a.out_path, out);  // fail on the path before doing the work
  const auto rows = parallel_map<SweepRow>(points.size(), [&](std::size_t i) {
    const LinkParams& p = points[i];
    return SweepRow{p, entropy_rate(p, a.halfwidth, a.jcap), bounds(p, 1).gap(1)};
  });
  bool all_converged = true;
  for (const auto& row : rows) all_converged = all_converged && row.est.converged;

  if (a.format == "csv") {
    std::ostream& os = sink.stream();
    os << kSweepCsvHeader << '\n';
    for (const auto& row : rows) {
      os << format_double(row.params.u()) << ',' << format_double(row.params.d()) << ','
         << to_string(base) << ',' << format_double(row.est.value) << ','
         << format_double(row.est.half_width) << ',' << format_double(row.est.lower) << ','
         << format_double(row.est.upper) << ',' << row.est.j_used << ',' << (row.est.converged ? 1 : 0)
         << ',' << format_double(row.gap1) << '\n';
    }
  } else {
    RunRecord r = make_record("sweep");
    r.settings = {{"u", a.u_axis}, {"d", a.d_axis}, {"halfwidth", a.halfwidth},
                  {"jcap", a.jcap}, {"base", to_string(base)}};
    nlohmann::json cols = nlohmann::json::object();
    for (const char* name : {"u", "d", "rate", "half_width", "lower", "upper", "j_used", "converged", "gap1"})
      cols[name] = nlohmann::json::array();
    for (const auto& row : rows) {
      cols["u"].push_back(row.params.u());
      cols["d"].push_back(row.params.d());
      cols["rate"].push_back(row.est.value);
      cols["half_width"].push_back(row.est.half_width);
      cols["lower"].push_back(row.est.lower);
      cols["upper"].push_back(row.est.upper);
      cols["j_used"].push_back(row.est.j_used);
      cols["converged"].push_back(row.est.converged);
      cols["gap1"].push_back(row.gap1);
    }
    r.outputs = cols;
    write_record_json(sink.stream(), r);
  }
  sink.finish(a.out_path);
  return all_converged ? kOk : kNotConverged;
}

struct ValidateArgs : Common {
  std::string level = "fast";
  std::uint64_t seed = 20261019;
  double inject_fault = 0.0;
  long mc_steps = 10'000'000;
};

inline int cmd_validate(const ValidateArgs& a, std::ostream& out, std::ostream& err) {
  ValidationOptions options;
  options.level = a.level == "full" ? ValidationLevel::full : ValidationLevel::fast;
  options.seed = a.seed;
  options.inject_fault = a.inject_fault;
  options.mc_steps = a.mc_steps;
  if (options.mc_steps < 1000) throw DomainError("--mc-steps must be >= 1000");
  const auto checks = run_validation(options);

  RunRecord r = make_record("validate");
  r.settings = {{"level", a.level}, {"seed", a.seed}, {"inject_fault", a.inject_fault}};
  if (options.level == ValidationLevel::full) r.settings["mc_steps"] = a.mc_steps;
  bool ok = true;
  for (const auto& c : checks) {
    r.outputs[c.name] = {{"measured", c.measured}, {"tolerance", c.tolerance}, {"passed", c.passed},
                         {"detail", c.detail}};
    err << (c.passed ? "PASS " : "FAIL ") << c.name << "  measured=" << linkrate::detail::format_param(c.measured)
        << "  tolerance=" << linkrate::detail::format_param(c.tolerance) << (c.detail.empty() ? "" : "  (" + c.detail + ")")
        << '\n';
    ok = ok && c.passed;
  }
  r.outputs["all_passed"] = ok;
  emit(r, a, out);
  return ok ? kOk : kValidation;
}

struct SimulateArgs : Common {
  long steps = 1'000'000;
  std::uint64_t seed = 1;
  int j = 3;
  int depth = 0;
  long burn_in = 100;
  int replicas = 1;
  bool miller_madow = false;
  std::string trace_out;
  std::string trace_format = "bin";
};

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const LinkParams p = a.params();
  if (a.steps < 1) throw DomainError("--steps must be positive");
  if (a.j < 1 || a.j > kMaxPluginContext + 1)
    throw DomainError("--j must lie in [1, " + std::to_string(kMaxPluginContext + 1) + "]");
  if (!a.trace_out.empty() && a.replicas != 1) throw DomainError("--trace-out needs --replicas 1");
  SimConfig config{p};
  config.horizon = a.steps + a.burn_in;
  config.burn_in = a.burn_in;
  config.depth = a.depth;
  config.replicas = a.replicas;
  config.seed = a.seed;
  config.validate();

  std::optional<Sink> trace_sink;
  if (!a.trace_out.empty()) trace_sink.emplace(a.trace_out, out);

  const auto traces = simulate_replicas(config);
  const double reps = static_cast<double>(traces.size());
  const RjTable table(p, a.j);
  const BoundsSequence seq = bounds(p, a.j);

  nlohmann::json p_hat = nlohmann::json::array(), p_se = p_hat, p_exact = p_hat;
  for (int k = 1; k <= a.j; ++k) {
    double mean = 0.0;
    double var = 0.0;
    for (const auto& t : traces) {
      const Estimate e = empirical_pj(t, k);
      mean += e.value / reps;
      var += e.stderr_ * e.stderr_;
    }
    p_hat.push_back(mean);
    p_se.push_back(std::sqrt(var) / reps);
    p_exact.push_back(table.p(k));
  }
  PluginOptions popts;
  popts.base = p.base();
  popts.miller_madow = a.miller_madow;
  double h = 0.0;
  double h_var = 0.0;
  double bias = 0.0;
  bool undersampled = false;
  for (const auto& t : traces) {
    const PluginEntropy e = plugin_conditional_entropy(t, a.j, popts);
    h += e.value / reps;
    h_var += e.stderr_ * e.stderr_;
    bias += e.bias_bound / reps;
    undersampled = undersampled || e.undersampled;
  }
  const int levels = std::min(config.effective_depth(), 32);
  nlohmann::json pmf = nlohmann::json::array();
  std::vector<double> pooled(static_cast<std::size_t>(levels) + 1, 0.0);
  for (const auto& t : traces) {
    const auto v = empirical_pmf(t, levels);
    for (std::size_t m = 0; m < v.size(); ++m) pooled[m] += v[m] / reps;
  }
  for (double v : pooled) pmf.push_back(v);

  RunRecord r = make_record("simulate", record_params(p));
  r.settings = {{"steps", a.steps},       {"seed", a.seed},         {"j", a.j},
                {"depth", config.effective_depth()}, {"burn_in", a.burn_in}, {"replicas", a.replicas},
                {"miller_madow", a.miller_madow}};
  r.outputs = {{"p_hat", p_hat},
               {"p_stderr", p_se},
               {"p_analytic", p_exact},
               {"entropy", h},
               {"entropy_stderr", std::sqrt(h_var) / reps},
               {"bias_bound", bias},
               {"undersampled", undersampled},
               {"lower", seq.lower(a.j)},
               {"upper", seq.upper(a.j)},
               {"pmf", pmf}};
  if (trace_sink) {
    if (a.trace_format == "csv") {
      write_trace_csv(trace_sink->stream(), traces.front());
    } else {
      write_trace_binary(trace_sink->stream(), traces.front());
    }
    trace_sink->finish(a.trace_out);
  }
  emit(r, a, out);
  return kOk;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entropy rate of connection-state messages over Markov links", "linkrate"};
  app.set_version_flag("--version", LINKRATE_VERSION);
  app.require_subcommand(1);

  detail::RateArgs rate;
  auto* rate_cmd = app.add_subcommand("rate", "bracket the entropy rate to a target half-width");
  detail::add_params(rate_cmd, rate);
  detail::add_output(rate_cmd, rate, "json");
  rate_cmd->add_option("--halfwidth", rate.halfwidth, "target half-width of the bracket");
  rate_cmd->add_option("--jcap", rate.jcap, "largest history length tried");

  detail::BoundsArgs bnd;
  auto* bounds_cmd = app.add_subcommand("bounds", "table of lower/upper bounds, gaps and coefficients");
  detail::add_params(bounds_cmd, bnd);
  detail::add_output(bounds_cmd, bnd, "json");
  bounds_cmd->add_option("--jmax", bnd.jmax, "number of rows");

  detail::SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "entropy rate over a (u, d) grid");
  sweep_cmd->add_option("--u", sweep.u_axis, "u axis as a:b:n")->required();
  sweep_cmd->add_option("--d", sweep.d_axis, "d axis as a:b:n")->required();
  detail::add_output(sweep_cmd, sweep, "csv");
  sweep_cmd->add_option("--halfwidth", sweep.halfwidth, "target half-width per point");
  sweep_cmd->add_option("--jcap", sweep.jcap, "largest history length tried");

  detail::ValidateArgs val;
  auto* validate_cmd = app.add_subcommand("validate", "run the built-in consistency checks");
  detail::add_output(validate_cmd, val, "json");
  validate_cmd->add_option("--level", val.level, "fast or full (adds Monte Carlo)")
      ->check(CLI::IsMember({"fast", "full"}));
  validate_cmd->add_option("--seed", val.seed, "seed for random parameters and simulation");
  validate_cmd->add_option("--inject-fault", val.inject_fault,
                           "offset added to recursion coefficients (harness self-test)");
  validate_cmd->add_option("--mc-steps", val.mc_steps, "Monte Carlo steps at level full");

  detail::SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo message traces and estimates");
  detail::add_params(simulate_cmd, sim);
  detail::add_output(simulate_cmd, sim, "json");
  simulate_cmd->add_option("--steps", sim.steps, "recorded steps per replica");
  simulate_cmd->add_option("--seed", sim.seed, "random seed");
  simulate_cmd->add_option("--j", sim.j, "history length for records and entropy");
  simulate_cmd->add_option("--depth", sim.depth, "diagonal truncation (0 = automatic)");
  simulate_cmd->add_option("--burn-in", sim.burn_in, "discarded initial steps");
  simulate_cmd->add_option("--replicas", sim.replicas, "independent replicas");
  simulate_cmd->add_flag("--miller-madow", sim.miller_madow, "bias-correct the plug-in entropy");
  simulate_cmd->add_option("--trace-out", sim.trace_out, "write the message trace to this file");
  simulate_cmd->add_option("--trace-format", sim.trace_format, "bin (little-endian uint32) or csv")
      ->check(CLI::IsMember({"bin", "csv"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (*rate_cmd) return detail::cmd_rate(rate, out);
    if (*bounds_cmd) return detail::cmd_bounds(bnd, out);
    if (*sweep_cmd) return detail::cmd_sweep(sweep, out);
    if (*validate_cmd) return detail::cmd_validate(val, out, err);
    if (*simulate_cmd) return detail::cmd_simulate(sim, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const InsufficientDataError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kUsage;
}

}  // namespace linkrate::cli
