#pragma once

// Monte Carlo generation of message traces.
//
// Every link variate is a pure function of (seed, replica, s, x), where s is
// the link's own time index and x its position, so the diagonal simulation
// and the space-time recursion can be driven by identical randomness.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "linkrate/error.hpp"
#include "linkrate/markov_link.hpp"
#include "linkrate/parallel.hpp"

namespace linkrate {

namespace detail {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based uniform source: one independent variate per (replica, s, x).
class LinkVariates {
 public:
  explicit LinkVariates(std::uint64_t seed) : seed_(seed) {}

  double uniform(std::uint64_t replica, std::int64_t s, std::int64_t x) const {
    return uniform_keyed(replica_key(replica), s, x);
  }

  // Hash prefix shared by every variate of one replica.
  std::uint64_t replica_key(std::uint64_t replica) const {
    return detail::mix64(detail::mix64(seed_ ^ 0x5851F42D4C957F2DULL) ^ replica);
  }

  static double uniform_keyed(std::uint64_t key, std::int64_t s, std::int64_t x) {
    std::uint64_t h = detail::mix64(key ^ static_cast<std::uint64_t>(s));
    h = detail::mix64(h ^ static_cast<std::uint64_t>(x));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

inline constexpr int kMaxDepth = 4096;

// Smallest L with U^L < 1e-9, capped at kMaxDepth.
inline int default_depth(const LinkParams& params) {
  const double up = stationary(params).up;
  const double estimate = std::ceil(std::log(1e-9) / std::log(up));
  if (!(estimate < kMaxDepth)) return kMaxDepth;
  int depth = std::max(1, static_cast<int>(estimate));
  while (depth > 1 && std::pow(up, depth - 1) < 1e-9) --depth;
  while (depth < kMaxDepth && std::pow(up, depth) >= 1e-9) ++depth;
  return depth;
}

struct SimConfig {
  LinkParams params;
  long horizon = 1'000'000;  // emitted steps per replica, including burn-in
  int depth = 0;             // 0 selects default_depth(params)
  int replicas = 1;
  std::uint64_t seed = 1;
  long burn_in = 100;

  int effective_depth() const { return depth > 0 ? depth : default_depth(params); }

  void validate() const {
    if (horizon <= burn_in) throw DomainError("horizon must exceed burn_in");
    if (burn_in < 0) throw DomainError("burn_in must be non-negative");
    if (replicas < 1) throw DomainError("replicas must be positive");
    if (depth < 0 || depth > kMaxDepth)
      throw DomainError("depth must lie in [1, " + std::to_string(kMaxDepth) + "] (0 = default)");
  }
};

// Messages M_t of one replica after burn-in.
struct MTrace {
  std::vector<std::uint32_t> values;
};

namespace detail {

inline bool stationary_link(std::uint64_t key, std::int64_t s, std::int64_t x, double up) {
  return LinkVariates::uniform_keyed(key, s, x) < up;
}

inline bool step_link(bool open, std::uint64_t key, std::int64_t s, std::int64_t x,
                      const LinkParams& params) {
  const double v = LinkVariates::uniform_keyed(key, s, x);
  return open ? !(v < params.d()) : v < params.u();
}

}  // namespace detail

// Diagonal simulation: coordinate x holds Z_t(x) = X_{t+1-x}(x); the
// message is the count of leading open coordinates. Coordinates beyond the
// depth are treated as closed.
inline MTrace simulate_m_trace(const SimConfig& config, int replica = 0) {
  config.validate();
  const LinkParams& params = config.params;
  const int depth = config.effective_depth();
  const double up = stationary(params).up;
  const std::uint64_t rep = LinkVariates(config.seed).replica_key(static_cast<std::uint64_t>(replica));

  std::vector<unsigned char> z(static_cast<std::size_t>(depth) + 1, 0);
  for (int x = 1; x <= depth; ++x) z[x] = detail::stationary_link(rep, 2 - x, x, up);

  MTrace trace;
  trace.values.reserve(static_cast<std::size_t>(config.horizon - config.burn_in));
  for (long t = 1; t <= config.horizon; ++t) {
    if (t > 1) {
      for (int x = 1; x <= depth; ++x)
        z[x] = detail::step_link(z[x] != 0, rep, t + 1 - x, x, params);
    }
    if (t > config.burn_in) {
      std::uint32_t m = 0;
      while (m < static_cast<std::uint32_t>(depth) && z[m + 1] != 0) ++m;
      trace.values.push_back(m);
    }
  }
  return trace;
}

// Space-time path: evolves every link X_s(x) in its own time and applies
// M_s(x) = X_s(x) [M_{s-1}(x+1) + 1] with M(depth + 1) = 0. Link x starts
// at s = 2 - x so that node 1 sees the same stationary diagonal as the
// diagonal simulation. Cost O(horizon * depth); intended for cross-checks.
inline MTrace simulate_m_trace_spacetime(const SimConfig& config, int replica = 0) {
  config.validate();
  const LinkParams& params = config.params;
  const int depth = config.effective_depth();
  const double up = stationary(params).up;
  const std::uint64_t rep = LinkVariates(config.seed).replica_key(static_cast<std::uint64_t>(replica));

  std::vector<unsigned char> link(static_cast<std::size_t>(depth) + 2, 0);
  std::vector<std::uint32_t> prev(static_cast<std::size_t>(depth) + 2, 0);
  std::vector<std::uint32_t> cur(static_cast<std::size_t>(depth) + 2, 0);

  MTrace trace;
  trace.values.reserve(static_cast<std::size_t>(config.horizon - config.burn_in));
  for (long s = 2 - depth; s <= config.horizon; ++s) {
    for (int x = 1; x <= depth; ++x) {
      const long born = 2 - x;
      if (s < born) {
        link[x] = 0;
      } else if (s == born) {
        link[x] = detail::stationary_link(rep, s, x, up);
      } else {
        link[x] = detail::step_link(link[x] != 0, rep, s, x, params);
      }
      cur[x] = link[x] != 0 ? prev[x + 1] + 1 : 0;
    }
    cur[depth + 1] = 0;
    if (s >= 1 && s > config.burn_in) trace.values.push_back(cur[1]);
    std::swap(prev, cur);
  }
  return trace;
}

// All replicas of a config, run concurrently; element r is replica r.
inline std::vector<MTrace> simulate_replicas(const SimConfig& config) {
  config.validate();
  return parallel_map<MTrace>(static_cast<std::size_t>(config.replicas), [&](std::size_t r) {
    return simulate_m_trace(config, static_cast<int>(r));
  });
}

struct Estimate {
  double value;
  double stderr_;
};

inline constexpr int kDefaultBatches = 100;

namespace detail {

inline Estimate batch_means(const std::vector<double>& batch_values) {
  const double n = static_cast<double>(batch_values.size());
  const double mean = std::accumulate(batch_values.begin(), batch_values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : batch_values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace detail

// Frequency of strict records M_t > max(M_{t-1}, ..., M_{t-j}), with a
// batch-means standard error.
inline Estimate empirical_pj(const MTrace& trace, int j, int batches = kDefaultBatches) {
  if (j < 1) throw DomainError("empirical_pj requires j >= 1");
  if (batches < 2) throw DomainError("empirical_pj requires at least 2 batches");
  const auto& m = trace.values;
  const long usable = static_cast<long>(m.size()) - j;
  if (usable < 2L * batches) {
    throw InsufficientDataError("trace of length " + std::to_string(m.size()) +
                                " is too short for j = " + std::to_string(j) + " with " +
                                std::to_string(batches) + " batches");
  }
  const long per_batch = usable / batches;
  std::vector<double> rates;
  rates.reserve(static_cast<std::size_t>(batches));
  for (int b = 0; b < batches; ++b) {
    long hits = 0;
    const long begin = j + b * per_batch;
    for (long t = begin; t < begin + per_batch; ++t) {
      std::uint32_t best = 0;
      for (int k = 1; k <= j; ++k) best = std::max(best, m[t - k]);
      hits += m[t] > best ? 1 : 0;
    }
    rates.push_back(static_cast<double>(hits) / static_cast<double>(per_batch));
  }
  return detail::batch_means(rates);
}

struct PluginOptions {
  EntropyBase base = EntropyBase::bits;
  bool miller_madow = false;
  int batches = kDefaultBatches;
  double min_context_count = 50.0;
};

struct PluginEntropy {
  double value;
  double stderr_;
  // (nonzero joint cells) / (2 N ln b): first-order size of the downward bias.
  double bias_bound;
  bool undersampled;
  long samples;
  long joint_cells;
  long context_cells;
};

inline constexpr int kMaxPluginContext = 4;

namespace detail {

using WindowKey = std::array<std::uint32_t, kMaxPluginContext + 1>;

struct WindowKeyHash {
  std::size_t operator()(const WindowKey& key) const noexcept {
    std::uint64_t h = 0;
    for (std::uint32_t v : key) h = mix64(h ^ v);
    return static_cast<std::size_t>(h);
  }
};

using WindowCounts = std::unordered_map<WindowKey, long, WindowKeyHash>;

struct PluginCounts {
  WindowCounts joint;
  WindowCounts context;
  long samples = 0;

  void merge(const PluginCounts& other) {
    for (const auto& [key, c] : other.joint) joint[key] += c;
    for (const auto& [key, c] : other.context) context[key] += c;
    samples += other.samples;
  }
};

// Windows (M_t, ..., M_{t-j+1}) for t in [begin, end); the context drops M_t.
inline PluginCounts count_windows(const std::vector<std::uint32_t>& m, int j, long begin, long end) {
  PluginCounts counts;
  WindowKey key{};
  WindowKey context{};
  for (long t = begin; t < end; ++t) {
    for (int k = 0; k < j; ++k) key[k] = m[t - k];
    for (int k = 1; k < j; ++k) context[k - 1] = key[k];
    ++counts.joint[key];
    ++counts.context[context];
    ++counts.samples;
  }
  return counts;
}

template <typename Map>
double plugin_entropy_nats(const Map& cells, long n) {
  double h = 0.0;
  for (const auto& [key, c] : cells) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  return h;
}

inline double conditional_nats(const PluginCounts& counts, bool miller_madow) {
  double h = plugin_entropy_nats(counts.joint, counts.samples) -
             plugin_entropy_nats(counts.context, counts.samples);
  if (miller_madow) {
    h += (static_cast<double>(counts.joint.size()) - static_cast<double>(counts.context.size())) /
         (2.0 * static_cast<double>(counts.samples));
  }
  return h;
}

}  // namespace detail

// Plug-in estimate of H(M_t | M_{t-1}, ..., M_{t-j+1}) from window counts.
inline PluginEntropy plugin_conditional_entropy(const MTrace& trace, int j,
                                                const PluginOptions& options = {}) {
  if (j < 1 || j - 1 > kMaxPluginContext)
    throw DomainError("plugin_conditional_entropy supports 1 <= j <= " +
                      std::to_string(kMaxPluginContext + 1));
  if (options.batches < 2) throw DomainError("plugin_conditional_entropy requires >= 2 batches");
  const auto& m = trace.values;
  const long begin = j - 1;
  const long usable = static_cast<long>(m.size()) - begin;
  if (usable < 2L * options.batches)
    throw InsufficientDataError("trace too short for plug-in entropy with j = " + std::to_string(j));

  const long per_batch = usable / options.batches;
  detail::PluginCounts all;
  std::vector<double> batch_values;
  batch_values.reserve(static_cast<std::size_t>(options.batches));
  for (int b = 0; b < options.batches; ++b) {
    const long lo = begin + b * per_batch;
    const detail::PluginCounts batch = detail::count_windows(m, j, lo, lo + per_batch);
    batch_values.push_back(detail::conditional_nats(batch, options.miller_madow));
    all.merge(batch);
  }
  all.merge(detail::count_windows(m, j, begin + options.batches * per_batch, static_cast<long>(m.size())));
  const Estimate spread = detail::batch_means(batch_values);

  PluginEntropy out{};
  out.samples = all.samples;
  out.joint_cells = static_cast<long>(all.joint.size());
  out.context_cells = static_cast<long>(all.context.size());
  out.value = from_nats(detail::conditional_nats(all, options.miller_madow), options.base);
  out.stderr_ = from_nats(spread.stderr_, options.base);
  out.bias_bound = from_nats(static_cast<double>(out.joint_cells) / (2.0 * static_cast<double>(out.samples)),
                             options.base);
  const double mean_context_count =
      static_cast<double>(out.samples) / static_cast<double>(std::max<long>(1, out.context_cells));
  out.undersampled = mean_context_count < options.min_context_count;
  return out;
}

// Empirical P[M = m] for m = 0..max_level (last entry absorbs larger values).
inline std::vector<double> empirical_pmf(const MTrace& trace, int max_level) {
  std::vector<double> pmf(static_cast<std::size_t>(max_level) + 1, 0.0);
  if (trace.values.empty()) return pmf;
  for (std::uint32_t v : trace.values) pmf[std::min<std::uint32_t>(v, max_level)] += 1.0;
  for (double& p : pmf) p /= static_cast<double>(trace.values.size());
  return pmf;
}

// Binary trace format: consecutive little-endian uint32 message values, no header.
inline void write_trace_binary(std::ostream& out, const MTrace& trace) {
  for (std::uint32_t v : trace.values) {
    const unsigned char bytes[4] = {static_cast<unsigned char>(v & 0xFFU),
                                    static_cast<unsigned char>((v >> 8) & 0xFFU),
                                    static_cast<unsigned char>((v >> 16) & 0xFFU),
                                    static_cast<unsigned char>((v >> 24) & 0xFFU)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
}

inline MTrace read_trace_binary(std::istream& in) {
  MTrace trace;
  unsigned char bytes[4];
  while (in.read(reinterpret_cast<char*>(bytes), 4)) {
    trace.values.push_back(static_cast<std::uint32_t>(bytes[0]) |
                           (static_cast<std::uint32_t>(bytes[1]) << 8) |
                           (static_cast<std::uint32_t>(bytes[2]) << 16) |
                           (static_cast<std::uint32_t>(bytes[3]) << 24));
  }
  if (in.gcount() != 0) throw InsufficientDataError("binary trace ends with a partial record");
  return trace;
}

// CSV trace format: header "t,m", one row per emitted step, t counted from 0.
inline void write_trace_csv(std::ostream& out, const MTrace& trace) {
  out << "t,m\n";
  for (std::size_t t = 0; t < trace.values.size(); ++t) out << t << ',' << trace.values[t] << '\n';
}

}  // namespace linkrate
