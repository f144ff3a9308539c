#pragma once

// Exact small-scale laws of the message process M.
//
// At time t the messages depend only on the diagonal vector
// Z_t = (Z_t(1), ..., Z_t(t)) with Z_t(x) = X_{t+1-x}(x), and M_t is the
// number of leading ones of Z_t. Each coordinate of Z advances by the link
// kernel and a fresh stationary coordinate is appended at every step, so
// the pair (Z_t, recent messages) is a finite Markov chain that can be
// propagated exactly for small t.
//
// Two further routes target the t -> infinity limits directly:
//   * stationary_record_probability scans coordinates x = 1, 2, ... and
//     tracks which times of the window are still "alive" (all ones so far),
//   * stationary_window_law multiplies independent per-coordinate path
//     probabilities for a prescribed tuple of message values.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "linkrate/error.hpp"
#include "linkrate/markov_link.hpp"

namespace linkrate {

// Diagonal link vector truncated to its first t coordinates; coordinate x
// (1-based) is bit x-1.
struct DiagonalState {
  int t = 0;
  std::uint32_t bits = 0;

  bool at(int x) const { return ((bits >> (x - 1)) & 1U) != 0; }
  int leading_ones() const { return std::min(std::countr_one(bits), t); }
};

// Joint law of (M_t, M_{t-1}, ..., M_{t-window+1}); tuples are most recent first.
class HistoryLaw {
 public:
  using Tuple = std::vector<int>;

  explicit HistoryLaw(int window) : window_(window) {}

  int window() const noexcept { return window_; }
  const std::map<Tuple, double>& pmf() const noexcept { return pmf_; }

  void add(const Tuple& tuple, double p) {
    if (p != 0.0) pmf_[tuple] += p;
  }

  double probability(const Tuple& tuple) const {
    const auto it = pmf_.find(tuple);
    return it == pmf_.end() ? 0.0 : it->second;
  }

  double total() const {
    double sum = 0.0;
    for (const auto& [tuple, p] : pmf_) sum += p;
    return sum;
  }

  double entropy(EntropyBase base = EntropyBase::bits) const {
    double nats = 0.0;
    for (const auto& [tuple, p] : pmf_) {
      if (p > 0.0) nats -= p * std::log(p);
    }
    return from_nats(nats, base);
  }

  // Marginal of (M_{t-1}, ..., M_{t-window+1}).
  HistoryLaw drop_most_recent() const {
    HistoryLaw out(window_ - 1);
    for (const auto& [tuple, p] : pmf_) out.add(Tuple(tuple.begin() + 1, tuple.end()), p);
    return out;
  }

  // Marginal of the `window` most recent values.
  HistoryLaw keep_recent(int window) const {
    if (window < 1 || window > window_) throw DomainError("keep_recent: window out of range");
    HistoryLaw out(window);
    for (const auto& [tuple, p] : pmf_) out.add(Tuple(tuple.begin(), tuple.begin() + window), p);
    return out;
  }

  // H(M_t | M_{t-1}, ..., M_{t-window+1}).
  double conditional_entropy(EntropyBase base = EntropyBase::bits) const {
    return entropy(base) - drop_most_recent().entropy(base);
  }

  // Largest absolute difference between two laws over the union of supports.
  friend double max_abs_difference(const HistoryLaw& a, const HistoryLaw& b) {
    double worst = 0.0;
    for (const auto& [tuple, p] : a.pmf_) worst = std::max(worst, std::abs(p - b.probability(tuple)));
    for (const auto& [tuple, p] : b.pmf_) worst = std::max(worst, std::abs(p - a.probability(tuple)));
    return worst;
  }

 private:
  int window_;
  std::map<Tuple, double> pmf_;
};

struct OracleOptions {
  // Upper bound on weighted transitions (states x histories x coordinates).
  double budget = 1e8;
};

inline constexpr int kMaxOracleTime = 24;
inline constexpr int kMaxTriangleTime = 6;

namespace detail {

using MessageKey = std::vector<int>;  // past messages, most recent first

struct DiagonalLayer {
  int length = 0;  // number of diagonal coordinates
  std::map<MessageKey, std::vector<double>> mass;
};

inline int leading_ones(std::uint32_t bits, int length) {
  return std::min(std::countr_one(bits), length);
}

// Applies the link kernel to every coordinate of a product-state vector.
inline void apply_link_kernel(std::vector<double>& v, int length, const LinkParams& params) {
  const double u = params.u();
  const double d = params.d();
  for (int k = 0; k < length; ++k) {
    const std::size_t bit = std::size_t{1} << k;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if ((i & bit) != 0) continue;
      const double closed = v[i];
      const double open = v[i | bit];
      v[i] = closed * (1.0 - u) + open * d;
      v[i | bit] = closed * u + open * (1.0 - d);
    }
  }
}

// One time step: record the current message into the key (keeping `keep`
// past values), move every coordinate by the link kernel and append a fresh
// stationary coordinate.
inline DiagonalLayer advance(const DiagonalLayer& layer, const LinkParams& params, int keep) {
  const auto [up, down] = stationary(params);
  const int n = layer.length;
  const std::size_t size = std::size_t{1} << n;

  std::map<MessageKey, std::vector<double>> split;
  for (const auto& [key, v] : layer.mass) {
    for (std::size_t i = 0; i < size; ++i) {
      if (v[i] == 0.0) continue;
      MessageKey next;
      if (keep > 0) {
        next.push_back(leading_ones(static_cast<std::uint32_t>(i), n));
        for (std::size_t k = 0; k < key.size() && static_cast<int>(next.size()) < keep; ++k)
          next.push_back(key[k]);
      }
      auto& target = split[next];
      if (target.empty()) target.assign(size, 0.0);
      target[i] += v[i];
    }
  }

  DiagonalLayer out;
  out.length = n + 1;
  for (auto& [key, v] : split) {
    apply_link_kernel(v, n, params);
    std::vector<double> grown(size * 2);
    for (std::size_t i = 0; i < size; ++i) {
      grown[i] = v[i] * down;
      grown[i | size] = v[i] * up;
    }
    out.mass.emplace(key, std::move(grown));
  }
  return out;
}

inline DiagonalLayer initial_layer(const LinkParams& params) {
  const auto [up, down] = stationary(params);
  DiagonalLayer layer;
  layer.length = 1;
  layer.mass.emplace(MessageKey{}, std::vector<double>{down, up});
  return layer;
}

inline DiagonalLayer point_layer(int length, std::uint32_t bits) {
  DiagonalLayer layer;
  layer.length = length;
  std::vector<double> v(std::size_t{1} << length, 0.0);
  v[bits] = 1.0;
  layer.mass.emplace(MessageKey{}, std::move(v));
  return layer;
}

inline HistoryLaw finalize(const DiagonalLayer& layer, int window) {
  HistoryLaw law(window);
  const int n = layer.length;
  for (const auto& [key, v] : layer.mass) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == 0.0) continue;
      HistoryLaw::Tuple tuple{leading_ones(static_cast<std::uint32_t>(i), n)};
      tuple.insert(tuple.end(), key.begin(), key.end());
      law.add(tuple, v[i]);
    }
  }
  return law;
}

// Work estimate for advancing from `from` coordinates to `to` coordinates
// while retaining `keep` past messages.
inline double dp_work(int from, int to, int keep) {
  double work = 0.0;
  for (int s = from; s < to; ++s) {
    double histories = 1.0;
    for (int k = 0; k < keep; ++k) histories *= std::max(1, s + 1 - k);
    work += std::ldexp(1.0, s) * (s + 1) * histories;
  }
  return work;
}

inline void check_budget(double work, const OracleOptions& options, const std::string& what) {
  if (work > options.budget) {
    std::ostringstream msg;
    msg << what << " needs about " << work << " weighted transitions, budget is "
        << options.budget;
    throw CapacityError(msg.str(), work);
  }
}

inline void check_window(int t, int window, const char* op) {
  if (t < 1 || t > kMaxOracleTime)
    throw DomainError(std::string(op) + ": t must lie in [1, " + std::to_string(kMaxOracleTime) + "]");
  if (window < 1 || window > t)
    throw DomainError(std::string(op) + ": window " + std::to_string(window) +
                      " must lie in [1, t = " + std::to_string(t) + "]");
}

}  // namespace detail

// Exact joint law of (M_t, ..., M_{t-j+1}) by forward propagation from the
// stationary product law at time 1.
inline HistoryLaw oracle_joint(const LinkParams& params, int t, int j,
                               const OracleOptions& options = {}) {
  detail::check_window(t, j, "oracle_joint");
  detail::check_budget(detail::dp_work(1, t, j - 1), options, "oracle_joint");
  detail::DiagonalLayer layer = detail::initial_layer(params);
  for (int s = 1; s < t; ++s) layer = detail::advance(layer, params, j - 1);
  return detail::finalize(layer, j);
}

// Same law by enumerating every assignment of the t(t+1)/2 links
// X_s(x), s + x <= t + 1, and evaluating M_s as a sum of products.
inline HistoryLaw triangle_joint(const LinkParams& params, int t, int j) {
  if (t < 1 || t > kMaxTriangleTime)
    throw DomainError("triangle_joint: t must lie in [1, " + std::to_string(kMaxTriangleTime) + "]");
  if (j < 1 || j > t) throw DomainError("triangle_joint: window must lie in [1, t]");

  const auto [up, down] = stationary(params);
  const double u = params.u();
  const double d = params.d();

  // Links ordered lexicographically by (s, x).
  std::array<std::array<int, kMaxTriangleTime + 2>, kMaxTriangleTime + 2> slot{};
  int count = 0;
  for (int s = 1; s <= t; ++s)
    for (int x = 1; s + x <= t + 1; ++x) slot[s][x] = count++;

  // Millions of products land in few cells; accumulate in extended precision.
  // Cell index: messages in base t+1, most recent first.
  const int radix = t + 1;
  int cell_count = 1;
  for (int k = 0; k < j; ++k) cell_count *= radix;
  std::vector<long double> cells(static_cast<std::size_t>(cell_count), 0.0L);
  const std::uint32_t assignments = 1U << count;
  for (std::uint32_t a = 0; a < assignments; ++a) {
    const auto link = [&](int s, int x) { return static_cast<int>((a >> slot[s][x]) & 1U); };

    long double prob = 1.0L;
    for (int x = 1; x <= t; ++x) {
      int prev = link(1, x);
      prob *= prev == 1 ? up : down;
      for (int s = 2; s + x <= t + 1; ++s) {
        const int cur = link(s, x);
        if (prev == 1) {
          prob *= cur == 1 ? 1.0 - d : d;
        } else {
          prob *= cur == 1 ? u : 1.0 - u;
        }
        prev = cur;
      }
    }

    // M_s = sum over m of prod_{k<=m} X_{s+1-k}(k), reusing the running product.
    int cell = 0;
    for (int s = t; s > t - j; --s) {
      int message = 0;
      int product = 1;
      for (int m = 1; m <= s; ++m) {
        product *= link(s + 1 - m, m);
        message += product;
      }
      cell = cell * radix + message;
    }
    cells[static_cast<std::size_t>(cell)] += prob;
  }
  HistoryLaw law(j);
  HistoryLaw::Tuple tuple(static_cast<std::size_t>(j));
  for (int c = 0; c < cell_count; ++c) {
    int rest = c;
    for (int k = j - 1; k >= 0; --k) {
      tuple[static_cast<std::size_t>(k)] = rest % radix;
      rest /= radix;
    }
    law.add(tuple, static_cast<double>(cells[static_cast<std::size_t>(c)]));
  }
  return law;
}

// H(M_t | M_{t-1}, ..., M_{t-j+1}).
inline double oracle_conditional_entropy(const LinkParams& params, int t, int j,
                                         const OracleOptions& options = {}) {
  return oracle_joint(params, t, j, options).conditional_entropy(params.base());
}

// H(M_t | M_{t-1}, ..., M_{t-j+1}, Z_{t-j}) with the full length-(t-j) diagonal.
inline double oracle_conditional_entropy_given_diagonal(const LinkParams& params, int t, int j,
                                                        const OracleOptions& options = {}) {
  detail::check_window(t, j, "oracle_conditional_entropy_given_diagonal");
  if (j >= t) throw DomainError("conditioning on the diagonal requires j < t");
  const int start = t - j;
  const double work = detail::dp_work(1, start, 0) +
                      std::ldexp(1.0, start) * detail::dp_work(start, t, j - 1);
  detail::check_budget(work, options, "oracle_conditional_entropy_given_diagonal");

  detail::DiagonalLayer layer = detail::initial_layer(params);
  for (int s = 1; s < start; ++s) layer = detail::advance(layer, params, 0);
  const std::vector<double>& prior = layer.mass.begin()->second;

  double total = 0.0;
  for (std::size_t z = 0; z < prior.size(); ++z) {
    if (prior[z] == 0.0) continue;
    detail::DiagonalLayer branch = detail::point_layer(start, static_cast<std::uint32_t>(z));
    for (int s = start; s < t; ++s) branch = detail::advance(branch, params, j - 1);
    total += prior[z] * detail::finalize(branch, j).conditional_entropy(params.base());
  }
  return total;
}

// P[M_t > max(M_{t-1}, ..., M_{t-j})] at finite t.
inline double oracle_pj(const LinkParams& params, int t, int j, const OracleOptions& options = {}) {
  if (j < 1 || j >= t) throw DomainError("oracle_pj requires 1 <= j < t");
  const HistoryLaw law = oracle_joint(params, t, j + 1, options);
  double p = 0.0;
  for (const auto& [tuple, mass] : law.pmf()) {
    if (tuple.front() > *std::max_element(tuple.begin() + 1, tuple.end())) p += mass;
  }
  return std::clamp(p, 0.0, 1.0);
}

// Finite-t value next to its successor, used in place of the t -> infinity limit.
struct Stabilization {
  int t;
  double at_t;
  double at_next;
  double delta() const { return std::abs(at_next - at_t); }
};

template <typename Quantity>
Stabilization stabilization(Quantity&& quantity, int t) {
  return {t, quantity(t), quantity(t + 1)};
}

inline constexpr int kMaxStationaryWindow = 12;

// lim P[M_t > max(M_{t-1}, ..., M_{t-j})].
inline double stationary_record_probability(const LinkParams& params, int j) {
  if (j < 1 || j > kMaxStationaryWindow)
    throw DomainError("stationary_record_probability: j must lie in [1, " +
                      std::to_string(kMaxStationaryWindow) + "]");
  const auto [up, down] = stationary(params);
  const int width = j + 1;  // time slots t-j .. t; slot j is time t
  const std::uint32_t patterns = 1U << width;

  // Stationary path probability of each bit pattern over the window.
  std::vector<double> path(patterns);
  for (std::uint32_t b = 0; b < patterns; ++b) {
    double p = (b & 1U) ? up : down;
    for (int k = 1; k < width; ++k) {
      const bool prev = (b >> (k - 1)) & 1U;
      const bool cur = (b >> k) & 1U;
      p *= prev ? (cur ? 1.0 - params.d() : params.d()) : (cur ? params.u() : 1.0 - params.u());
    }
    path[b] = p;
  }

  const std::uint32_t current = 1U << j;
  std::vector<double> success(patterns, 0.0);
  // Alive sets containing the current slot, by increasing size; {current} is a win.
  std::vector<std::uint32_t> order;
  for (std::uint32_t a = 0; a < patterns; ++a)
    if ((a & current) != 0) order.push_back(a);
  std::sort(order.begin(), order.end(), [](std::uint32_t x, std::uint32_t y) {
    return std::popcount(x) < std::popcount(y);
  });
  for (const std::uint32_t alive : order) {
    if (alive == current) {
      success[alive] = 1.0;
      continue;
    }
    double stay = 0.0;
    double win = 0.0;
    for (std::uint32_t b = 0; b < patterns; ++b) {
      const std::uint32_t next = alive & b;
      if (next == alive) {
        stay += path[b];
      } else if ((next & current) != 0) {
        win += path[b] * success[next];
      }
    }
    success[alive] = win / (1.0 - stay);
  }
  return success[patterns - 1];
}

// Limit law of (M_t, ..., M_{t-w+1}) restricted to tuples with every value
// below `levels`, plus the probability mass left outside that box.
struct StationaryWindowLaw {
  HistoryLaw law;
  double tail_mass;
};

inline constexpr int kMaxStationaryEntropyWindow = 4;

inline StationaryWindowLaw stationary_window_law(const LinkParams& params, int w, int levels) {
  if (w < 1 || w > kMaxStationaryEntropyWindow)
    throw DomainError("stationary_window_law: w must lie in [1, " +
                      std::to_string(kMaxStationaryEntropyWindow) + "]");
  if (levels < 1) throw DomainError("stationary_window_law: levels must be positive");
  const auto [up, down] = stationary(params);
  const double u = params.u();
  const double d = params.d();

  // Per-coordinate constraint: 0 = must be closed, 1 = must be open, 2 = free.
  // Slot 0 is the most recent time; probabilities use the stationary path law,
  // which is reversible, so the direction of traversal does not matter.
  int codes = 1;
  for (int k = 0; k < w; ++k) codes *= 3;
  std::vector<double> constraint(static_cast<std::size_t>(codes));
  for (int c = 0; c < codes; ++c) {
    std::array<int, kMaxStationaryEntropyWindow> need{};
    int rest = c;
    for (int k = 0; k < w; ++k) {
      need[k] = rest % 3;
      rest /= 3;
    }
    std::array<double, 2> alpha{need[0] == 1 ? 0.0 : down, need[0] == 0 ? 0.0 : up};
    for (int k = 1; k < w; ++k) {
      std::array<double, 2> next{alpha[0] * (1.0 - u) + alpha[1] * d,
                                 alpha[0] * u + alpha[1] * (1.0 - d)};
      if (need[k] == 1) next[0] = 0.0;
      if (need[k] == 0) next[1] = 0.0;
      alpha = next;
    }
    constraint[c] = alpha[0] + alpha[1];
  }

  StationaryWindowLaw out{HistoryLaw(w), 0.0};
  HistoryLaw::Tuple tuple(static_cast<std::size_t>(w), 0);
  std::vector<int> breaks;
  long double covered = 0.0L;
  const std::function<void(int)> visit = [&](int slot) {
    if (slot < w) {
      for (int m = 0; m < levels; ++m) {
        tuple[slot] = m;
        visit(slot + 1);
      }
      return;
    }
    // Coordinates x = 1 .. max+1 split into runs sharing one constraint code.
    breaks.assign(tuple.begin(), tuple.end());
    for (int m : tuple) breaks.push_back(m + 1);
    breaks.push_back(0);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    double p = 1.0;
    for (std::size_t b = 0; b + 1 < breaks.size() && p > 0.0; ++b) {
      const int x = breaks[b] + 1;  // first coordinate of the run
      const int length = breaks[b + 1] - breaks[b];
      int code = 0;
      for (int k = w - 1; k >= 0; --k) {
        const int need = tuple[k] >= x ? 1 : (tuple[k] == x - 1 ? 0 : 2);
        code = code * 3 + need;
      }
      p *= std::pow(constraint[code], length);
    }
    out.law.add(tuple, p);
    covered += p;
  };
  visit(0);
  out.tail_mass = std::max(0.0, static_cast<double>(1.0L - covered));
  return out;
}

// lim H(M_t | M_{t-1}, ..., M_{t-j+1}) with the support truncated where the
// dropped mass falls below tail_tol.
struct StationaryEntropy {
  double value;
  double tail_mass;
  int levels;
};

inline StationaryEntropy stationary_conditional_entropy(const LinkParams& params, int j,
                                                        double tail_tol = 1e-13) {
  if (!(tail_tol > 0.0 && tail_tol < 1.0)) throw DomainError("tail tolerance must lie in (0, 1)");
  const double up = stationary(params).up;
  // P[some message in the window >= levels] <= j U^levels.
  const int levels = static_cast<int>(std::ceil(std::log(tail_tol / j) / std::log(up)));
  const StationaryWindowLaw joint = stationary_window_law(params, j, levels);
  double value = joint.law.entropy(params.base());
  if (j > 1) value -= stationary_window_law(params, j - 1, levels).law.entropy(params.base());
  return {value, joint.tail_mass, levels};
}

}  // namespace linkrate
