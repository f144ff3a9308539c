#pragma once

// Entropy rate of the connection-state message process M.
//
// Record probabilities p_j = P[M_t > max(M_{t-1}, ..., M_{t-j})] and their
// differences r_j = p_{j-1} - p_j are obtained from the per-level
// coefficients r_j^(m) via
//
//   r_j^(m) = q_j^m - sum_{i=1}^{j-1} q_{j-i}^m r_i^(m),   q_k = P[X_{t+k}=1 | X_t=1]
//   r_j     = D sum_{m>=0} r_j^(m) U^m
//
// and feed the bound recursion
//
//   L_{j+1} = L_j + (p_j / D) [H(X^(j+1)) - H(X^(j))]
//   U_{j+1} = L_j + (p_j / D) [H(X_1)    - H(X^(j))]
//
// started from L_1 = H(X^(1)) / D and U_1 = H(X_1) / D.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "linkrate/error.hpp"
#include "linkrate/markov_link.hpp"

namespace linkrate {

// Intermediate r_j^(m) values below this are treated as lost precision.
inline constexpr double kCancellationGuard = -1e-10;

namespace detail {

// Neumaier compensated accumulator.
template <typename Real>
class CompensatedSum {
 public:
  void add(Real x) {
    const Real t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  Real value() const { return sum_ + comp_; }

 private:
  Real sum_ = 0;
  Real comp_ = 0;
};

// r_1^(m) .. r_jmax^(m) for a single level m, unclamped. Index 0 unused.
template <typename Real>
std::vector<Real> level_column(const LinkParams& params, int jmax, long m) {
  std::vector<Real> stay(static_cast<std::size_t>(jmax) + 1);
  for (int k = 1; k <= jmax; ++k) {
    const Real base = static_cast<Real>(stay_up_probability(params, k));
    stay[k] = m == 0 ? Real(1) : std::pow(base, static_cast<Real>(m));
  }
  std::vector<Real> r(static_cast<std::size_t>(jmax) + 1, Real(0));
  for (int j = 1; j <= jmax; ++j) {
    CompensatedSum<Real> acc;
    acc.add(stay[j]);
    for (int i = 1; i < j; ++i) acc.add(-stay[j - i] * r[i]);
    r[j] = acc.value();
  }
  return r;
}

inline std::string describe_cell(const LinkParams& params, int j, long m) {
  std::ostringstream msg;
  msg.precision(17);
  msg << "(u=" << params.u() << ", d=" << params.d() << ", j=" << j << ", m=" << m << ")";
  return msg.str();
}

// Guarded column: double first, long double when any cell falls below the
// guard, error if the extended recomputation still does.
inline std::vector<double> guarded_level_column(const LinkParams& params, int jmax, long m) {
  std::vector<double> col = level_column<double>(params, jmax, m);
  const auto tripped = [](const auto& values) {
    return std::find_if(values.begin() + 1, values.end(), [](auto v) {
      return v < static_cast<decltype(v)>(kCancellationGuard);
    });
  };
  if (tripped(col) != col.end()) {
    const std::vector<long double> wide = level_column<long double>(params, jmax, m);
    if (auto it = tripped(wide); it != wide.end()) {
      const int j = static_cast<int>(it - wide.begin());
      throw NumericalInstabilityError("r_j^(m) recursion lost precision at " +
                                      describe_cell(params, j, m));
    }
    for (std::size_t j = 1; j < col.size(); ++j) col[j] = static_cast<double>(wide[j]);
  }
  for (std::size_t j = 1; j < col.size(); ++j) col[j] = std::clamp(col[j], 0.0, 1.0);
  return col;
}

}  // namespace detail

// Single coefficient r_j^(m). r_j^(0) is 1 for j = 1 and 0 otherwise.
inline double rj_m(const LinkParams& params, int j, long m) {
  if (j < 1) throw DomainError("rj_m requires j >= 1");
  if (m < 0) throw DomainError("rj_m requires m >= 0");
  if (m == 0) return j == 1 ? 1.0 : 0.0;
  return detail::guarded_level_column(params, j, m)[static_cast<std::size_t>(j)];
}

struct RjOptions {
  double tol = 1e-12;
  // Hard cap on the number of levels m summed per coefficient.
  long max_terms = 200000;
};

// Number of levels m = 0..m_max needed so that the dropped tail
// D sum_{m > m_max} U^m = U^{m_max+1} is below tol.
inline long truncation_level(const LinkParams& params, const RjOptions& options) {
  if (!(options.tol > 0.0)) throw DomainError("truncation tolerance must be positive");
  const double up = stationary(params).up;
  if (options.tol >= 1.0) return 0;
  // Smallest m_max with U^{m_max + 1} < tol.
  const double levels = std::log(options.tol) / std::log(up);
  long m_max = std::max(0L, static_cast<long>(std::floor(levels)) - 1);
  while (std::pow(up, static_cast<double>(m_max + 1)) >= options.tol) ++m_max;
  if (m_max + 1 > options.max_terms) {
    std::ostringstream msg;
    msg << "series truncation needs " << m_max + 1 << " levels (cap " << options.max_terms
        << "); U = " << up << " is too close to 1";
    throw DomainError(msg.str());
  }
  return m_max;
}

// Coefficients r_j and record probabilities p_j for j = 1..max_j.
class RjTable {
 public:
  RjTable(const LinkParams& params, int max_j, const RjOptions& options = {})
      : params_(params), max_j_(max_j), tol_(options.tol) {
    if (max_j < 1) throw DomainError("RjTable requires max_j >= 1");
    const long m_max = truncation_level(params, options);
    const double up = stationary(params).up;
    const double down = 1.0 - up;

    std::vector<detail::CompensatedSum<double>> sums(static_cast<std::size_t>(max_j) + 1);
    sums[1].add(down);  // m = 0 level contributes only to r_1
    double weight = 1.0;
    for (long m = 1; m <= m_max; ++m) {
      weight *= up;
      const std::vector<double> col = detail::guarded_level_column(params, max_j, m);
      for (int j = 1; j <= max_j; ++j) sums[j].add(down * weight * col[j]);
    }

    r_.assign(static_cast<std::size_t>(max_j) + 1, 0.0);
    p_.assign(static_cast<std::size_t>(max_j) + 1, 1.0);
    m_truncation_.assign(static_cast<std::size_t>(max_j) + 1, m_max);
    residual_.assign(static_cast<std::size_t>(max_j) + 1,
                     std::pow(up, static_cast<double>(m_max + 1)));
    detail::CompensatedSum<double> partial;
    for (int j = 1; j <= max_j; ++j) {
      r_[j] = sums[j].value();
      partial.add(r_[j]);
      p_[j] = 1.0 - partial.value();
    }
    m_truncation_[0] = 0;
    residual_[0] = 0.0;
  }

  const LinkParams& params() const noexcept { return params_; }
  int max_j() const noexcept { return max_j_; }
  double tolerance() const noexcept { return tol_; }

  double r(int j) const { return r_.at(checked(j, 1)); }
  // p(0) = 1.
  double p(int j) const { return p_.at(checked(j, 0)); }
  long m_truncation(int j) const { return m_truncation_.at(checked(j, 1)); }
  double residual(int j) const { return residual_.at(checked(j, 1)); }

 private:
  std::size_t checked(int j, int lo) const {
    if (j < lo || j > max_j_) {
      throw DomainError("index j = " + std::to_string(j) + " outside [" + std::to_string(lo) +
                        ", " + std::to_string(max_j_) + "]");
    }
    return static_cast<std::size_t>(j);
  }

  LinkParams params_;
  int max_j_;
  double tol_;
  std::vector<double> r_;
  std::vector<double> p_;
  std::vector<long> m_truncation_;
  std::vector<double> residual_;
};

struct RjValue {
  double value;
  long m_used;
  double residual;
};

inline RjValue rj(const LinkParams& params, int j, double tol = 1e-12) {
  if (j < 1) throw DomainError("rj requires j >= 1");
  const RjTable table(params, j, RjOptions{.tol = tol});
  return {table.r(j), table.m_truncation(j), table.residual(j)};
}

// Geometric-series closed forms for r_1, r_2, r_3.
inline double rj_closed_form(const LinkParams& params, int j) {
  const double up = stationary(params).up;
  const double down = 1.0 - up;
  const double q1 = stay_up_probability(params, 1);
  const auto term = [up](double q) { return 1.0 / (1.0 - q * up); };
  switch (j) {
    case 1:
      return down * term(q1);
    case 2:
      return down * (term(stay_up_probability(params, 2)) - term(q1 * q1));
    case 3: {
      const double q2 = stay_up_probability(params, 2);
      const double q3 = stay_up_probability(params, 3);
      return down * (term(q3) - 2.0 * term(q1 * q2) + term(q1 * q1 * q1));
    }
    default:
      throw UnsupportedError("closed form available only for j in {1, 2, 3}, got " +
                             std::to_string(j));
  }
}

// Lower/upper bounds on the message entropy rate, j = 1..max_j.
class BoundsSequence {
 public:
  BoundsSequence(const LinkParams& params, int max_j, const RjOptions& options = {})
      : table_(params, std::max(1, max_j - 1), options), max_j_(max_j) {
    if (max_j < 1) throw DomainError("bounds require j_max >= 1");
    const double down = stationary(params).down;
    const double link_h = link_entropy(params);

    rates_.resize(static_cast<std::size_t>(max_j) + 1);
    for (int j = 1; j <= max_j; ++j) rates_[j] = jstep_entropy_rate(params, j);

    lower_.assign(static_cast<std::size_t>(max_j) + 1, 0.0);
    upper_.assign(static_cast<std::size_t>(max_j) + 1, 0.0);
    gap_.assign(static_cast<std::size_t>(max_j) + 1, 0.0);
    lower_[1] = rates_[1] / down;
    upper_[1] = link_h / down;
    gap_[1] = std::max(0.0, link_h - rates_[1]) / down;
    for (int j = 1; j < max_j; ++j) {
      const double weight = table_.p(j) / down;
      lower_[j + 1] = lower_[j] + weight * (rates_[j + 1] - rates_[j]);
      upper_[j + 1] = lower_[j] + weight * (link_h - rates_[j]);
      // Same quantity as upper - lower, without the accumulated cancellation.
      gap_[j + 1] = weight * std::max(0.0, link_h - rates_[j + 1]);
    }
  }

  const LinkParams& params() const noexcept { return table_.params(); }
  int max_j() const noexcept { return max_j_; }

  double lower(int j) const { return lower_.at(checked(j)); }
  double upper(int j) const { return upper_.at(checked(j)); }
  double gap(int j) const { return gap_.at(checked(j)); }
  // H(X^(j)), in the configured unit.
  double jstep_rate(int j) const { return rates_.at(checked(j)); }

  // Coefficients used by the recursion; covers j = 1..max(1, max_j - 1).
  const RjTable& coefficients() const noexcept { return table_; }

 private:
  std::size_t checked(int j) const {
    if (j < 1 || j > max_j_) {
      throw DomainError("bound index j = " + std::to_string(j) + " outside [1, " +
                        std::to_string(max_j_) + "]");
    }
    return static_cast<std::size_t>(j);
  }

  RjTable table_;
  int max_j_;
  std::vector<double> rates_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<double> gap_;
};

inline BoundsSequence bounds(const LinkParams& params, int j_max, double tol = 1e-12) {
  return BoundsSequence(params, j_max, RjOptions{.tol = tol});
}

struct RateEstimate {
  double value;
  double half_width;
  int j_used;
  bool converged;
  double lower;
  double upper;
  // |L_j(recursion) - L_j(series)| at j_used.
  double identity_residual;
};

// Lower bound written out as a series:
// L_j = (1/D) [sum_{i<=j} r_i H(X^(i)) + p_j H(X^(j))].
inline double unrolled_lower_bound(const BoundsSequence& seq, int j) {
  const RjTable& table = seq.coefficients();
  if (j > table.max_j()) throw DomainError("unrolled lower bound needs r_j for j = " + std::to_string(j));
  detail::CompensatedSum<double> acc;
  for (int i = 1; i <= j; ++i) acc.add(table.r(i) * seq.jstep_rate(i));
  acc.add(table.p(j) * seq.jstep_rate(j));
  return acc.value() / stationary(seq.params()).down;
}

inline constexpr double kSeriesIdentityTolerance = 1e-10;

// Brackets H(M) to the requested half-width, growing j geometrically up to j_cap.
inline RateEstimate entropy_rate(const LinkParams& params, double target_halfwidth,
                                 int j_cap = 256, const RjOptions& options = {}) {
  if (!(target_halfwidth > 0.0)) throw DomainError("target half-width must be positive");
  if (j_cap < 1) throw DomainError("j_cap must be >= 1");

  int span = std::min(j_cap, 16);
  for (;;) {
    // One extra index so the unrolled identity has r_j available at j = span.
    const BoundsSequence seq(params, span + 1, options);
    int found = 0;
    for (int j = 1; j <= span; ++j) {
      if (seq.gap(j) < 2.0 * target_halfwidth) {
        found = j;
        break;
      }
    }
    if (found != 0 || span == j_cap) {
      const int j = found != 0 ? found : span;
      const double residual = std::abs(seq.lower(j) - unrolled_lower_bound(seq, j));
      if (!(residual <= kSeriesIdentityTolerance)) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "series and recursion disagree on the lower bound at j=" << j << " by "
            << residual;
        throw NumericalInstabilityError(msg.str());
      }
      const double half = seq.gap(j) / 2.0;
      return RateEstimate{.value = (seq.lower(j) + seq.upper(j)) / 2.0,
                          .half_width = half,
                          .j_used = j,
                          .converged = found != 0,
                          .lower = seq.lower(j),
                          .upper = seq.upper(j),
                          .identity_residual = residual};
    }
    span = std::min(j_cap, span * 2);
  }
}

struct ConvergenceFit {
  // All gaps in range vanish (u + d = 1): no fit exists.
  bool exact = false;
  double slope = 0.0;
  double c_fit = 0.0;
  int points = 0;
  // log|1 - u - d|, the asymptotic slope.
  double reference_slope = 0.0;
};

inline constexpr int kMinFitPoints = 8;

// Least-squares fit of log(gap_j) = log(C) + slope * j over j in [j_lo, j_hi].
inline ConvergenceFit convergence_fit(const BoundsSequence& seq, int j_lo = 4, int j_hi = 40) {
  const int hi = std::min(j_hi, seq.max_j());
  if (j_lo < 1 || hi < j_lo) throw DomainError("empty fit range");

  ConvergenceFit fit;
  fit.reference_slope = std::log(std::abs(seq.params().lambda()));

  // Gaps at roundoff level of the bounds carry no slope information.
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * seq.upper(1);
  std::vector<double> xs;
  std::vector<double> ys;
  for (int j = j_lo; j <= hi; ++j) {
    if (seq.gap(j) > floor) {
      xs.push_back(j);
      ys.push_back(std::log(seq.gap(j)));
    }
  }
  if (xs.empty()) {
    fit.exact = true;
    return fit;
  }
  if (static_cast<int>(xs.size()) < kMinFitPoints) {
    throw InsufficientDataError("convergence fit needs " + std::to_string(kMinFitPoints) +
                                " resolvable gaps, found " + std::to_string(xs.size()));
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  fit.slope = sxy / sxx;
  fit.c_fit = std::exp(my - fit.slope * mx);
  fit.points = static_cast<int>(xs.size());
  return fit;
}

}  // namespace linkrate
