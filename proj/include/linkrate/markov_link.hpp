#pragma once

// Single link: a two-state (closed = 0, open = 1) Markov chain with
// opening probability u and closing probability d per time step.

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>

#include "linkrate/error.hpp"

namespace linkrate {

enum class EntropyBase { bits, nats };

inline std::string_view to_string(EntropyBase base) {
  return base == EntropyBase::bits ? "bits" : "nats";
}

inline EntropyBase parse_entropy_base(std::string_view name) {
  if (name == "bits") return EntropyBase::bits;
  if (name == "nats") return EntropyBase::nats;
  throw DomainError("unknown entropy base '" + std::string(name) + "' (expected bits or nats)");
}

// Converts an entropy measured in nats to the requested unit.
constexpr double from_nats(double nats, EntropyBase base) {
  return base == EntropyBase::nats ? nats : nats / std::numbers::ln2;
}

// Smallest distance u and d must keep from 0 and 1.
inline constexpr double kParamMargin = 1e-9;

class LinkParams {
 public:
  LinkParams(double up_rate, double down_rate, EntropyBase base = EntropyBase::bits)
      : u_(up_rate), d_(down_rate), base_(base) {
    check("u", u_);
    check("d", d_);
  }

  double u() const noexcept { return u_; }
  double d() const noexcept { return d_; }
  EntropyBase base() const noexcept { return base_; }

  // Second eigenvalue of the transition matrix.
  double lambda() const noexcept { return 1.0 - u_ - d_; }

  LinkParams with_base(EntropyBase base) const { return LinkParams(u_, d_, base); }

  friend bool operator==(const LinkParams&, const LinkParams&) = default;

 private:
  static void check(const char* name, double value) {
    if (!(value >= kParamMargin && value <= 1.0 - kParamMargin)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "parameter " << name << " = " << value << " outside [" << kParamMargin << ", "
          << 1.0 - kParamMargin << "]";
      throw DomainError(msg.str());
    }
  }

  double u_;
  double d_;
  EntropyBase base_;
};

struct StationaryLaw {
  double up;    // U
  double down;  // D = 1 - U
};

inline StationaryLaw stationary(const LinkParams& params) {
  const double up = params.u() / (params.u() + params.d());
  return {up, 1.0 - up};
}

// Off-diagonal entries of T^j.
struct JStepKernel {
  int j;
  double up_rate;    // P[X_{t+j} = 1 | X_t = 0]
  double down_rate;  // P[X_{t+j} = 0 | X_t = 1]
};

inline JStepKernel jstep(const LinkParams& params, int j) {
  if (j < 1) throw DomainError("jstep requires j >= 1, got " + std::to_string(j));
  if (j == 1) return {1, params.u(), params.d()};
  const auto [up, down] = stationary(params);
  const double decay = 1.0 - std::pow(params.lambda(), j);
  return {j, up * decay, down * decay};
}

// P[X_{t+j} = 1 | X_t = 1] = U + D * lambda^j, evaluated without the
// cancellation of 1 - d_j. Defined for j >= 0 (equal to 1 at j = 0).
inline double stay_up_probability(const LinkParams& params, int j) {
  if (j < 0) throw DomainError("stay_up_probability requires j >= 0");
  if (j == 0) return 1.0;
  if (j == 1) return 1.0 - params.d();
  const auto [up, down] = stationary(params);
  return up + down * std::pow(params.lambda(), j);
}

// h(p) = -p log p - (1-p) log(1-p), with 0 log 0 = 0.
inline double binary_entropy(double p, EntropyBase base = EntropyBase::bits) {
  if (!(p >= 0.0 && p <= 1.0)) {
    std::ostringstream msg;
    msg << "binary_entropy argument " << p << " outside [0, 1]";
    throw DomainError(msg.str());
  }
  const auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
  return from_nats(-xlogx(p) - xlogx(1.0 - p), base);
}

// H(X_1) = h(U).
inline double link_entropy(const LinkParams& params) {
  return binary_entropy(stationary(params).up, params.base());
}

// Entropy rate of the j-step subsampled chain: U h(d_j) + D h(u_j).
inline double jstep_entropy_rate(const LinkParams& params, int j) {
  const auto [up, down] = stationary(params);
  const JStepKernel k = jstep(params, j);
  return up * binary_entropy(k.down_rate, params.base()) +
         down * binary_entropy(k.up_rate, params.base());
}

}  // namespace linkrate
