#pragma once

#include "twimpute/core_types.hpp"

#include <array>
#include <cmath>
#include <string>

namespace twimpute {

// Stationary two-state chain with P(1 | 0) = p and P(0 | 1) = q, observed with
// one missing value every k1 steps before the cut-off and every k2 after.
struct MarkovScenario {
  double p = 0.3;
  double q = 0.2;
  long k1 = 3;
  long k2 = 5;

  double lambda1() const { return q / (p + q); }  // P(x = 0)
  double lambda2() const { return p / (p + q); }  // P(x = 1)

  void validate() const {
    if (!(p > 0.0 && p < 1.0) || !(q > 0.0 && q < 1.0)) throw ConfigError("transition probabilities must lie in (0, 1)");
    if (k1 <= 2 || k2 <= 2) throw ConfigError("missing cadences k1, k2 must be integers > 2");
  }

  // Law of (x_t, x_{t-1}) over {(1,1), (1,0), (0,1), (0,0)}.
  std::array<double, 4> true_marginal() const {
    return {lambda2() * (1.0 - q), lambda1() * p, lambda2() * q, lambda1() * (1.0 - p)};
  }
};

// Law of (w_t, w_{t-1}) when a missing state is imputed as 1 with probability
// a after a 1 and b after a 0, one step in kk being imputed.
inline std::array<double, 4> implied_marginal(const MarkovScenario& s, double a, double b, long kk) {
  if (kk < 1) throw ConfigError("cadence must be >= 1");
  if (!(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0)) throw ConfigError("imputation parameters must lie in [0, 1]");
  const double f = 1.0 / static_cast<double>(kk);
  const double l1 = s.lambda1();
  const double l2 = s.lambda2();
  return {(1.0 - f) * l2 * (1.0 - s.q) + f * l2 * a, (1.0 - f) * l1 * s.p + f * l1 * b,
          (1.0 - f) * l2 * s.q + f * l2 * (1.0 - a), (1.0 - f) * l1 * (1.0 - s.p) + f * l1 * (1.0 - b)};
}

struct IdentificationResult {
  enum class Status { Unique, NonIdentified, Family };
  Status status = Status::Unique;
  // Unique solution (shared by both sides).
  double a = 0.0;
  double b = 0.0;
  // Family without the stability restriction: a2 = slope*a1 + a_offset,
  // b2 = slope*b1 + b_offset.
  double slope = 1.0;
  double a_offset = 0.0;
  double b_offset = 0.0;

  double a2_of(double a1) const { return slope * a1 + a_offset; }
  double b2_of(double b1) const { return slope * b1 + b_offset; }

  std::string describe() const {
    switch (status) {
      case Status::Unique: return "unique: a = " + std::to_string(a) + ", b = " + std::to_string(b);
      case Status::NonIdentified: return "non-identified: any a1 = a2, b1 = b2 matches both marginals";
      case Status::Family:
        return "family: a2 = " + std::to_string(slope) + " * a1 + " + std::to_string(a_offset) +
               ", b2 = " + std::to_string(slope) + " * b1 + " + std::to_string(b_offset);
    }
    return {};
  }
};

// Solves a1/k1 - a2/k2 = (1-q)(1/k1 - 1/k2), b1/k1 - b2/k2 = p(1/k1 - 1/k2).
// With the stability restriction (a1 = a2, b1 = b2) the solution is unique
// exactly when k1 != k2.
inline IdentificationResult solve_identification(const MarkovScenario& s, bool enforce_stability) {
  s.validate();
  IdentificationResult r;
  const double f1 = 1.0 / static_cast<double>(s.k1);
  const double f2 = 1.0 / static_cast<double>(s.k2);
  if (enforce_stability) {
    // With a1 = a2 = a the first equation reads a (f1 - f2) = (1-q)(f1 - f2).
    const double coef = f1 - f2;
    if (coef == 0.0) {
      r.status = IdentificationResult::Status::NonIdentified;
      return r;
    }
    r.status = IdentificationResult::Status::Unique;
    r.a = (1.0 - s.q) * coef / coef;
    r.b = s.p * coef / coef;
    return r;
  }
  r.status = IdentificationResult::Status::Family;
  r.slope = f1 / f2;
  r.a_offset = -(1.0 - s.q) * (r.slope - 1.0);
  r.b_offset = -s.p * (r.slope - 1.0);
  return r;
}

}  // namespace twimpute
