#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qfeed/quantizer.hpp"
#include "qfeed/rational.hpp"

namespace qfeed {

namespace detail {

inline constexpr std::int64_t kSummationMaxM = 10000;

inline void kahan_add(double& sum, double& comp, double term) {
  const double y = term - comp;
  const double t = sum + y;
  comp = (t - sum) - y;
  sum = t;
}

// sum of Bin(m,r) pmf over [lo, hi], anchored at the largest in-range term
// so nothing underflows even far from the mode.
inline double pmf_sum(std::int64_t m, double r, std::int64_t lo, std::int64_t hi) {
  const std::int64_t mode = static_cast<std::int64_t>(std::floor((static_cast<double>(m) + 1.0) * r));
  std::int64_t anchor = mode;
  if (anchor < lo) anchor = lo;
  if (anchor > hi) anchor = hi;

  const double lp = std::lgamma(static_cast<double>(m) + 1.0) -
                    std::lgamma(static_cast<double>(anchor) + 1.0) -
                    std::lgamma(static_cast<double>(m - anchor) + 1.0) +
                    static_cast<double>(anchor) * std::log(r) +
                    static_cast<double>(m - anchor) * std::log1p(-r);

  double sum = 1.0;
  double comp = 0.0;
  double term = 1.0;
  for (std::int64_t i = anchor - 1; i >= lo; --i) {
    term *= static_cast<double>(i + 1) * (1.0 - r) / (static_cast<double>(m - i) * r);
    kahan_add(sum, comp, term);
    if (term * static_cast<double>(i - lo + 1) < sum * 1e-18) break;
  }
  term = 1.0;
  for (std::int64_t i = anchor + 1; i <= hi; ++i) {
    term *= static_cast<double>(m - i + 1) * r / (static_cast<double>(i) * (1.0 - r));
    kahan_add(sum, comp, term);
    if (term * static_cast<double>(hi - i + 1) < sum * 1e-18) break;
  }
  const double v = std::exp(lp) * sum;
  return v < 1.0 ? v : 1.0;
}

inline double cdf_by_summation(std::int64_t m, double r, std::int64_t k) {
  return pmf_sum(m, r, 0, k);
}

inline double beta_cont_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int mi = 1; mi <= kMaxIter; ++mi) {
    const double m2 = 2.0 * mi;
    double aa = mi * (b - mi) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + mi) * (qab + mi) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

inline double reg_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                     b * std::log1p(-x);
  const double bt = std::exp(lbt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cont_fraction(a, b, x) / a;
  return 1.0 - bt * beta_cont_fraction(b, a, 1.0 - x) / b;
}

inline int bit_width_u64(std::uint64_t v) {
  int w = 0;
  while (v != 0) {
    ++w;
    v >>= 1;
  }
  return w;
}

}  // namespace detail

// P(Bin(m,r) <= k), clamped to [0,1] outside the support. Exact-shape
// summation up to m = 1e4, regularized incomplete beta beyond.
inline double binomial_cdf(std::int64_t m, double r, std::int64_t k) {
  if (m < 1) throw std::domain_error("binomial_cdf: m must be >= 1");
  if (!(r >= 0.0 && r <= 1.0)) throw std::domain_error("binomial_cdf: r must be in [0,1]");
  if (k < 0) return 0.0;
  if (k >= m) return 1.0;
  if (r == 0.0) return 1.0;
  if (r == 1.0) return 0.0;
  if (m <= detail::kSummationMaxM) return detail::cdf_by_summation(m, r, k);
  return detail::reg_incomplete_beta(static_cast<double>(m - k), static_cast<double>(k + 1),
                                     1.0 - r);
}

// P(Bin(m,r) > k), the complementary tail; accurate where the CDF is near 1.
inline double binomial_sf(std::int64_t m, double r, std::int64_t k) {
  if (m < 1) throw std::domain_error("binomial_sf: m must be >= 1");
  if (!(r >= 0.0 && r <= 1.0)) throw std::domain_error("binomial_sf: r must be in [0,1]");
  if (k < 0) return 1.0;
  if (k >= m) return 0.0;
  if (r == 0.0) return 0.0;
  if (r == 1.0) return 1.0;
  if (m <= detail::kSummationMaxM) return detail::pmf_sum(m, r, k + 1, m);
  return detail::reg_incomplete_beta(static_cast<double>(k + 1), static_cast<double>(m - k), r);
}

// G(r, y) = P(Bin(m,r)/m <= y); the cutoff floor(m*y) is exact because y is
// rational.
inline double fraction_cdf(std::int64_t m, double r, const Rational& y) {
  return binomial_cdf(m, r, y.floor_scaled(m));
}

// dG/dr at integer cutoff k, via the identity
//   sum_{i<=k} (i - m r) pmf(i) = m r [F_{m-1}(k-1) - F_m(k)] / r
// which is the covariance form E[X 1(X<=k)] - E[X] E[1(X<=k)] over r(1-r).
// The difference switches to complementary tails when the CDFs are the
// larger side, keeping the cancellation relative to the answer.
inline double binomial_cdf_dr(std::int64_t m, double r, std::int64_t k) {
  if (m < 1) throw std::domain_error("binomial_cdf_dr: m must be >= 1");
  if (!(r > 0.0 && r < 1.0)) throw std::domain_error("binomial_cdf_dr: r must be in (0,1)");
  if (k < 0 || k >= m) return 0.0;
  const double upper = binomial_cdf(m, r, k);
  double diff;
  if (upper <= 0.5) {
    const double lower = m > 1 ? binomial_cdf(m - 1, r, k - 1) : (k - 1 >= 0 ? 1.0 : 0.0);
    diff = lower - upper;
  } else {
    const double sf_m = binomial_sf(m, r, k);
    const double sf_m1 = m > 1 ? binomial_sf(m - 1, r, k - 1) : (k - 1 >= 0 ? 0.0 : 1.0);
    diff = sf_m - sf_m1;
  }
  return static_cast<double>(m) * diff / (1.0 - r);
}

inline double fraction_cdf_dr(std::int64_t m, double r, const Rational& y) {
  return binomial_cdf_dr(m, r, y.floor_scaled(m));
}

// Large-m limit of dG/dr at r = alpha: -sqrt(m / (2 pi alpha (1-alpha))).
inline double fraction_cdf_dr_limit(std::int64_t m, const Rational& alpha) {
  if (m < 1) throw std::domain_error("fraction_cdf_dr_limit: m must be >= 1");
  if (!alpha.in_open_unit_interval())
    throw std::domain_error("fraction_cdf_dr_limit: alpha must be in (0,1)");
  const double a = alpha.value();
  return -std::sqrt(static_cast<double>(m) / (2.0 * M_PI * a * (1.0 - a)));
}

// Expected quantizer output applied to (x - Bin(m,r)/m):
//   sum_k out_k [G(r, x - cut_{k-1}) - G(r, x - cut_k)]
// with G taken as 0 below the support and 1 at or above it. Edge cutoffs are
// floored exactly even though breakpoints are doubles.
inline double quantized_expectation(std::int64_t m, double r, const Rational& x,
                                    const QuantizerSpec& q) {
  q.validate();
  if (m < 1) throw std::domain_error("quantized_expectation: m must be >= 1");
  if (!(r >= 0.0 && r <= 1.0)) throw std::domain_error("quantized_expectation: r must be in [0,1]");
  const std::size_t nc = q.cuts.size();
  std::vector<double> edges(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    edges[i] = binomial_cdf(m, r, floor_scaled_diff(m, x, q.cuts[i]));
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < q.outputs.size(); ++k) {
    const double hi = k == 0 ? 1.0 : edges[k - 1];
    const double lo = k == nc ? 0.0 : edges[k];
    acc += q.outputs[k] * (hi - lo);
  }
  return acc;
}

// d/dr of the quantized expectation, per cell from the covariance form.
inline double quantized_expectation_dr(std::int64_t m, double r, const Rational& x,
                                       const QuantizerSpec& q) {
  q.validate();
  if (m < 1) throw std::domain_error("quantized_expectation_dr: m must be >= 1");
  if (!(r > 0.0 && r < 1.0))
    throw std::domain_error("quantized_expectation_dr: r must be in (0,1)");
  const std::size_t nc = q.cuts.size();
  std::vector<double> edges(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    edges[i] = binomial_cdf_dr(m, r, floor_scaled_diff(m, x, q.cuts[i]));
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < q.outputs.size(); ++k) {
    const double hi = k == 0 ? 0.0 : edges[k - 1];
    const double lo = k == nc ? 0.0 : edges[k];
    acc += q.outputs[k] * (hi - lo);
  }
  return acc;
}

// ---- exact small-m evaluation over rationals -------------------------------
//
// When the success probability, the level, and the quantizer are all
// rational and den^m fits comfortably in 128 bits, tails and quantized
// expectations are computed in exact integer arithmetic and rounded once.
// This is what makes protocol-embedding offsets exact (a zero offset is a
// true +0.0), at any m that matters for such tests.

namespace detail {

inline bool exact_tail_feasible(std::int64_t m, const Rational& r, int extra_bits) {
  if (m < 1 || m > 100) return false;
  if (!r.in_unit_interval()) return false;
  const int bb = bit_width_u64(static_cast<std::uint64_t>(r.den()));
  const int bm = bit_width_u64(static_cast<std::uint64_t>(m));
  return (m + 1) * bb + bm + extra_bits <= 120;
}

// cumulative numerators N[j] = sum_{i<=j} C(m,i) a^i (b-a)^(m-i); N[m] = b^m
inline std::vector<u128> exact_tail_numerators(std::int64_t m, const Rational& r) {
  const u128 a = static_cast<u128>(r.num());
  const u128 b = static_cast<u128>(r.den());
  const u128 c = b - a;
  std::vector<u128> cum(static_cast<std::size_t>(m) + 1);
  u128 term = 1;
  for (std::int64_t i = 0; i < m; ++i) term *= c;  // c^m
  u128 run = term;
  cum[0] = run;
  for (std::int64_t i = 0; i + 1 <= m; ++i) {
    // C(m,i+1) a^{i+1} c^{m-i-1} from the previous term
    if (term == 0) {
      cum[static_cast<std::size_t>(i) + 1] = run;
      continue;
    }
    term = (term / c) * a * static_cast<u128>(m - i) / static_cast<u128>(i + 1);
    run += term;
    cum[static_cast<std::size_t>(i) + 1] = run;
  }
  return cum;
}

inline double exact_ratio_to_double(i128 num, u128 den) {
  if (num == 0) return 0.0;
  const bool neg = num < 0;
  const u128 an = static_cast<u128>(neg ? -num : num);
  if (an == den) return neg ? -1.0 : 1.0;
  const double v = static_cast<double>(an) / static_cast<double>(den);
  return neg ? -v : v;
}

}  // namespace detail

// G(r, y) with rational r; exact for small m, summation/beta otherwise.
inline double fraction_cdf_rational(std::int64_t m, const Rational& r, const Rational& y) {
  if (m < 1) throw std::domain_error("fraction_cdf_rational: m must be >= 1");
  if (!r.in_unit_interval())
    throw std::domain_error("fraction_cdf_rational: r must be in [0,1]");
  const std::int64_t k = y.floor_scaled(m);
  if (k < 0) return 0.0;
  if (k >= m) return 1.0;
  if (r.is_zero()) return 1.0;
  if (r.num() == r.den()) return 0.0;
  if (detail::exact_tail_feasible(m, r, 8)) {
    const auto cum = detail::exact_tail_numerators(m, r);
    return detail::exact_ratio_to_double(static_cast<detail::i128>(cum[static_cast<std::size_t>(k)]),
                                         cum[static_cast<std::size_t>(m)]);
  }
  return binomial_cdf(m, r.value(), k);
}

// Quantized expectation with rational r; exact when the quantizer carries
// rational levels and the width check passes, float otherwise.
inline double quantized_expectation_rational(std::int64_t m, const Rational& r, const Rational& x,
                                             const QuantizerSpec& q) {
  q.validate();
  if (m < 1) throw std::domain_error("quantized_expectation_rational: m must be >= 1");
  if (!r.in_unit_interval())
    throw std::domain_error("quantized_expectation_rational: r must be in [0,1]");

  detail::i128 vden = 1;
  bool exact_ok = q.has_exact() && !r.is_zero() && r.num() != r.den();
  if (exact_ok) {
    for (const auto& o : q.exact_outputs) {
      const detail::i128 g = detail::gcd128(vden, o.den());
      vden = vden / g * o.den();
      if (vden > (static_cast<detail::i128>(1) << 62)) {
        exact_ok = false;
        break;
      }
    }
  }
  if (exact_ok) {
    // the indicator quantizer (vden == 1) must dispatch exactly like the
    // plain tail so the one-bit protocol and its embedding share offsets
    const int vbits = detail::bit_width_u64(static_cast<std::uint64_t>(vden));
    exact_ok = detail::exact_tail_feasible(m, r, 8 + vbits - 1);
  }

  if (exact_ok) {
    const auto cum = detail::exact_tail_numerators(m, r);
    const detail::u128 total = cum[static_cast<std::size_t>(m)];
    const std::size_t nc = q.exact_cuts.size();
    std::vector<detail::u128> edge(nc);
    for (std::size_t i = 0; i < nc; ++i) {
      const std::int64_t k = (x - q.exact_cuts[i]).floor_scaled(m);
      edge[i] = k < 0 ? static_cast<detail::u128>(0)
                      : (k >= m ? total : cum[static_cast<std::size_t>(k)]);
    }
    detail::i128 acc = 0;
    for (std::size_t k = 0; k < q.exact_outputs.size(); ++k) {
      const detail::u128 hi = k == 0 ? total : edge[k - 1];
      const detail::u128 lo = k == nc ? 0 : edge[k];
      const detail::i128 mass = static_cast<detail::i128>(hi - lo);
      const Rational& o = q.exact_outputs[k];
      acc += (vden / o.den()) * o.num() * mass;
    }
    return detail::exact_ratio_to_double(acc, static_cast<detail::u128>(vden) * total);
  }
  return quantized_expectation(m, r.value(), x, q);
}

}  // namespace qfeed
