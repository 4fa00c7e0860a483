#pragma once

#include <cmath>
#include <stdexcept>
#include <variant>

#include "qfeed/rational.hpp"
#include "qfeed/rng.hpp"

namespace qfeed {

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

// Acklam's rational approximation, then two Newton corrections against the
// erfc-based CDF; round trip |cdf(quantile(p)) - p| lands at machine level.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must be in (0,1)");
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  for (int it = 0; it < 2; ++it) {
    const double err = normal_cdf(x) - p;
    const double dens = normal_pdf(x);
    if (dens <= 0.0) break;
    x -= err / dens;
  }
  return x;
}

}  // namespace detail

struct Uniform {
  double a = 0.0;
  double b = 1.0;
};
struct Gaussian {
  double mu = 0.0;
  double sigma = 1.0;
};
struct Exponential {
  double rate = 1.0;
};

// Source law for sensor observations. Every kind has a strictly positive
// density on its support and a continuous strictly increasing CDF there.
using SourceDistribution = std::variant<Uniform, Gaussian, Exponential>;

inline void validate(const SourceDistribution& d) {
  if (const auto* u = std::get_if<Uniform>(&d)) {
    if (!(u->b > u->a)) throw std::invalid_argument("uniform: requires b > a");
    if (!std::isfinite(u->a) || !std::isfinite(u->b))
      throw std::invalid_argument("uniform: non-finite bounds");
  } else if (const auto* g = std::get_if<Gaussian>(&d)) {
    if (!(g->sigma > 0.0)) throw std::invalid_argument("gaussian: requires sigma > 0");
    if (!std::isfinite(g->mu) || !std::isfinite(g->sigma))
      throw std::invalid_argument("gaussian: non-finite parameters");
  } else if (const auto* e = std::get_if<Exponential>(&d)) {
    if (!(e->rate > 0.0)) throw std::invalid_argument("exponential: requires rate > 0");
    if (!std::isfinite(e->rate)) throw std::invalid_argument("exponential: non-finite rate");
  }
}

inline double cdf(const SourceDistribution& d, double x) {
  if (const auto* u = std::get_if<Uniform>(&d)) {
    if (x <= u->a) return 0.0;
    if (x >= u->b) return 1.0;
    return (x - u->a) / (u->b - u->a);
  }
  if (const auto* g = std::get_if<Gaussian>(&d)) {
    return detail::normal_cdf((x - g->mu) / g->sigma);
  }
  const auto& e = std::get<Exponential>(d);
  return x <= 0.0 ? 0.0 : -std::expm1(-e.rate * x);
}

inline double density(const SourceDistribution& d, double x) {
  if (const auto* u = std::get_if<Uniform>(&d)) {
    return (x < u->a || x > u->b) ? 0.0 : 1.0 / (u->b - u->a);
  }
  if (const auto* g = std::get_if<Gaussian>(&d)) {
    return detail::normal_pdf((x - g->mu) / g->sigma) / g->sigma;
  }
  const auto& e = std::get<Exponential>(d);
  return x < 0.0 ? 0.0 : e.rate * std::exp(-e.rate * x);
}

inline double quantile_p(const SourceDistribution& d, double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("quantile: level must be in (0,1)");
  if (const auto* u = std::get_if<Uniform>(&d)) {
    return u->a + p * (u->b - u->a);
  }
  if (const auto* g = std::get_if<Gaussian>(&d)) {
    return g->mu + g->sigma * detail::normal_quantile(p);
  }
  const auto& e = std::get<Exponential>(d);
  return -std::log1p(-p) / e.rate;
}

// Exact quantile at a rational level: the ground-truth theta*.
inline double quantile(const SourceDistribution& d, const Rational& alpha) {
  if (!alpha.in_open_unit_interval())
    throw std::domain_error("quantile: level must be in (0,1)");
  return quantile_p(d, alpha.value());
}

// Inverse-CDF sampling from an addressable stream draw.
inline double sample(const SourceDistribution& d, const StreamKey& key) {
  return quantile_p(d, stream_uniform(key));
}

}  // namespace qfeed
