#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "qfeed/binomial_kernel.hpp"
#include "qfeed/distributions.hpp"
#include "qfeed/protocol.hpp"

namespace qfeed {

struct VariancePrediction {
  Protocol protocol = Protocol::mbf;
  bool stability_ok = false;
  double stability_margin = std::numeric_limits<double>::quiet_NaN();  // gamma - 1/2
  double scaled_variance = std::numeric_limits<double>::quiet_NaN();   // Var of sqrt(n)(theta_n - theta*)
  std::string mse_rate;                                                // "1/(n*m)" or "1/(n*sqrt(m))"
  // large-m closed form for the configured gain rule (one-bit protocol)
  double limit_scaled_variance = std::numeric_limits<double>::quiet_NaN();
  // quantized protocol only: dimensionless constant (centralized-rescaled)
  // and the same constant times the centralized gold standard. kappa uses
  // the exact binomial cell masses at this m; kappa_limit evaluates masses
  // and slope kernel in their common Gaussian limit, which is the smooth
  // asymptotic curve (the finite-m value wobbles by ~1e-3 once quantizer
  // cells drop below the count lattice spacing).
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double kappa_abs = std::numeric_limits<double>::quiet_NaN();
  double kappa_limit = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

struct TheoryContext {
  Rational alpha_eff;
  double alpha_eff_d = 0.0;
  double theta_star = 0.0;
  double px = 0.0;    // density at theta*
  double damp = 1.0;  // 1 - 2 eps
  double gain = 0.0;  // effective gain
};

inline TheoryContext theory_context(const ProtocolConfig& cfg, const SourceDistribution& dist) {
  cfg.validate();
  validate(dist);
  if (cfg.channel.noisy() && !cfg.adjust_alpha)
    throw std::domain_error(
        "theory: a noisy channel without the alpha adjustment has a biased fixed point; "
        "predictions target theta* only");
  TheoryContext ctx;
  ctx.alpha_eff = cfg.effective_alpha();
  ctx.alpha_eff_d = ctx.alpha_eff.value();
  ctx.theta_star = quantile(dist, cfg.alpha);
  ctx.px = density(dist, ctx.theta_star);
  ctx.damp = 1.0 - 2.0 * cfg.channel.eps.value();
  ctx.gain = cfg.gain.effective(cfg.m);
  return ctx;
}

// second moment of the quantizer output under Bin(m, r)
inline double quantized_second_moment(std::int64_t m, double r, const Rational& x,
                                      const QuantizerSpec& q) {
  const std::size_t nc = q.cuts.size();
  std::vector<double> edges(nc);
  for (std::size_t i = 0; i < nc; ++i)
    edges[i] = binomial_cdf(m, r, floor_scaled_diff(m, x, q.cuts[i]));
  double acc = 0.0;
  for (std::size_t k = 0; k < q.outputs.size(); ++k) {
    const double hi = k == 0 ? 1.0 : edges[k - 1];
    const double lo = k == nc ? 0.0 : edges[k];
    acc += q.outputs[k] * q.outputs[k] * (hi - lo);
  }
  return acc;
}

}  // namespace detail

// Received-bit rate for a sensor thresholding at theta: eps + (1-2 eps) F(theta).
inline double received_rate(const ProtocolConfig& cfg, const SourceDistribution& dist,
                            double theta) {
  const double f = cdf(dist, theta);
  const double e = cfg.channel.eps.value();
  return e + (1.0 - 2.0 * e) * f;
}

// Mean one-step drift h(theta): the expected update direction divided by the
// step size. Vanishes exactly at theta* when the effective level matches the
// received-bit rate there.
inline double mean_field(const ProtocolConfig& cfg, const SourceDistribution& dist, double theta) {
  cfg.validate();
  validate(dist);
  const Rational a = cfg.effective_alpha();
  const double rate = received_rate(cfg, dist, theta);
  const double gain = cfg.gain.effective(cfg.m);
  switch (cfg.protocol) {
    case Protocol::mbf:
      return gain * (a.value() - rate);
    case Protocol::obf:
      return gain * (fraction_cdf(cfg.m, rate, a) - fraction_cdf_rational(cfg.m, a, a));
    case Protocol::qbf:
      return gain * (quantized_expectation(cfg.m, rate, a, cfg.quantizer) -
                     quantized_expectation_rational(cfg.m, a, a, cfg.quantizer));
  }
  return 0.0;
}

// Conditional one-step update variance R(theta).
inline double conditional_variance(const ProtocolConfig& cfg, const SourceDistribution& dist,
                                   double theta) {
  cfg.validate();
  validate(dist);
  const Rational a = cfg.effective_alpha();
  const double rate = received_rate(cfg, dist, theta);
  const double gain = cfg.gain.effective(cfg.m);
  switch (cfg.protocol) {
    case Protocol::mbf:
      return gain * gain * rate * (1.0 - rate) / static_cast<double>(cfg.m);
    case Protocol::obf: {
      const double g = fraction_cdf(cfg.m, rate, a);
      return gain * gain * g * (1.0 - g);
    }
    case Protocol::qbf: {
      const double mean = quantized_expectation(cfg.m, rate, a, cfg.quantizer);
      const double second = detail::quantized_second_moment(cfg.m, rate, a, cfg.quantizer);
      return gain * gain * (second - mean * mean);
    }
  }
  return 0.0;
}

// Count-feedback protocol: scaled variance K^2 a(1-a) / ((2 K damp p - 1) m).
inline VariancePrediction predict_mbf(const ProtocolConfig& cfg, const SourceDistribution& dist) {
  const auto ctx = detail::theory_context(cfg, dist);
  VariancePrediction out;
  out.protocol = Protocol::mbf;
  out.mse_rate = "1/(n*m)";
  const double gamma = ctx.gain * ctx.damp * ctx.px;
  out.stability_margin = gamma - 0.5;
  out.stability_ok = gamma > 0.5;
  if (!out.stability_ok) return out;
  const double a = ctx.alpha_eff_d;
  out.scaled_variance =
      ctx.gain * ctx.gain * a * (1.0 - a) / ((2.0 * gamma - 1.0) * static_cast<double>(cfg.m));
  return out;
}

// One-bit protocol. scaled_variance is the exact finite-m form
// K^2 G(a,a)(1-G(a,a)) / (2 gamma_m - 1) with the exact dG/dr;
// limit_scaled_variance is the large-m closed form for the gain rule.
inline VariancePrediction predict_1bf(const ProtocolConfig& cfg, const SourceDistribution& dist) {
  const auto ctx = detail::theory_context(cfg, dist);
  VariancePrediction out;
  out.protocol = Protocol::obf;
  out.mse_rate = cfg.gain.kind == GainRule::Kind::constant ? "1/(n*sqrt(m))" : "1/(n*m)";

  const double beta = fraction_cdf_rational(cfg.m, ctx.alpha_eff, ctx.alpha_eff);
  const double slope = fraction_cdf_dr(cfg.m, ctx.alpha_eff_d, ctx.alpha_eff);
  const double gamma = ctx.gain * std::fabs(slope) * ctx.damp * ctx.px;
  out.stability_margin = gamma - 0.5;
  out.stability_ok = gamma > 0.5;
  if (out.stability_ok) {
    out.scaled_variance = ctx.gain * ctx.gain * beta * (1.0 - beta) / (2.0 * gamma - 1.0);
  }

  const double a = ctx.alpha_eff_d;
  const double root = std::sqrt(2.0 * M_PI * a * (1.0 - a));
  const double K = cfg.gain.K;
  if (cfg.gain.kind == GainRule::Kind::constant) {
    const double den = 8.0 * K * ctx.damp * ctx.px * std::sqrt(static_cast<double>(cfg.m)) -
                       4.0 * root;
    if (den > 0.0) out.limit_scaled_variance = K * K * root / den;
  } else {
    const double den = 8.0 * K * ctx.damp * ctx.px - 4.0 * root;
    if (den > 0.0)
      out.limit_scaled_variance = K * K * root / den / static_cast<double>(cfg.m);
  }
  return out;
}

// Quantized-feedback protocol: exact finite-m variance via the per-cell
// covariance derivative, plus the quantizer constant
//   kappa = 2 pi (sum r_k^2 dG_k - beta^2) / (sum r_k dM_k)^2
// where dM uses the Gaussian cell masses exp(-m s^2 / (2 a(1-a))).
inline VariancePrediction predict_qbf(const ProtocolConfig& cfg, const SourceDistribution& dist) {
  if (cfg.protocol != Protocol::qbf) throw std::invalid_argument("predict_qbf: config is not qbf");
  const auto ctx = detail::theory_context(cfg, dist);
  VariancePrediction out;
  out.protocol = Protocol::qbf;
  out.mse_rate = "1/(n*m)";

  const double beta = quantized_expectation_rational(cfg.m, ctx.alpha_eff, ctx.alpha_eff,
                                                     cfg.quantizer);
  const double second =
      detail::quantized_second_moment(cfg.m, ctx.alpha_eff_d, ctx.alpha_eff, cfg.quantizer);
  const double slope =
      quantized_expectation_dr(cfg.m, ctx.alpha_eff_d, ctx.alpha_eff, cfg.quantizer);
  const double gamma = ctx.gain * std::fabs(slope) * ctx.damp * ctx.px;
  out.stability_margin = gamma - 0.5;
  out.stability_ok = gamma > 0.5;
  if (out.stability_ok) {
    out.scaled_variance =
        ctx.gain * ctx.gain * (second - beta * beta) / (2.0 * gamma - 1.0);
  }

  const double a = ctx.alpha_eff_d;
  const double va = a * (1.0 - a);
  const auto& q = cfg.quantizer;
  const std::size_t nc = q.cuts.size();
  std::vector<double> gauss(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    gauss[i] = std::exp(-static_cast<double>(cfg.m) * q.cuts[i] * q.cuts[i] / (2.0 * va));
  }
  double denom = 0.0;
  for (std::size_t k = 0; k < q.outputs.size(); ++k) {
    const double hi = k == 0 ? 0.0 : gauss[k - 1];
    const double lo = k == nc ? 0.0 : gauss[k];
    denom += q.outputs[k] * (hi - lo);
  }
  if (std::fabs(denom) < 1e-300)
    throw std::domain_error("predict_qbf: degenerate quantizer (zero Gaussian mean slope)");
  out.kappa = 2.0 * M_PI * (second - beta * beta) / (denom * denom);
  out.kappa_abs = out.kappa * va / (ctx.px * ctx.px);

  // matched Gaussian limit of masses and slope kernel
  const double scale = std::sqrt(static_cast<double>(cfg.m) / va);
  double beta_g = 0.0;
  double second_g = 0.0;
  for (std::size_t k = 0; k < q.outputs.size(); ++k) {
    const double hi = k == 0 ? 1.0 : detail::normal_cdf(-q.cuts[k - 1] * scale);
    const double lo = k == nc ? 0.0 : detail::normal_cdf(-q.cuts[k] * scale);
    beta_g += q.outputs[k] * (hi - lo);
    second_g += q.outputs[k] * q.outputs[k] * (hi - lo);
  }
  out.kappa_limit = 2.0 * M_PI * (second_g - beta_g * beta_g) / (denom * denom);
  return out;
}

struct NoisyPrefactors {
  bool stable_m = false;
  bool stable_1 = false;
  double v_m = std::numeric_limits<double>::quiet_NaN();
  double v_1 = std::numeric_limits<double>::quiet_NaN();
};

// Prop-style prefactors of the 1/(m n) MSE under BSC(eps) with a fixed K.
inline NoisyPrefactors noisy_prefactors(const Rational& alpha, const Rational& eps, double K,
                                        double px) {
  if (!(eps < Rational(1, 2)) || eps < Rational(0, 1))
    throw std::domain_error("noisy_prefactors: eps must be in [0, 1/2)");
  if (!(K > 0.0)) throw std::domain_error("noisy_prefactors: K must be positive");
  const Rational at = adjusted_alpha(alpha, eps);
  const double a = at.value();
  const double damp = 1.0 - 2.0 * eps.value();
  NoisyPrefactors out;
  const double dm = 2.0 * K * damp * px - 1.0;
  if (dm > 0.0) {
    out.stable_m = true;
    out.v_m = K * K * a * (1.0 - a) / dm;
  }
  const double root = std::sqrt(2.0 * M_PI * a * (1.0 - a));
  const double d1 = 8.0 * K * damp * px - 4.0 * root;
  if (d1 > 0.0) {
    out.stable_1 = true;
    out.v_1 = K * K * root / d1;
  }
  return out;
}

// Same prefactors with the per-eps optimal gains; both stay finite on all of
// [0, 1/2) and reduce to the noiseless optima at eps = 0.
inline NoisyPrefactors noisy_prefactors_optimal(const Rational& alpha, const Rational& eps,
                                                double px) {
  if (!(eps < Rational(1, 2)) || eps < Rational(0, 1))
    throw std::domain_error("noisy_prefactors_optimal: eps must be in [0, 1/2)");
  const Rational at = adjusted_alpha(alpha, eps);
  const double a = at.value();
  const double damp = 1.0 - 2.0 * eps.value();
  NoisyPrefactors out;
  out.stable_m = out.stable_1 = true;
  out.v_m = a * (1.0 - a) / (damp * damp * px * px);
  out.v_1 = 0.5 * M_PI * out.v_m;
  return out;
}

// Centralized sample-quantile MSE after N pooled observations.
inline double centralized_baseline(const Rational& alpha, const SourceDistribution& dist,
                                   std::int64_t total_samples) {
  if (total_samples < 1) throw std::domain_error("centralized_baseline: N must be >= 1");
  if (!alpha.in_open_unit_interval())
    throw std::domain_error("centralized_baseline: alpha must be in (0,1)");
  const double a = alpha.value();
  const double px = density(dist, quantile(dist, alpha));
  return a * (1.0 - a) / (px * px * static_cast<double>(total_samples));
}

// The ceil(N alpha)-th order statistic: inf{x : F_N(x) >= alpha}.
inline double centralized_sample_quantile(std::vector<double> samples, const Rational& alpha) {
  if (samples.empty()) throw std::invalid_argument("sample_quantile: empty input");
  if (!alpha.in_open_unit_interval())
    throw std::domain_error("sample_quantile: alpha must be in (0,1)");
  const std::int64_t n = static_cast<std::int64_t>(samples.size());
  const detail::i128 num = static_cast<detail::i128>(n) * alpha.num();
  std::int64_t rank = static_cast<std::int64_t>((num + alpha.den() - 1) / alpha.den());  // ceil
  if (rank < 1) rank = 1;
  if (rank > n) rank = n;
  auto nth = samples.begin() + (rank - 1);
  std::nth_element(samples.begin(), nth, samples.end());
  return *nth;
}

}  // namespace qfeed
