#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qfeed/binomial_kernel.hpp"
#include "qfeed/distributions.hpp"
#include "qfeed/quantizer.hpp"
#include "qfeed/rational.hpp"
#include "qfeed/rng.hpp"

namespace qfeed {

enum class Protocol { mbf, obf, qbf };

inline std::string_view protocol_name(Protocol p) {
  switch (p) {
    case Protocol::mbf: return "mbf";
    case Protocol::obf: return "obf";
    case Protocol::qbf: return "qbf";
  }
  return "?";
}

inline Protocol protocol_from_name(std::string_view s) {
  if (s == "mbf") return Protocol::mbf;
  if (s == "obf") return Protocol::obf;
  if (s == "qbf") return Protocol::qbf;
  throw std::invalid_argument("unknown protocol: " + std::string(s));
}

struct GainRule {
  enum class Kind { constant, decaying };
  Kind kind = Kind::constant;
  double K = 1.0;

  // K for constant, K/sqrt(m) for decaying
  double effective(std::int64_t m) const {
    return kind == Kind::constant ? K : K / std::sqrt(static_cast<double>(m));
  }
};

// Feedforward binary symmetric channel, i.i.d. per sensor per step.
struct ChannelModel {
  Rational eps;
  bool noisy() const { return !eps.is_zero(); }
};

struct ProtocolConfig {
  Protocol protocol = Protocol::mbf;
  std::int64_t m = 1;
  Rational alpha{1, 2};
  GainRule gain;
  double theta0 = 0.5;
  ChannelModel channel;
  bool adjust_alpha = true;
  std::int64_t horizon = 2000;
  QuantizerSpec quantizer;  // qbf only

  void validate() const {
    if (m < 1 || m > 10000000) throw std::invalid_argument("config: m must satisfy 1 <= m <= 1e7");
    if (!alpha.in_open_unit_interval())
      throw std::invalid_argument("config: alpha must satisfy 0 < alpha < 1");
    if (!(gain.K > 0.0) || !std::isfinite(gain.K))
      throw std::invalid_argument("config: gain K must be positive");
    if (!std::isfinite(theta0)) throw std::invalid_argument("config: theta0 must be finite");
    if (horizon < 1) throw std::invalid_argument("config: horizon must be >= 1");
    if (Rational(0, 1) > channel.eps || !(channel.eps < Rational(1, 2)))
      throw std::invalid_argument("config: channel eps must satisfy 0 <= eps < 1/2");
    if (protocol == Protocol::qbf) quantizer.validate();
  }

  // level the fusion center aggregates against
  Rational effective_alpha() const;
};

// 1 iff the observation falls at or below the current estimate
inline int local_decision(double x, double theta) { return x <= theta ? 1 : 0; }

// BSC crossover applied to one uplink bit
inline int channel_corrupt(int bit, const ChannelModel& ch, const StreamKey& key) {
  if (!ch.noisy()) return bit;
  return stream_bernoulli(key, ch.eps.value()) ? (bit ^ 1) : bit;
}

// alpha~(eps) = (1-2 eps) alpha + eps, exact in rationals
inline Rational adjusted_alpha(const Rational& alpha, const Rational& eps) {
  if (!(eps < Rational(1, 2))) throw std::domain_error("adjusted_alpha: eps must be < 1/2");
  if (eps < Rational(0, 1)) throw std::domain_error("adjusted_alpha: eps must be >= 0");
  return (Rational(1, 1) - Rational(2, 1) * eps) * alpha + eps;
}

inline Rational ProtocolConfig::effective_alpha() const {
  if (channel.noisy() && adjust_alpha) return adjusted_alpha(alpha, channel.eps);
  return alpha;
}

// offset that zeroes the drift at theta*: G_m(a,a) for obf, the quantized
// expectation at (a,a) for qbf. Exact small-m arithmetic keeps embedding
// offsets free of rounding (the lattice quantizer's offset is a true zero).
inline double beta_offset(const ProtocolConfig& cfg) {
  const Rational a = cfg.effective_alpha();
  switch (cfg.protocol) {
    case Protocol::mbf:
      throw std::logic_error("beta_offset: the count-feedback protocol has no offset");
    case Protocol::obf:
      return fraction_cdf_rational(cfg.m, a, a);
    case Protocol::qbf:
      return quantized_expectation_rational(cfg.m, a, a, cfg.quantizer);
  }
  return 0.0;
}

// per-round downlink payload in bits
inline std::int64_t feedback_bits(const ProtocolConfig& cfg) {
  auto ceil_log2 = [](std::uint64_t v) {
    std::int64_t b = 0;
    std::uint64_t p = 1;
    while (p < v) {
      p <<= 1;
      ++b;
    }
    return b < 1 ? 1 : b;
  };
  switch (cfg.protocol) {
    case Protocol::mbf: return ceil_log2(static_cast<std::uint64_t>(cfg.m) + 1);
    case Protocol::obf: return 1;
    case Protocol::qbf: return ceil_log2(cfg.quantizer.levels());
  }
  return 0;
}

struct ProtocolState {
  double theta = 0.0;
  std::int64_t step_index = 0;  // completed updates
  double beta = 0.0;
  double alpha_target = 0.0;  // effective level, as the double used in updates
  double gain = 0.0;
};

inline ProtocolState initial_state(const ProtocolConfig& cfg) {
  cfg.validate();
  ProtocolState st;
  st.theta = cfg.theta0;
  st.step_index = 0;
  st.beta = cfg.protocol == Protocol::mbf ? 0.0 : beta_offset(cfg);
  st.alpha_target = cfg.effective_alpha().value();
  st.gain = cfg.gain.effective(cfg.m);
  return st;
}

struct StepRecord {
  double aggregate = 0.0;  // received bit fraction
  double decision = std::numeric_limits<double>::quiet_NaN();  // Z; NaN for mbf
};

struct StreamContext {
  std::uint64_t seed = 0;
  std::uint64_t rep = 0;
};

// One synchronous round: local decisions, uplink (with optional BSC noise),
// aggregation against the effective level, and the gain-weighted update with
// step size 1/n. Updates are indexed from n = 1; theta0 is the initial
// condition.
inline StepRecord step(ProtocolState& st, const ProtocolConfig& cfg,
                       std::span<const double> observations, const StreamContext& sc) {
  assert(static_cast<std::int64_t>(observations.size()) == cfg.m);
  const std::int64_t n = st.step_index + 1;
  const bool noisy = cfg.channel.noisy();
  const double eps_d = cfg.channel.eps.value();

  std::int64_t count = 0;
  for (std::int64_t i = 0; i < cfg.m; ++i) {
    int bit = local_decision(observations[static_cast<std::size_t>(i)], st.theta);
    if (noisy) {
      const StreamKey key{sc.seed, sc.rep, static_cast<std::uint64_t>(i),
                          static_cast<std::uint64_t>(n), Draw::channel};
      if (stream_uniform(key) < eps_d) bit ^= 1;
    }
    count += bit;
  }
  const double ybar = static_cast<double>(count) / static_cast<double>(cfg.m);

  double z = 0.0;
  switch (cfg.protocol) {
    case Protocol::mbf:
      z = st.alpha_target - ybar;
      break;
    case Protocol::obf:
      z = ybar <= st.alpha_target ? 1.0 : 0.0;
      break;
    case Protocol::qbf:
      z = quantize(cfg.quantizer, st.alpha_target - ybar);
      break;
  }

  const double eps_n = 1.0 / static_cast<double>(n);
  st.theta += eps_n * st.gain * (z - st.beta);
  st.step_index = n;

  StepRecord rec;
  rec.aggregate = ybar;
  if (cfg.protocol != Protocol::mbf) rec.decision = z;
  return rec;
}

struct Trajectory {
  std::vector<double> thetas;      // horizon + 1 values, thetas[0] == theta0
  std::vector<double> aggregates;  // per applied step
  std::vector<double> decisions;   // Z per step; NaN for mbf
  std::uint64_t master_seed = 0;
  std::uint64_t rep_index = 0;
};

// Stability advisory for decaying gains: asymptotic normality needs
// K > sqrt(2 pi a (1-a)) / (2 (1-2 eps) p(theta*)). Never an error, since the
// bound depends on the density at theta*, which the protocol cannot know.
inline std::optional<std::string> gain_stability_warning(const ProtocolConfig& cfg,
                                                         const SourceDistribution& dist) {
  if (cfg.gain.kind != GainRule::Kind::decaying) return std::nullopt;
  const Rational a = cfg.effective_alpha();
  const double av = a.value();
  const double px = density(dist, quantile(dist, cfg.alpha));
  const double damp = 1.0 - 2.0 * cfg.channel.eps.value();
  if (!(px > 0.0)) return std::nullopt;
  const double bound = std::sqrt(2.0 * M_PI * av * (1.0 - av)) / (2.0 * damp * px);
  if (cfg.gain.K <= bound) {
    return "warning: decaying gain K=" + std::to_string(cfg.gain.K) +
           " is at or below the stability bound " + std::to_string(bound);
  }
  return std::nullopt;
}

}  // namespace qfeed
