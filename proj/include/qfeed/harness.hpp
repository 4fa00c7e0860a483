#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "qfeed/distributions.hpp"
#include "qfeed/protocol.hpp"
#include "qfeed/theory.hpp"

namespace qfeed {

enum class QuantizerFamily { fixed, uniform, indicator, lattice };

enum class SweepAxis { none, m, eps, ell };

struct ExperimentPlan {
  ProtocolConfig base;
  SourceDistribution dist = Uniform{0.0, 1.0};
  std::int64_t replications = 100;
  std::int64_t window_lo = 1800;
  std::int64_t window_hi = 2000;
  SweepAxis axis = SweepAxis::none;
  std::vector<double> axis_values;
  std::uint64_t master_seed = 0;
  int threads = 0;  // 0 = hardware concurrency
  QuantizerFamily qfamily = QuantizerFamily::fixed;
  std::int64_t uniform_ell = 8;

  void validate_plan() const {
    base.validate();
    validate(dist);
    if (replications < 1) throw std::invalid_argument("plan: replications must be >= 1");
    if (window_lo < 1 || window_lo > window_hi || window_hi > base.horizon)
      throw std::invalid_argument("plan: window must satisfy 1 <= lo <= hi <= horizon");
    if (replications * (window_hi - window_lo + 1) < 2)
      throw std::invalid_argument("plan: window is degenerate (fewer than two pooled values)");
    if (axis != SweepAxis::none && axis_values.empty())
      throw std::invalid_argument("plan: sweep axis has no values");
  }
};

struct VarianceEstimate {
  double point = 0.0;
  double stderr_boot = 0.0;
  std::int64_t replications = 0;
  std::int64_t window_lo = 0;
  std::int64_t window_hi = 0;
};

namespace detail {

template <class Fn>
void parallel_for(std::int64_t count, int threads, Fn&& fn) {
  int n = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (static_cast<std::int64_t>(n) > count) n = static_cast<int>(count);
  if (n <= 1) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    pool.emplace_back([&] {
      while (true) {
        const std::int64_t i = next.fetch_add(1);
        if (i >= count) break;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Executes one seeded trajectory end to end. Every observation and channel
// draw is addressed by (seed, rep, sensor, step), so the result does not
// depend on scheduling.
inline Trajectory run_replication(const ProtocolConfig& cfg, const SourceDistribution& dist,
                                  std::uint64_t master_seed, std::uint64_t rep_index) {
  cfg.validate();
  validate(dist);
  ProtocolState st = initial_state(cfg);
  Trajectory tr;
  tr.master_seed = master_seed;
  tr.rep_index = rep_index;
  tr.thetas.reserve(static_cast<std::size_t>(cfg.horizon) + 1);
  tr.aggregates.reserve(static_cast<std::size_t>(cfg.horizon));
  tr.decisions.reserve(static_cast<std::size_t>(cfg.horizon));
  tr.thetas.push_back(st.theta);

  std::vector<double> obs(static_cast<std::size_t>(cfg.m));
  const StreamContext sc{master_seed, rep_index};
  for (std::int64_t n = 1; n <= cfg.horizon; ++n) {
    for (std::int64_t i = 0; i < cfg.m; ++i) {
      obs[static_cast<std::size_t>(i)] =
          sample(dist, StreamKey{master_seed, rep_index, static_cast<std::uint64_t>(i),
                                 static_cast<std::uint64_t>(n), Draw::observation});
    }
    const StepRecord rec = step(st, cfg, obs, sc);
    tr.thetas.push_back(st.theta);
    tr.aggregates.push_back(rec.aggregate);
    tr.decisions.push_back(rec.decision);
  }
  return tr;
}

// Pooled empirical variance of per-replication window values, with a
// replication-level bootstrap standard error (resampling whole runs).
inline VarianceEstimate pooled_variance(const std::vector<std::vector<double>>& rep_values,
                                        std::uint64_t master_seed) {
  const std::int64_t L = static_cast<std::int64_t>(rep_values.size());
  if (L < 1) throw std::invalid_argument("pooled_variance: no replications");

  const auto var_of = [](const std::vector<const std::vector<double>*>& groups) {
    std::int64_t n = 0;
    double mean = 0.0;
    for (const auto* g : groups) n += static_cast<std::int64_t>(g->size());
    if (n < 2) return 0.0;
    for (const auto* g : groups)
      for (const double v : *g) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto* g : groups)
      for (const double v : *g) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(n - 1);
  };

  std::vector<const std::vector<double>*> all(static_cast<std::size_t>(L));
  for (std::int64_t i = 0; i < L; ++i) all[static_cast<std::size_t>(i)] = &rep_values[static_cast<std::size_t>(i)];
  VarianceEstimate est;
  est.point = var_of(all);
  est.replications = L;

  constexpr std::int64_t kResamples = 200;
  std::vector<double> boot(kResamples);
  std::vector<const std::vector<double>*> pick(static_cast<std::size_t>(L));
  for (std::int64_t b = 0; b < kResamples; ++b) {
    for (std::int64_t j = 0; j < L; ++j) {
      const std::uint64_t bits =
          stream_bits(StreamKey{master_seed, static_cast<std::uint64_t>(b),
                                static_cast<std::uint64_t>(j), 0, Draw::bootstrap});
      pick[static_cast<std::size_t>(j)] = &rep_values[static_cast<std::size_t>(bits % static_cast<std::uint64_t>(L))];
    }
    boot[static_cast<std::size_t>(b)] = var_of(pick);
  }
  double bm = 0.0;
  for (const double v : boot) bm += v;
  bm /= static_cast<double>(kResamples);
  double bs = 0.0;
  for (const double v : boot) bs += (v - bm) * (v - bm);
  est.stderr_boot = std::sqrt(bs / static_cast<double>(kResamples - 1));
  return est;
}

// Runs L seeded replications and pools e_n = sqrt(n)(theta_n - theta*) over
// the window steps.
inline VarianceEstimate estimate_variance(const ExperimentPlan& plan) {
  plan.validate_plan();
  const double theta_star = quantile(plan.dist, plan.base.alpha);
  const std::int64_t L = plan.replications;
  std::vector<std::vector<double>> windows(static_cast<std::size_t>(L));

  detail::parallel_for(L, plan.threads, [&](std::int64_t rep) {
    const Trajectory tr =
        run_replication(plan.base, plan.dist, plan.master_seed, static_cast<std::uint64_t>(rep));
    auto& w = windows[static_cast<std::size_t>(rep)];
    w.reserve(static_cast<std::size_t>(plan.window_hi - plan.window_lo + 1));
    for (std::int64_t n = plan.window_lo; n <= plan.window_hi; ++n) {
      const double e = std::sqrt(static_cast<double>(n)) *
                       (tr.thetas[static_cast<std::size_t>(n)] - theta_star);
      w.push_back(e);
    }
  });

  VarianceEstimate est = pooled_variance(windows, plan.master_seed);
  est.window_lo = plan.window_lo;
  est.window_hi = plan.window_hi;
  return est;
}

struct SweepRow {
  std::string axis_name;
  double axis_value = 0.0;
  ProtocolConfig cfg;
  VarianceEstimate estimate;
  VariancePrediction prediction;
  double centralized_scaled = 0.0;  // sqrt(n)-scaled centralized variance at N = n*m
};

inline QuantizerSpec build_quantizer(QuantizerFamily family, std::int64_t uniform_ell,
                                     const ProtocolConfig& cfg) {
  switch (family) {
    case QuantizerFamily::uniform:
      return uniform_quantizer(uniform_ell, cfg.effective_alpha(), cfg.m);
    case QuantizerFamily::indicator:
      return indicator_quantizer();
    case QuantizerFamily::lattice:
      return lattice_quantizer(cfg.m, cfg.effective_alpha());
    case QuantizerFamily::fixed:
      break;
  }
  return cfg.quantizer;
}

inline VariancePrediction predict(const ProtocolConfig& cfg, const SourceDistribution& dist) {
  switch (cfg.protocol) {
    case Protocol::mbf: return predict_mbf(cfg, dist);
    case Protocol::obf: return predict_1bf(cfg, dist);
    case Protocol::qbf: return predict_qbf(cfg, dist);
  }
  throw std::logic_error("predict: unreachable");
}

inline const char* axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::m: return "m";
    case SweepAxis::eps: return "eps";
    case SweepAxis::ell: return "ell";
    case SweepAxis::none: break;
  }
  return "none";
}

// One row per axis value, each carrying the Monte Carlo estimate, the
// matching theoretical prediction, and the centralized baseline. Rows are
// computed in a fixed order; replication draws are addressed, so threading
// never changes the output.
inline std::vector<SweepRow> sweep(const ExperimentPlan& plan) {
  plan.validate_plan();
  if (plan.axis == SweepAxis::none)
    throw std::invalid_argument("sweep: plan has no axis");

  std::vector<SweepRow> rows;
  rows.reserve(plan.axis_values.size());
  for (const double v : plan.axis_values) {
    ExperimentPlan row_plan = plan;
    row_plan.axis = SweepAxis::none;
    switch (plan.axis) {
      case SweepAxis::m:
        row_plan.base.m = static_cast<std::int64_t>(v);
        break;
      case SweepAxis::eps:
        row_plan.base.channel.eps = Rational::from_double(v);
        break;
      case SweepAxis::ell:
        row_plan.qfamily = QuantizerFamily::uniform;
        row_plan.uniform_ell = static_cast<std::int64_t>(v);
        break;
      case SweepAxis::none:
        break;
    }
    if (row_plan.base.protocol == Protocol::qbf && row_plan.qfamily != QuantizerFamily::fixed) {
      row_plan.base.quantizer =
          build_quantizer(row_plan.qfamily, row_plan.uniform_ell, row_plan.base);
    }
    row_plan.base.validate();

    SweepRow row;
    row.axis_name = axis_name(plan.axis);
    row.axis_value = v;
    row.cfg = row_plan.base;
    row.estimate = estimate_variance(row_plan);
    row.prediction = predict(row_plan.base, plan.dist);
    row.centralized_scaled = centralized_baseline(row_plan.base.alpha, plan.dist, row_plan.base.m);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace qfeed
