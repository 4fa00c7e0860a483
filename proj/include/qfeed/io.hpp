#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qfeed/harness.hpp"

namespace qfeed::io {

using nlohmann::json;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- trajectory CSV ---------------------------------------------------------

inline std::string trajectory_csv(const Trajectory& tr) {
  std::string out = "step,theta,aggregate,z\n";
  out += "0," + fmt_double(tr.thetas[0]) + ",,\n";
  for (std::size_t n = 1; n < tr.thetas.size(); ++n) {
    out += std::to_string(n);
    out += ',';
    out += fmt_double(tr.thetas[n]);
    out += ',';
    out += fmt_double(tr.aggregates[n - 1]);
    out += ',';
    const double z = tr.decisions[n - 1];
    if (!std::isnan(z)) out += fmt_double(z);
    out += '\n';
  }
  return out;
}

// ---- sweep CSV --------------------------------------------------------------

inline std::string sweep_csv(const std::vector<SweepRow>& rows, const ExperimentPlan& plan) {
  std::string out =
      "axis_name,axis_value,protocol,m,alpha,eps,empirical_var,empirical_stderr,"
      "predicted_var,centralized_var,L,n,window_lo,window_hi\n";
  for (const auto& row : rows) {
    out += row.axis_name;
    out += ',';
    out += fmt_double(row.axis_value);
    out += ',';
    out += std::string(protocol_name(row.cfg.protocol));
    out += ',';
    out += std::to_string(row.cfg.m);
    out += ',';
    out += fmt_double(row.cfg.alpha.value());
    out += ',';
    out += fmt_double(row.cfg.channel.eps.value());
    out += ',';
    out += fmt_double(row.estimate.point);
    out += ',';
    out += fmt_double(row.estimate.stderr_boot);
    out += ',';
    out += fmt_double(row.prediction.scaled_variance);
    out += ',';
    out += fmt_double(row.centralized_scaled);
    out += ',';
    out += std::to_string(plan.replications);
    out += ',';
    out += std::to_string(plan.base.horizon);
    out += ',';
    out += std::to_string(plan.window_lo);
    out += ',';
    out += std::to_string(plan.window_hi);
    out += '\n';
  }
  return out;
}

// ---- config JSON ------------------------------------------------------------

inline Rational rational_from_json(const json& j) {
  if (j.is_string()) return Rational::parse(j.get<std::string>());
  if (j.is_number_integer()) return Rational(j.get<std::int64_t>(), 1);
  if (j.is_number()) return Rational::from_double(j.get<double>());
  throw std::invalid_argument("config: expected a number or \"p/q\" string");
}

inline SourceDistribution dist_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "uniform") return Uniform{j.value("a", 0.0), j.value("b", 1.0)};
  if (kind == "gaussian") return Gaussian{j.value("mu", 0.0), j.value("sigma", 1.0)};
  if (kind == "exponential") return Exponential{j.value("rate", 1.0)};
  throw std::invalid_argument("config: unknown distribution kind: " + kind);
}

inline json dist_to_json(const SourceDistribution& d) {
  json j;
  if (const auto* u = std::get_if<Uniform>(&d)) {
    j["kind"] = "uniform";
    j["a"] = u->a;
    j["b"] = u->b;
  } else if (const auto* g = std::get_if<Gaussian>(&d)) {
    j["kind"] = "gaussian";
    j["mu"] = g->mu;
    j["sigma"] = g->sigma;
  } else if (const auto* e = std::get_if<Exponential>(&d)) {
    j["kind"] = "exponential";
    j["rate"] = e->rate;
  }
  return j;
}

inline QuantizerFamily quantizer_family_from_json(const json& j, std::int64_t* ell) {
  const std::string kind = j.value("kind", "explicit");
  if (kind == "uniform") {
    *ell = j.value("ell", static_cast<std::int64_t>(8));
    return QuantizerFamily::uniform;
  }
  if (kind == "indicator") return QuantizerFamily::indicator;
  if (kind == "lattice") return QuantizerFamily::lattice;
  if (kind == "explicit") return QuantizerFamily::fixed;
  throw std::invalid_argument("config: unknown quantizer kind: " + kind);
}

inline ExperimentPlan plan_from_json(json j) {
  if (j.contains("config")) j = j.at("config");  // accept a manifest directly
  ExperimentPlan plan;
  plan.base.protocol = protocol_from_name(j.value("protocol", "mbf"));
  plan.base.m = j.value("m", static_cast<std::int64_t>(11));
  if (j.contains("alpha")) plan.base.alpha = rational_from_json(j.at("alpha"));
  if (j.contains("gain")) {
    const auto& g = j.at("gain");
    const std::string kind = g.value("kind", "constant");
    if (kind == "constant") {
      plan.base.gain.kind = GainRule::Kind::constant;
    } else if (kind == "decaying") {
      plan.base.gain.kind = GainRule::Kind::decaying;
    } else {
      throw std::invalid_argument("config: unknown gain kind: " + kind);
    }
    plan.base.gain.K = g.value("K", 1.0);
  }
  plan.base.theta0 = j.value("theta0", 0.5);
  plan.base.horizon = j.value("n", static_cast<std::int64_t>(2000));
  if (j.contains("eps")) plan.base.channel.eps = rational_from_json(j.at("eps"));
  plan.base.adjust_alpha = j.value("adjust_alpha", true);
  if (j.contains("dist")) plan.dist = dist_from_json(j.at("dist"));
  if (j.contains("quantizer")) {
    const auto& q = j.at("quantizer");
    plan.qfamily = quantizer_family_from_json(q, &plan.uniform_ell);
    if (plan.qfamily == QuantizerFamily::fixed) {
      QuantizerSpec spec;
      spec.cuts = q.at("cuts").get<std::vector<double>>();
      spec.outputs = q.at("outputs").get<std::vector<double>>();
      plan.base.quantizer = spec;
    }
  }
  plan.replications = j.value("L", static_cast<std::int64_t>(100));
  if (j.contains("window")) {
    const auto w = j.at("window").get<std::vector<std::int64_t>>();
    if (w.size() != 2) throw std::invalid_argument("config: window must be [lo, hi]");
    plan.window_lo = w[0];
    plan.window_hi = w[1];
  } else {
    plan.window_lo = std::max<std::int64_t>(1, (plan.base.horizon * 9) / 10);
    plan.window_hi = plan.base.horizon;
  }
  plan.master_seed = j.value("seed", static_cast<std::uint64_t>(0));
  plan.threads = j.value("threads", 0);
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    const std::string axis = s.at("axis").get<std::string>();
    if (axis == "m") {
      plan.axis = SweepAxis::m;
    } else if (axis == "eps") {
      plan.axis = SweepAxis::eps;
    } else if (axis == "ell") {
      plan.axis = SweepAxis::ell;
    } else {
      throw std::invalid_argument("config: unknown sweep axis: " + axis);
    }
    plan.axis_values = s.at("values").get<std::vector<double>>();
  }
  if (plan.base.protocol == Protocol::qbf && plan.qfamily != QuantizerFamily::fixed) {
    plan.base.quantizer = build_quantizer(plan.qfamily, plan.uniform_ell, plan.base);
  }
  return plan;
}

inline json plan_to_json(const ExperimentPlan& plan) {
  json j;
  j["protocol"] = std::string(protocol_name(plan.base.protocol));
  j["m"] = plan.base.m;
  j["alpha"] = plan.base.alpha.to_string();
  j["gain"] = {
      {"kind", plan.base.gain.kind == GainRule::Kind::constant ? "constant" : "decaying"},
      {"K", plan.base.gain.K},
      {"K_eff", plan.base.gain.effective(plan.base.m)}};
  j["theta0"] = plan.base.theta0;
  j["n"] = plan.base.horizon;
  j["eps"] = plan.base.channel.eps.to_string();
  j["adjust_alpha"] = plan.base.adjust_alpha;
  j["dist"] = dist_to_json(plan.dist);
  if (plan.base.protocol == Protocol::qbf) {
    switch (plan.qfamily) {
      case QuantizerFamily::uniform:
        j["quantizer"] = {{"kind", "uniform"}, {"ell", plan.uniform_ell}};
        break;
      case QuantizerFamily::indicator:
        j["quantizer"] = {{"kind", "indicator"}};
        break;
      case QuantizerFamily::lattice:
        j["quantizer"] = {{"kind", "lattice"}};
        break;
      case QuantizerFamily::fixed:
        j["quantizer"] = {{"kind", "explicit"},
                          {"cuts", plan.base.quantizer.cuts},
                          {"outputs", plan.base.quantizer.outputs}};
        break;
    }
  }
  j["L"] = plan.replications;
  j["window"] = {plan.window_lo, plan.window_hi};
  j["seed"] = plan.master_seed;
  j["threads"] = plan.threads;
  if (plan.axis != SweepAxis::none) {
    j["sweep"] = {{"axis", axis_name(plan.axis)}, {"values", plan.axis_values}};
  }
  return j;
}

inline json manifest_json(const ExperimentPlan& plan, const std::vector<std::string>& outputs,
                          const std::string& timestamp) {
  json j;
  j["tool"] = "qfeed";
  j["version"] = "0.1.0";
  j["timestamp"] = timestamp;
  j["master_seed"] = plan.master_seed;
  j["outputs"] = outputs;
  j["config"] = plan_to_json(plan);
  return j;
}

}  // namespace qfeed::io
