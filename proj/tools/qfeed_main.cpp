// qfeed: simulator and theory toolkit for communication-constrained
// decentralized quantile estimation.
//
// Subcommands:
//   simulate  run one trajectory, write CSV + manifest
//   predict   emit closed-form variance predictions as JSON
//   sweep     run a replication sweep from a plan file, write CSV + manifest
//   figure    write plot-data files for the standard figures
//
// Exit codes: 0 success, 2 validation error, 3 I/O error.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qfeed/io.hpp"

namespace {

using nlohmann::json;
using namespace qfeed;

std::string now_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

SourceDistribution parse_dist(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  std::vector<double> args;
  if (colon != std::string::npos) {
    std::string rest = text.substr(colon + 1);
    std::size_t pos = 0;
    while (pos < rest.size()) {
      const auto comma = rest.find(',', pos);
      const std::string tok = rest.substr(pos, comma == std::string::npos ? comma : comma - pos);
      args.push_back(std::stod(tok));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  if (kind == "uniform") {
    return Uniform{args.size() > 0 ? args[0] : 0.0, args.size() > 1 ? args[1] : 1.0};
  }
  if (kind == "gaussian") {
    return Gaussian{args.size() > 0 ? args[0] : 0.0, args.size() > 1 ? args[1] : 1.0};
  }
  if (kind == "exponential") {
    return Exponential{args.size() > 0 ? args[0] : 1.0};
  }
  throw std::invalid_argument("unknown distribution: " + kind);
}

struct CliOptions {
  std::string config_file;
  std::string protocol;
  std::int64_t m = -1;
  std::string alpha;
  double K = -1.0;
  std::string gain_kind;
  std::int64_t horizon = -1;
  std::int64_t L = -1;
  std::int64_t seed = -1;
  std::string dist;
  std::string eps;
  std::string adjust;
  std::string quantizer;
  std::string window;
  double theta0 = std::numeric_limits<double>::quiet_NaN();
  int threads = -1;
  std::string out;
};

void add_config_flags(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--config", o.config_file, "JSON config or manifest file");
  cmd->add_option("--protocol", o.protocol, "mbf | obf | qbf");
  cmd->add_option("--m", o.m, "number of sensors");
  cmd->add_option("--alpha", o.alpha, "quantile level (p/q or decimal)");
  cmd->add_option("--K", o.K, "gain constant");
  cmd->add_option("--gain", o.gain_kind, "constant | decaying");
  cmd->add_option("--n", o.horizon, "number of update steps");
  cmd->add_option("--L", o.L, "replications");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--dist", o.dist, "source law, e.g. uniform:0,1");
  cmd->add_option("--eps", o.eps, "BSC crossover probability");
  cmd->add_option("--adjust-alpha", o.adjust, "on | off");
  cmd->add_option("--quantizer", o.quantizer, "uniform:ELL | indicator | lattice | FILE.json");
  cmd->add_option("--window", o.window, "variance window lo:hi");
  cmd->add_option("--theta0", o.theta0, "initial estimate");
  cmd->add_option("--threads", o.threads, "worker threads (0 = hardware)");
}

ExperimentPlan resolve_plan(const CliOptions& o) {
  ExperimentPlan plan;
  if (!o.config_file.empty()) {
    plan = io::plan_from_json(json::parse(io::read_text_file(o.config_file)));
  } else {
    plan.dist = Uniform{0.0, 1.0};
    plan.base.alpha = Rational(3, 10);
  }
  if (!o.protocol.empty()) plan.base.protocol = protocol_from_name(o.protocol);
  if (o.m >= 0) plan.base.m = o.m;
  if (!o.alpha.empty()) plan.base.alpha = Rational::parse(o.alpha);
  if (o.K >= 0.0) plan.base.gain.K = o.K;
  if (!o.gain_kind.empty()) {
    if (o.gain_kind == "constant") {
      plan.base.gain.kind = GainRule::Kind::constant;
    } else if (o.gain_kind == "decaying") {
      plan.base.gain.kind = GainRule::Kind::decaying;
    } else {
      throw std::invalid_argument("unknown gain kind: " + o.gain_kind);
    }
  }
  if (o.horizon >= 0) plan.base.horizon = o.horizon;
  if (o.L >= 0) plan.replications = o.L;
  if (o.seed >= 0) plan.master_seed = static_cast<std::uint64_t>(o.seed);
  if (!o.dist.empty()) plan.dist = parse_dist(o.dist);
  if (!o.eps.empty()) plan.base.channel.eps = Rational::parse(o.eps);
  if (!o.adjust.empty()) {
    if (o.adjust == "on") {
      plan.base.adjust_alpha = true;
    } else if (o.adjust == "off") {
      plan.base.adjust_alpha = false;
    } else {
      throw std::invalid_argument("--adjust-alpha takes on|off");
    }
  }
  if (!o.quantizer.empty()) {
    if (o.quantizer == "indicator") {
      plan.qfamily = QuantizerFamily::indicator;
    } else if (o.quantizer == "lattice") {
      plan.qfamily = QuantizerFamily::lattice;
    } else if (o.quantizer.rfind("uniform:", 0) == 0) {
      plan.qfamily = QuantizerFamily::uniform;
      plan.uniform_ell = std::stoll(o.quantizer.substr(8));
    } else {
      plan.qfamily = QuantizerFamily::fixed;
      const json qj = json::parse(io::read_text_file(o.quantizer));
      QuantizerSpec spec;
      spec.cuts = qj.at("cuts").get<std::vector<double>>();
      spec.outputs = qj.at("outputs").get<std::vector<double>>();
      plan.base.quantizer = spec;
    }
  }
  if (!o.window.empty()) {
    const auto colon = o.window.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("--window takes lo:hi");
    plan.window_lo = std::stoll(o.window.substr(0, colon));
    plan.window_hi = std::stoll(o.window.substr(colon + 1));
  } else if (o.horizon >= 0 && o.config_file.empty()) {
    plan.window_lo = std::max<std::int64_t>(1, (plan.base.horizon * 9) / 10);
    plan.window_hi = plan.base.horizon;
  }
  if (!std::isnan(o.theta0)) plan.base.theta0 = o.theta0;
  if (o.threads >= 0) plan.threads = o.threads;
  if (plan.base.protocol == Protocol::qbf && plan.qfamily != QuantizerFamily::fixed) {
    plan.base.quantizer = build_quantizer(plan.qfamily, plan.uniform_ell, plan.base);
  }
  return plan;
}

void write_manifest(const ExperimentPlan& plan, const std::vector<std::string>& outputs,
                    const std::string& path) {
  io::write_text_file(path, io::manifest_json(plan, outputs, now_utc()).dump(2) + "\n");
}

int cmd_simulate(const CliOptions& o) {
  ExperimentPlan plan = resolve_plan(o);
  plan.base.validate();
  validate(plan.dist);
  if (const auto warn = gain_stability_warning(plan.base, plan.dist)) {
    std::cerr << *warn << "\n";
  }
  const Trajectory tr = run_replication(plan.base, plan.dist, plan.master_seed, 0);
  const std::string prefix = o.out.empty() ? "trajectory" : o.out;
  const std::string csv_path = prefix + ".csv";
  io::write_text_file(csv_path, io::trajectory_csv(tr));
  write_manifest(plan, {csv_path}, prefix + ".manifest.json");
  std::cout << csv_path << "\n";
  return 0;
}

json prediction_json(const ExperimentPlan& plan) {
  const auto pred = predict(plan.base, plan.dist);
  json j;
  j["protocol"] = std::string(protocol_name(plan.base.protocol));
  j["m"] = plan.base.m;
  j["alpha"] = plan.base.alpha.to_string();
  j["eps"] = plan.base.channel.eps.to_string();
  j["gain"] = {
      {"kind", plan.base.gain.kind == GainRule::Kind::constant ? "constant" : "decaying"},
      {"K", plan.base.gain.K},
      {"K_eff", plan.base.gain.effective(plan.base.m)}};
  j["stability_ok"] = pred.stability_ok;
  j["stability_margin"] = pred.stability_margin;
  j["mse_rate"] = pred.mse_rate;
  j["feedback_bits"] = feedback_bits(plan.base);
  if (pred.stability_ok) j["scaled_variance"] = pred.scaled_variance;
  if (std::isfinite(pred.limit_scaled_variance))
    j["limit_scaled_variance"] = pred.limit_scaled_variance;
  if (std::isfinite(pred.kappa)) {
    j["kappa"] = pred.kappa;
    j["kappa_abs"] = pred.kappa_abs;
    j["kappa_limit"] = pred.kappa_limit;
  }
  if (plan.base.channel.noisy()) {
    const double px = density(plan.dist, quantile(plan.dist, plan.base.alpha));
    const auto pf = noisy_prefactors(plan.base.alpha, plan.base.channel.eps, plan.base.gain.K, px);
    if (pf.stable_m) j["v_m"] = pf.v_m;
    if (pf.stable_1) j["v_1"] = pf.v_1;
    const auto pfo = noisy_prefactors_optimal(plan.base.alpha, plan.base.channel.eps, px);
    j["v_m_opt"] = pfo.v_m;
    j["v_1_opt"] = pfo.v_1;
  }
  j["centralized_scaled"] = centralized_baseline(plan.base.alpha, plan.dist, plan.base.m);
  return j;
}

int cmd_predict(const CliOptions& o) {
  const ExperimentPlan plan = resolve_plan(o);
  plan.base.validate();
  const json j = prediction_json(plan);
  const std::string text = j.dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    io::write_text_file(o.out, text);
  }
  return 0;
}

int cmd_sweep(const std::string& plan_file, const CliOptions& o) {
  CliOptions merged = o;
  merged.config_file = plan_file;
  ExperimentPlan plan = resolve_plan(merged);
  if (plan.axis == SweepAxis::none)
    throw std::invalid_argument("sweep: plan file must contain a \"sweep\" section");
  const auto rows = sweep(plan);
  const std::string prefix = o.out.empty() ? "sweep" : o.out;
  const std::string csv_path = prefix + ".csv";
  io::write_text_file(csv_path, io::sweep_csv(rows, plan));
  write_manifest(plan, {csv_path}, prefix + ".manifest.json");
  std::cout << csv_path << "\n";
  return 0;
}

// ---- figures ----------------------------------------------------------------

ExperimentPlan figure_base(std::uint64_t seed, int threads) {
  ExperimentPlan plan;
  plan.base.protocol = Protocol::mbf;
  plan.base.m = 11;
  plan.base.alpha = Rational(3, 10);
  plan.base.gain = {GainRule::Kind::constant, 1.0};
  plan.base.theta0 = 0.5;
  plan.base.horizon = 2000;
  plan.dist = Uniform{0.0, 1.0};
  plan.replications = 100;
  plan.window_lo = 1800;
  plan.window_hi = 2000;
  plan.master_seed = seed;
  plan.threads = threads;
  return plan;
}

std::string series_file(const std::vector<std::pair<double, double>>& xy) {
  std::string out;
  for (const auto& [x, y] : xy) {
    out += io::fmt_double(x);
    out += ' ';
    out += io::fmt_double(y);
    out += '\n';
  }
  return out;
}

int cmd_figure(const std::string& id, const std::string& outdir, std::uint64_t seed,
               int threads) {
  const std::string dir = outdir.empty() ? "." : outdir;
  auto path = [&](const std::string& name) { return dir + "/" + name; };
  std::string readme = "Plot data for figure " + id + "\n\n";
  std::vector<std::string> outputs;
  ExperimentPlan plan = figure_base(seed, threads);

  auto emit = [&](const std::string& name, const std::string& content,
                  const std::string& desc) {
    io::write_text_file(path(name), content);
    outputs.push_back(name);
    readme += name + ": " + desc + "\n";
  };

  if (id == "2a") {
    for (std::uint64_t rep = 0; rep < 5; ++rep) {
      const auto tr = run_replication(plan.base, plan.dist, seed, rep);
      std::vector<std::pair<double, double>> xy;
      xy.reserve(tr.thetas.size());
      for (std::size_t n = 0; n < tr.thetas.size(); ++n) {
        xy.emplace_back(static_cast<double>(n), tr.thetas[n]);
      }
      emit("fig2a_path" + std::to_string(rep) + ".dat", series_file(xy),
           "sample path of theta_n (count feedback, m=11, alpha=3/10)");
    }
  } else if (id == "2b" || id == "2c") {
    const std::vector<double> ms = {11, 31, 101, 301, 1001};
    for (int which = 0; which < 2; ++which) {
      ExperimentPlan p = plan;
      p.axis = SweepAxis::m;
      p.axis_values = ms;
      std::string tag;
      if (which == 0) {
        p.base.protocol = Protocol::mbf;
        p.base.gain = {GainRule::Kind::constant, 1.0};
        tag = "mbf";
      } else if (id == "2b") {
        p.base.protocol = Protocol::obf;
        p.base.gain = {GainRule::Kind::constant, 1.0};
        tag = "obf_const";
      } else {
        p.base.protocol = Protocol::obf;
        p.base.gain = {GainRule::Kind::decaying, std::sqrt(2.0 * M_PI * 0.21)};
        tag = "obf_decay";
      }
      const auto rows = sweep(p);
      std::vector<std::pair<double, double>> emp, thr;
      for (const auto& row : rows) {
        emp.emplace_back(row.axis_value, row.estimate.point);
        thr.emplace_back(row.axis_value, row.prediction.scaled_variance);
      }
      emit("fig" + id + "_" + tag + "_empirical.dat", series_file(emp),
           "empirical variance of sqrt(n)(theta_n - theta*) vs m (" + tag + ")");
      emit("fig" + id + "_" + tag + "_theory.dat", series_file(thr),
           "predicted asymptotic variance vs m (" + tag + ")");
    }
  } else if (id == "3a") {
    std::vector<std::pair<double, double>> resc, finite, absd;
    ExperimentPlan p = plan;
    p.base.protocol = Protocol::qbf;
    p.base.m = 4000;
    for (std::int64_t ell = 1; ell <= 512; ell *= 2) {
      p.base.quantizer = uniform_quantizer(ell, p.base.alpha, p.base.m);
      const auto pred = predict_qbf(p.base, p.dist);
      resc.emplace_back(static_cast<double>(ell), pred.kappa_limit);
      finite.emplace_back(static_cast<double>(ell), pred.kappa);
      absd.emplace_back(static_cast<double>(ell), pred.kappa_abs);
    }
    emit("fig3a_kappa_rescaled.dat", series_file(resc),
         "asymptotic quantizer constant vs levels ell, rescaled by the centralized gold "
         "standard (m=4000 breakpoints)");
    emit("fig3a_kappa_finite_m.dat", series_file(finite),
         "finite-m quantizer constant vs levels ell (exact binomial masses, m=4000)");
    emit("fig3a_kappa_abs.dat", series_file(absd),
         "quantizer constant times the centralized constant vs levels ell (m=4000)");
  } else if (id == "3b") {
    std::vector<std::pair<double, double>> vm, v1;
    const double px = density(plan.dist, quantile(plan.dist, plan.base.alpha));
    for (int i = 0; i <= 49; ++i) {
      const Rational eps(i, 100);
      const auto pf = noisy_prefactors_optimal(plan.base.alpha, eps, px);
      vm.emplace_back(eps.value(), pf.v_m);
      v1.emplace_back(eps.value(), pf.v_1);
    }
    emit("fig3b_vm.dat", series_file(vm),
         "count-feedback MSE prefactor V_m(eps) at the per-eps optimal gain");
    emit("fig3b_v1.dat", series_file(v1),
         "one-bit MSE prefactor V_1(eps) at the per-eps optimal gain");
  } else {
    throw std::invalid_argument("unknown figure id: " + id);
  }

  io::write_text_file(path("README.txt"), readme);
  outputs.push_back("README.txt");
  write_manifest(plan, outputs, path("fig" + id + ".manifest.json"));
  std::cout << dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decentralized quantile estimation simulator and theory toolkit"};
  app.require_subcommand(1);

  CliOptions sim_opts, pred_opts, sweep_opts;
  std::string plan_file, figure_id, figure_outdir;
  std::int64_t figure_seed = 0;
  int figure_threads = 0;

  auto* sim = app.add_subcommand("simulate", "run one seeded trajectory");
  add_config_flags(sim, sim_opts);
  sim->add_option("--out", sim_opts.out, "output prefix");

  auto* pred = app.add_subcommand("predict", "emit closed-form predictions as JSON");
  add_config_flags(pred, pred_opts);
  pred->add_option("--out", pred_opts.out, "output file (default stdout)");

  auto* swp = app.add_subcommand("sweep", "run a parameter sweep from a plan file");
  swp->add_option("--plan", plan_file, "plan JSON file")->required();
  swp->add_option("--out", sweep_opts.out, "output prefix");
  swp->add_option("--seed", sweep_opts.seed, "master seed override");
  swp->add_option("--threads", sweep_opts.threads, "worker threads");
  swp->add_option("--L", sweep_opts.L, "replications override");

  auto* fig = app.add_subcommand("figure", "write plot-data files");
  fig->add_option("--id", figure_id, "2a | 2b | 2c | 3a | 3b")->required();
  fig->add_option("--outdir", figure_outdir, "output directory");
  fig->add_option("--seed", figure_seed, "master seed");
  fig->add_option("--threads", figure_threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_opts);
    if (pred->parsed()) return cmd_predict(pred_opts);
    if (swp->parsed()) return cmd_sweep(plan_file, sweep_opts);
    if (fig->parsed())
      return cmd_figure(figure_id, figure_outdir, static_cast<std::uint64_t>(figure_seed),
                        figure_threads);
  } catch (const io::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
