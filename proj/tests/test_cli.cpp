#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "qfeed_cli_tests";
  fs::create_directories(dir);
  const fs::path out = dir / ("out" + std::to_string(counter) + ".txt");
  const fs::path err = dir / ("err" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd =
      std::string(QFEED_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int rc = std::system(cmd.c_str());
  CliResult res;
  res.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  res.out = slurp(out);
  res.err = slurp(err);
  return res;
}

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "qfeed_cli_work";
  fs::create_directories(dir);
  return dir;
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (const char c : text) n += c == '\n' ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("simulate writes the trajectory CSV and a manifest") {
  const auto dir = work_dir();
  const auto prefix = (dir / "t1").string();
  const auto res = run_cli(
      "simulate --protocol mbf --m 11 --alpha 0.3 --K 1 --n 2000 --dist uniform:0,1 --seed 7 "
      "--out " +
      prefix);
  REQUIRE(res.code == 0);
  const std::string csv = slurp(prefix + ".csv");
  CHECK(line_count(csv) == 2002);  // header + theta0 + 2000 steps
  CHECK(csv.rfind("step,theta,aggregate,z\n", 0) == 0);
  const json manifest = json::parse(slurp(prefix + ".manifest.json"));
  CHECK(manifest.at("config").at("alpha") == "3/10");
  CHECK(manifest.at("config").at("m") == 11);
  CHECK(manifest.at("master_seed") == 7);
}

TEST_CASE("invalid level exits 2 and names the constraint") {
  const auto res = run_cli("simulate --protocol mbf --m 11 --alpha 1.2 --n 10");
  CHECK(res.code == 2);
  CHECK(res.err.find("0 < alpha < 1") != std::string::npos);
}

TEST_CASE("decaying gain records its effective value in the manifest") {
  const auto dir = work_dir();
  const auto prefix = (dir / "t2").string();
  const auto res = run_cli(
      "simulate --protocol obf --gain decaying --K 1 --m 101 --alpha 0.3 --n 100 --seed 1 "
      "--out " +
      prefix);
  REQUIRE(res.code == 0);
  const json manifest = json::parse(slurp(prefix + ".manifest.json"));
  const double keff = manifest.at("config").at("gain").at("K_eff").get<double>();
  CHECK(std::fabs(keff - 1.0 / std::sqrt(101.0)) < 1e-15);
}

TEST_CASE("a manifest reproduces its trajectory byte for byte") {
  const auto dir = work_dir();
  const auto p1 = (dir / "r1").string();
  REQUIRE(run_cli("simulate --protocol obf --m 7 --alpha 0.3 --K 1 --n 500 --seed 9 --out " + p1)
              .code == 0);
  const auto p2 = (dir / "r2").string();
  REQUIRE(run_cli("simulate --config " + p1 + ".manifest.json --out " + p2).code == 0);
  CHECK(slurp(p1 + ".csv") == slurp(p2 + ".csv"));
}

TEST_CASE("predict emits the closed-form record") {
  const auto res =
      run_cli("predict --protocol mbf --m 11 --alpha 0.3 --K 1 --dist uniform:0,1");
  REQUIRE(res.code == 0);
  const json j = json::parse(res.out);
  CHECK(j.at("stability_ok") == true);
  CHECK(std::fabs(j.at("scaled_variance").get<double>() - 0.21 / 11.0) < 1e-12);
  CHECK(j.at("mse_rate") == "1/(n*m)");
  CHECK(j.at("feedback_bits") == 4);
}

TEST_CASE("predict reports stability refusal as data, exit 0") {
  const auto res =
      run_cli("predict --protocol mbf --m 11 --alpha 0.3 --K 0.4 --dist uniform:0,1");
  REQUIRE(res.code == 0);
  const json j = json::parse(res.out);
  CHECK(j.at("stability_ok") == false);
  CHECK(!j.contains("scaled_variance"));
  CHECK(j.at("stability_margin").get<double>() < 0.0);
}

TEST_CASE("predict carries the quantizer constant for qbf") {
  const auto res = run_cli(
      "predict --protocol qbf --quantizer uniform:8 --m 4000 --alpha 0.3 --K 1 "
      "--dist uniform:0,1");
  REQUIRE(res.code == 0);
  const json j = json::parse(res.out);
  REQUIRE(j.contains("kappa"));
  const double kappa = j.at("kappa").get<double>();
  CHECK(kappa >= 1.0);
  CHECK(kappa <= 0.5 * M_PI + 0.05);
}

TEST_CASE("sweep runs from a plan file and is thread-invariant") {
  const auto dir = work_dir();
  const auto plan_path = dir / "plan.json";
  {
    json plan;
    plan["protocol"] = "mbf";
    plan["alpha"] = "3/10";
    plan["gain"] = {{"kind", "constant"}, {"K", 1.0}};
    plan["n"] = 400;
    plan["window"] = {300, 400};
    plan["L"] = 12;
    plan["seed"] = 5;
    plan["dist"] = {{"kind", "uniform"}, {"a", 0.0}, {"b", 1.0}};
    plan["sweep"] = {{"axis", "m"}, {"values", {11, 31}}};
    std::ofstream(plan_path) << plan.dump(2);
  }
  const auto p1 = (dir / "s1").string();
  const auto r1 = run_cli("sweep --plan " + plan_path.string() + " --threads 1 --out " + p1);
  REQUIRE(r1.code == 0);
  const auto p2 = (dir / "s2").string();
  const auto r2 = run_cli("sweep --plan " + plan_path.string() + " --threads 4 --out " + p2);
  REQUIRE(r2.code == 0);
  const std::string csv1 = slurp(p1 + ".csv");
  CHECK(csv1 == slurp(p2 + ".csv"));
  CHECK(csv1.rfind("axis_name,axis_value,protocol,m,alpha,eps,empirical_var,empirical_stderr,"
                   "predicted_var,centralized_var,L,n,window_lo,window_hi\n",
                   0) == 0);
  CHECK(line_count(csv1) == 3);

  // a sweep manifest is itself a valid plan
  const auto p3 = (dir / "s3").string();
  const auto r3 = run_cli("sweep --plan " + p1 + ".manifest.json --out " + p3);
  REQUIRE(r3.code == 0);
  CHECK(csv1 == slurp(p3 + ".csv"));
}

TEST_CASE("figure 3b emits two increasing diverging series") {
  const auto dir = work_dir() / "fig3b";
  fs::create_directories(dir);
  REQUIRE(run_cli("figure --id 3b --outdir " + dir.string()).code == 0);
  for (const std::string name : {"fig3b_vm.dat", "fig3b_v1.dat"}) {
    std::ifstream in(dir / name);
    REQUIRE(in.good());
    double x, y, prev = -1.0, first = -1.0;
    int rows = 0;
    while (in >> x >> y) {
      CHECK(y > prev);
      prev = y;
      if (rows == 0) first = y;
      ++rows;
    }
    CHECK(rows == 50);
    CHECK(prev > 10.0 * first);  // diverging toward eps = 1/2
  }
  CHECK(fs::exists(dir / "README.txt"));
}

TEST_CASE("figure 2a paths end near the quantile") {
  const auto dir = work_dir() / "fig2a";
  fs::create_directories(dir);
  REQUIRE(run_cli("figure --id 2a --outdir " + dir.string() + " --seed 3").code == 0);
  int series = 0;
  for (int rep = 0; rep < 5; ++rep) {
    std::ifstream in(dir / ("fig2a_path" + std::to_string(rep) + ".dat"));
    if (!in.good()) continue;
    ++series;
    double x = 0, y = 0;
    while (in >> x >> y) {
    }
    CHECK(std::fabs(y - 0.3) < 0.05);
  }
  CHECK(series >= 3);
}

TEST_CASE("unknown figure id exits 2") {
  CHECK(run_cli("figure --id 9z").code == 2);
}

TEST_CASE("unwritable output exits 3") {
  const auto res = run_cli(
      "simulate --protocol mbf --m 3 --alpha 0.3 --n 10 --out /nonexistent_dir/x");
  CHECK(res.code == 3);
}

TEST_CASE("a decaying gain below the stability bound warns on stderr") {
  const auto dir = work_dir();
  const auto res = run_cli(
      "simulate --protocol obf --gain decaying --K 0.5 --m 101 --alpha 0.3 --n 50 --seed 1 "
      "--out " +
      (dir / "warn").string());
  CHECK(res.code == 0);
  CHECK(res.err.find("warning") != std::string::npos);
}

TEST_CASE("shipped plan files parse and target the documented sweeps") {
  const fs::path plans = fs::path(QFEED_PLANS_DIR);
  {
    const json j = json::parse(slurp(plans / "mbf_m_sweep.json"));
    CHECK(j.at("protocol") == "mbf");
    CHECK(j.at("sweep").at("axis") == "m");
    CHECK(j.at("sweep").at("values") == json({11, 101, 1001}));
  }
  {
    const json j = json::parse(slurp(plans / "obf_m_sweep.json"));
    CHECK(j.at("protocol") == "obf");
    CHECK(j.at("sweep").at("axis") == "m");
  }
  {
    const json j = json::parse(slurp(plans / "noise_eps_sweep.json"));
    CHECK(j.at("sweep").at("axis") == "eps");
    CHECK(j.at("sweep").at("values").size() == 5);
  }
}
