#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"

#include "cfs/config.hpp"
#include "cfs/io.hpp"
#include "cfs/presets.hpp"

using namespace cfs;
using nlohmann::json;

namespace {

json preset_json(const std::string& name) {
  std::ifstream in(std::string(CFS_PRESET_DIR) + "/" + name + ".json");
  REQUIRE(in);
  return json::parse(in);
}

bool throws_config_error(const json& j) {
  try {
    ExperimentConfig::from_json(j).validate();
  } catch (const Error& e) {
    return e.kind() == ErrorKind::ConfigError;
  }
  return false;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cfs_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("every shipped preset config loads and validates") {
  for (const auto& p : preset_list()) {
    const auto cfg = ExperimentConfig::from_json(preset_json(p.name));
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.preset == p.name);
    CHECK(is_preset(p.name));
  }
  CHECK(preset_list().size() == 7);
  CHECK_FALSE(is_preset("nonexistent"));
}

TEST_CASE("unknown keys and bad values are rejected") {
  const json base = preset_json("conservation");
  CHECK_FALSE(throws_config_error(base));
  json j = base;
  j["extra"] = 1;
  CHECK(throws_config_error(j));
  j = base;
  j["lattice"]["spacingg"] = 1.0;
  CHECK(throws_config_error(j));
  j = base;
  j["kernel"]["channels"][0]["colour"] = "red";
  CHECK(throws_config_error(j));
  j = base;
  j["kernel"]["channels"][0]["kind"] = "laser";
  CHECK(throws_config_error(j));
  j = base;
  j["ensemble"]["realizations"] = 1;
  CHECK(throws_config_error(j));
  j = base;
  j["time"]["dt"] = 0.25;
  CHECK(throws_config_error(j));
  j = base;
  j["lattice"]["sites"] = "four";
  CHECK(throws_config_error(j));
  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/config.json"), Error);
}

TEST_CASE("config echo round-trips") {
  const auto cfg = ExperimentConfig::from_json(preset_json("collapse-scenario"));
  const json echo = cfg.to_json();
  CHECK(ExperimentConfig::from_json(echo).to_json() == echo);
}

TEST_CASE("numbers are written with 17 significant digits") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0 / 3.0) == "0.33333333333333331");
  CHECK(format_double(-0.0) == "0");
  CHECK(std::stod(format_double(std::numbers::pi)) == std::numbers::pi);
  CHECK(dump_json(json{{"x", 0.1}}, 0) == "{\"x\":0.10000000000000001}\n");
  CHECK(dump_json(json{{"x", std::nan("")}}, 0) == "{\"x\":null}\n");
  const CsvTable t{"e.csv", {"t", "E_mean", "E_stderr", "trace_mean"}, {{0.0, 1.5, 0.25, 1.0}}};
  CHECK(to_csv(t) == "t,E_mean,E_stderr,trace_mean\n0,1.5,0.25,1\n");
}

TEST_CASE("log-slope fit recovers a power law") {
  CHECK(fit_log_slope({1.0, 0.5, 0.25}, {2.0, 0.25, 0.03125}) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("charge conjugation anticommutes with H0 for an odd number of sites") {
  auto defect = [](int sites) {
    const LatticeConfig lat{sites, 1.0, 1.0};
    const Operator h0 = build_dirac_h0(lat);
    double worst = 0.0;
    for (int i = 0; i < lat.dim(); ++i) {
      Vector e = Vector::Zero(lat.dim());
      e(i) = 1.0;
      worst = std::max(worst, (charge_conjugate(h0.matrix() * e) + h0.matrix() * charge_conjugate(e)).norm());
    }
    return worst;
  };
  CHECK(defect(5) < 1e-12);
  CHECK(defect(7) < 1e-12);
  CHECK(defect(4) > 0.1);

  const LatticeConfig odd{5, 1.0, 1.0};
  const Operator h0 = build_dirac_h0(odd);
  const auto psi = initial_state("two_branch", odd, h0, 0);
  const Observable sign = make_observable("energy_sign", odd, h0);
  CHECK(std::abs(expectation(psi, Operator(sign.op, true)).real()) < 1e-12);
  CHECK(l2_norm(psi) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(initial_state("two_branch", LatticeConfig{4, 1.0, 1.0}, build_dirac_h0({4, 1.0, 1.0}), 0), Error);
}

TEST_CASE("zero-noise conservation run keeps the product fixed") {
  unsetenv("CFS_WORKERS");
  json j = preset_json("conservation");
  j["kernel"]["channels"][0]["amplitude"] = 0.0;
  j["ensemble"]["realizations"] = 2;
  const auto cfg = ExperimentConfig::from_json(j);
  const auto res = run_preset("conservation", cfg);
  CHECK(res.pass());
  CHECK(res.metrics.at("drift_at_dt") <= 1e-12);
}

TEST_CASE("summary echo reproduces a byte-identical run") {
  unsetenv("CFS_WORKERS");
  json j = preset_json("conservation");
  j["ensemble"]["realizations"] = 3;
  const auto cfg = ExperimentConfig::from_json(j);
  const auto first_dir = scratch_dir("echo_a");
  write_outputs(run_preset("conservation", cfg), cfg, first_dir.string());

  const json summary = json::parse(slurp(first_dir / "summary.json"));
  CHECK(summary.at("seed") == cfg.seed);
  CHECK(summary.at("config").at("ensemble").count("workers") == 0);
  const auto again = ExperimentConfig::from_json(summary.at("config"));
  const auto second_dir = scratch_dir("echo_b");
  write_outputs(run_preset("conservation", again), again, second_dir.string());

  for (const char* f : {"summary.json", "conservation.csv"}) {
    const std::string a = slurp(first_dir / f);
    CHECK_FALSE(a.empty());
    CHECK(a == slurp(second_dir / f));
  }
  CHECK(slurp(first_dir / "conservation.csv").rfind("t,drift_dt,drift_half_dt,norm_mean\n", 0) == 0);
  CHECK_THROWS_AS(write_outputs(run_preset("conservation", cfg), cfg, "/proc/cfs_not_writable"), Error);
}

TEST_CASE("energy tables use the shared header") {
  unsetenv("CFS_WORKERS");
  json j = preset_json("no-heating");
  j["ensemble"]["realizations"] = 4;
  const auto res = run_preset("no-heating", ExperimentConfig::from_json(j));
  bool found = false;
  for (const auto& t : res.tables)
    if (t.file == "energy.csv") {
      found = true;
      CHECK(to_csv(t).rfind("t,E_mean,E_stderr,trace_mean\n", 0) == 0);
    }
  CHECK(found);
}
