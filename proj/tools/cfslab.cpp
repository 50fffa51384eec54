// cfslab: run presets, list them, validate configs.
//
// Exit codes: 0 all assertions pass, 1 an assertion failed, 2 configuration
// error, 3 solver or I/O error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "cfs/config.hpp"
#include "cfs/io.hpp"
#include "cfs/presets.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

int exit_code_for(const cfs::Error& e) {
  switch (e.kind()) {
    case cfs::ErrorKind::ConfigError:
    case cfs::ErrorKind::InvalidArgument:
    case cfs::ErrorKind::GridTooCoarse:
    case cfs::ErrorKind::DimensionMismatch:
    case cfs::ErrorKind::ScenarioViolation:
      return kExitConfig;
    default:
      return kExitSolver;
  }
}

void print_assertion(const cfs::Assertion& a) {
  std::string bound = a.relation == "in"
                          ? "[" + cfs::format_double(a.lower) + ", " + cfs::format_double(a.threshold) + "]"
                          : cfs::format_double(a.threshold);
  std::cout << (a.pass ? "PASS " : "FAIL ") << a.name << ": " << cfs::format_double(a.value) << ' ' << a.relation
            << ' ' << bound << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cfslab: stochastic nonlocal-in-time dynamics experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a preset");
  std::string preset, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> realizations, workers;
  run->add_option("preset", preset, "preset name")->required();
  run->add_option("--config", config_path, "JSON config")->required();
  run->add_option("--seed", seed, "master seed");
  run->add_option("--realizations", realizations, "ensemble size");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--workers", workers, "worker threads (CFS_WORKERS overrides)");

  auto* list = app.add_subcommand("list-presets", "list the presets");

  auto* validate = app.add_subcommand("validate", "check a config without running it");
  std::string validate_path;
  validate->add_option("--config", validate_path, "JSON config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitConfig;
  }

  try {
    if (*list) {
      for (const auto& p : cfs::preset_list()) std::cout << p.name << "  " << p.description << '\n';
      return kExitPass;
    }
    if (*validate) {
      const auto cfg = cfs::ExperimentConfig::load(validate_path);
      cfg.validate();
      std::cout << "config ok: " << validate_path << '\n';
      return kExitPass;
    }

    if (!cfs::is_preset(preset)) {
      std::cerr << "unknown preset '" << preset << "'; valid presets:";
      for (const auto& p : cfs::preset_list()) std::cerr << ' ' << p.name;
      std::cerr << '\n';
      return kExitConfig;
    }
    auto cfg = cfs::ExperimentConfig::load(config_path);
    if (seed) cfg.seed = *seed;
    if (realizations) cfg.realizations = *realizations;
    if (workers) cfg.workers = *workers;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (!cfg.preset.empty() && cfg.preset != preset)
      std::cerr << "note: config names preset '" << cfg.preset << "', running '" << preset << "'\n";
    cfg.preset = preset;
    cfg.validate();

    const cfs::PresetResult result = cfs::run_preset(preset, cfg);
    cfs::write_outputs(result, cfg, cfg.output_dir);
    for (const auto& a : result.assertions) print_assertion(a);
    for (const auto& [k, v] : result.exponents) std::cout << "exponent " << k << " = " << cfs::format_double(v) << '\n';
    for (const auto& n : result.notes) std::cout << "note: " << n << '\n';
    std::cout << (result.pass() ? "PASS " : "FAIL ") << preset << " (seed " << cfg.seed << ", output "
              << cfg.output_dir << ")\n";
    return result.pass() ? kExitPass : kExitAssertion;
  } catch (const cfs::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: ConfigError: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSolver;
  }
}
