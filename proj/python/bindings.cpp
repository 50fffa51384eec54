#include <optional>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cfs/config.hpp"
#include "cfs/io.hpp"
#include "cfs/presets.hpp"

namespace py = pybind11;

namespace {

cfs::ExperimentConfig parse_config(const std::string& text, std::optional<std::uint64_t> seed,
                                   std::optional<int> realizations) {
  auto cfg = cfs::ExperimentConfig::from_json(nlohmann::json::parse(text));
  if (seed) cfg.seed = *seed;
  if (realizations) cfg.realizations = *realizations;
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Stochastic nonlocal-in-time dynamics on a lattice Dirac Hilbert space";

  static py::handle error = py::register_exception<cfs::Error>(m, "CfsError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const nlohmann::json::exception& e) {
      const std::string msg = std::string("ConfigError: ") + e.what();
      py::set_error(error, msg.c_str());
    }
  });

  m.def("presets", [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& p : cfs::preset_list()) out.emplace_back(p.name, p.description);
    return out;
  });

  m.def("validate", [](const std::string& config_json) { parse_config(config_json, std::nullopt, std::nullopt); },
        py::arg("config_json"));

  // Returns the summary JSON text and the CSV tables as {file: text}.
  m.def(
      "run",
      [](const std::string& preset, const std::string& config_json, std::optional<std::uint64_t> seed,
         std::optional<int> realizations) {
        auto cfg = parse_config(config_json, seed, realizations);
        cfg.preset = preset;
        cfs::PresetResult result;
        {
          py::gil_scoped_release release;
          result = cfs::run_preset(preset, cfg);
        }
        std::map<std::string, std::string> tables;
        for (const auto& t : result.tables) tables[t.file] = cfs::to_csv(t);
        return std::pair{cfs::dump_json(cfs::summary_json(result, cfg)), tables};
      },
      py::arg("preset"), py::arg("config_json"), py::arg("seed") = py::none(),
      py::arg("realizations") = py::none());

  m.def(
      "dirac_h0",
      [](int sites, double spacing, double mass) {
        return cfs::build_dirac_h0(cfs::LatticeConfig{sites, spacing, mass}).matrix();
      },
      py::arg("sites"), py::arg("spacing") = 1.0, py::arg("mass") = 1.0);

  m.def("format_double", &cfs::format_double);
}
