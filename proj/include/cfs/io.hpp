#pragma once

// Output files of a preset run. Every floating-point value is printed with
// 17 significant digits so that reruns can be compared byte for byte.

#include <string>

#include "json.hpp"

#include "cfs/presets.hpp"

namespace cfs {

std::string format_double(double v);
std::string to_csv(const CsvTable& table);

// JSON text with floats in %.17g form and keys in sorted order.
std::string dump_json(const nlohmann::json& j, int indent = 2);

nlohmann::json summary_json(const PresetResult& result, const ExperimentConfig& cfg);

// Writes summary.json and the result's CSV tables into dir (created if missing).
void write_outputs(const PresetResult& result, const ExperimentConfig& cfg, const std::string& dir);

}  // namespace cfs
