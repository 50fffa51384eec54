#include "cfs/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cfs {

namespace {

void emit(const nlohmann::json& j, int indent, int depth, std::string& out) {
  const std::string pad = indent > 0 ? std::string(static_cast<std::size_t>(indent * (depth + 1)), ' ') : "";
  const std::string close_pad = indent > 0 ? std::string(static_cast<std::size_t>(indent * depth), ' ') : "";
  const char* nl = indent > 0 ? "\n" : "";
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{";
      out += nl;
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) {
          out += ",";
          out += nl;
        }
        first = false;
        out += pad + nlohmann::json(it.key()).dump() + (indent > 0 ? ": " : ":");
        emit(it.value(), indent, depth + 1, out);
      }
      out += nl + close_pad + "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[";
      out += nl;
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) {
          out += ",";
          out += nl;
        }
        out += pad;
        emit(j[i], indent, depth + 1, out);
      }
      out += nl + close_pad + "]";
      return;
    }
    case nlohmann::json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_double(v) : nlohmann::json(nullptr).dump();
      return;
    }
    default:
      out += j.dump();
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::IOFailure, "cannot open " + path.string());
  f << text;
  if (!f) throw Error(ErrorKind::IOFailure, "write failed for " + path.string());
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);
  return buf;
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) out += (i ? "," : "") + table.header[i];
  out += "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + format_double(row[i]);
    out += "\n";
  }
  return out;
}

std::string dump_json(const nlohmann::json& j, int indent) {
  std::string out;
  emit(j, indent, 0, out);
  out += "\n";
  return out;
}

nlohmann::json summary_json(const PresetResult& result, const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["preset"] = result.preset;
  j["seed"] = cfg.seed;
  j["realizations"] = cfg.realizations;
  j["pass"] = result.pass();
  j["config"] = cfg.to_json();
  j["config"]["ensemble"].erase("workers");  // scheduling only; results do not depend on it
  j["assertions"] = nlohmann::json::array();
  for (const auto& a : result.assertions) {
    nlohmann::json e{{"name", a.name}, {"pass", a.pass}, {"value", a.value}, {"relation", a.relation}};
    if (a.relation == "in") e["range"] = {a.lower, a.threshold};
    else e["threshold"] = a.threshold;
    if (!a.detail.empty()) e["detail"] = a.detail;
    j["assertions"].push_back(e);
  }
  j["exponents"] = nlohmann::json::object();
  for (const auto& [k, v] : result.exponents) j["exponents"][k] = v;
  j["metrics"] = nlohmann::json::object();
  for (const auto& [k, v] : result.metrics) j["metrics"][k] = v;
  j["notes"] = result.notes;
  nlohmann::json files = nlohmann::json::array();
  for (const auto& t : result.tables) files.push_back(t.file);
  j["tables"] = files;
  return j;
}

void write_outputs(const PresetResult& result, const ExperimentConfig& cfg, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IOFailure, "cannot create " + dir + ": " + ec.message());
  const std::filesystem::path root(dir);
  write_file(root / "summary.json", dump_json(summary_json(result, cfg)));
  for (const auto& t : result.tables) write_file(root / t.file, to_csv(t));
}

}  // namespace cfs
