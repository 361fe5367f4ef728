#pragma once

// The per-app NDJSON record that decouples extraction from the ML
// pipeline: one line per app with symbolized opcodes, framework API
// references and permissions.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tempo/dex.hpp"
#include "tempo/errors.hpp"

namespace tempo {

struct FeatureRecord {
  std::string sha256;
  std::vector<std::string> opcode_symbols;
  std::vector<std::string> apis;  // "class#method#descriptor"
  std::vector<std::string> permissions;
  std::vector<std::string> warnings;
};

inline std::string api_key(const ApiRef& a) {
  return a.class_name + "#" + a.method_name + "#" + a.descriptor;
}

inline ApiRef parse_api_key(const std::string& key) {
  size_t p1 = key.find('#');
  size_t p2 = p1 == std::string::npos ? std::string::npos : key.find('#', p1 + 1);
  if (p2 == std::string::npos)
    throw Error("bad api key (want class#method#descriptor): " + key);
  return ApiRef{key.substr(0, p1), key.substr(p1 + 1, p2 - p1 - 1),
                key.substr(p2 + 1)};
}

inline nlohmann::json to_json(const FeatureRecord& r) {
  return nlohmann::json{{"sha256", r.sha256},
                        {"opcode_symbols", r.opcode_symbols},
                        {"apis", r.apis},
                        {"permissions", r.permissions},
                        {"warnings", r.warnings}};
}

inline FeatureRecord record_from_json(const nlohmann::json& j) {
  FeatureRecord r;
  r.sha256 = j.at("sha256").get<std::string>();
  r.opcode_symbols = j.at("opcode_symbols").get<std::vector<std::string>>();
  r.apis = j.at("apis").get<std::vector<std::string>>();
  r.permissions = j.at("permissions").get<std::vector<std::string>>();
  if (j.contains("warnings"))
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

inline std::vector<FeatureRecord> read_ndjson(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("features file not found: " + path.string());
  std::vector<FeatureRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " +
                  e.what());
    }
  }
  return out;
}

inline void write_ndjson(const std::filesystem::path& path,
                         const std::vector<FeatureRecord>& records) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << "\n";
}

}  // namespace tempo
