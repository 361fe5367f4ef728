#pragma once

// APK container handling and the composed static extraction:
// opcode streams across all dex entries, framework API references,
// declared permissions.

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tempo/axml.hpp"
#include "tempo/dex.hpp"
#include "tempo/io.hpp"
#include "tempo/zip.hpp"

namespace tempo {

struct ApkContainer {
  std::map<std::string, std::string> entries;
  std::vector<std::string> dex_paths;  // classes.dex, classes2.dex, ...
  std::string manifest_path;
};

namespace apkdetail {

// classes.dex -> 1, classesN.dex -> N, anything else -> -1
inline int dex_ordinal(const std::string& path) {
  const std::string prefix = "classes", suffix = ".dex";
  if (path.size() < prefix.size() + suffix.size()) return -1;
  if (path.compare(0, prefix.size(), prefix) != 0) return -1;
  if (path.compare(path.size() - suffix.size(), suffix.size(), suffix) != 0)
    return -1;
  std::string mid = path.substr(prefix.size(),
                                path.size() - prefix.size() - suffix.size());
  if (mid.empty()) return 1;
  int n = 0;
  for (char c : mid) {
    if (c < '0' || c > '9') return -1;
    n = n * 10 + (c - '0');
  }
  return n >= 2 ? n : -1;
}

}  // namespace apkdetail

inline ApkContainer open_apk(const std::filesystem::path& path) {
  std::string bytes = read_file(path);
  ApkContainer c;
  c.entries = unzip_all(bytes, path.string());

  std::vector<std::pair<int, std::string>> dexes;
  for (const auto& [name, payload] : c.entries) {
    int ord = apkdetail::dex_ordinal(name);
    if (ord > 0) dexes.emplace_back(ord, name);
  }
  std::sort(dexes.begin(), dexes.end());
  for (auto& [ord, name] : dexes) c.dex_paths.push_back(name);
  if (c.dex_paths.empty())
    throw MissingDex(path.string() + ": no classes.dex entry");
  if (!c.entries.count("AndroidManifest.xml"))
    throw MissingManifest(path.string() + ": no AndroidManifest.xml entry");
  c.manifest_path = "AndroidManifest.xml";
  return c;
}

struct ApkStaticFeatures {
  std::vector<uint8_t> opcodes;        // app-level concatenated stream
  std::vector<ApiRef> apis;            // deduplicated, sorted
  std::set<std::string> permissions;
  std::vector<std::string> warnings;
};

inline ApkStaticFeatures extract_features(
    const ApkContainer& c, const std::string& origin,
    const std::vector<std::string>& framework_prefixes =
        default_framework_prefixes()) {
  ApkStaticFeatures f;
  std::set<ApiRef> refs;
  for (size_t i = 0; i < c.dex_paths.size(); ++i) {
    const std::string& name = c.dex_paths[i];
    try {
      DexParseResult dr = parse_dex(c.entries.at(name), framework_prefixes);
      for (const auto& m : dr.methods)
        f.opcodes.insert(f.opcodes.end(), m.opcodes.begin(), m.opcodes.end());
      refs.insert(dr.api_refs.begin(), dr.api_refs.end());
      for (auto& w : dr.warnings) f.warnings.push_back(name + ": " + w);
    } catch (const Error& e) {
      // primary dex must parse; a broken secondary is skipped with a record
      if (i == 0) throw;
      f.warnings.push_back(origin + ": skipped malformed " + name + " (" +
                           e.what() + ")");
    }
  }
  f.apis.assign(refs.begin(), refs.end());
  f.permissions = parse_manifest_permissions(c.entries.at(c.manifest_path));
  return f;
}

inline ApkStaticFeatures extract_features(
    const std::filesystem::path& path,
    const std::vector<std::string>& framework_prefixes =
        default_framework_prefixes()) {
  return extract_features(open_apk(path), path.string(), framework_prefixes);
}

}  // namespace tempo
