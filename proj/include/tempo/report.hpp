#pragma once

// Error analysis over VirusTotal behavior reports: content-addressed
// JSON cache, MITRE ATT&CK tactic/technique extraction, and prevalence
// tables over true-positive vs false-negative malware.

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "tempo/classifier.hpp"
#include "tempo/errors.hpp"
#include "tempo/io.hpp"

namespace tempo {

struct BehaviorReport {
  std::string sha256;
  std::set<std::string> tactics;
  std::set<std::string> techniques;  // ids like T1406
  std::set<std::string> tags;

  bool obfuscated_tag() const { return tags.count("obfuscated") > 0; }
  bool obfuscated_t1406() const { return techniques.count("T1406") > 0; }
};

// Accepts either the bare attributes object or the usual
// {"data": {"attributes": {...}}} wrapper. Parsed fields:
//   tags: [string...]
//   tactics: [string...]                        (flat form), and/or
//   attack_techniques: [{"id": "T1406", "tactic"/"tactics": ...}, ...]
inline BehaviorReport parse_behavior_report(const std::string& sha256,
                                            const std::string& raw_json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw_json);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedReport(sha256 + ": " + e.what());
  }
  const nlohmann::json* attrs = &j;
  if (j.contains("data") && j["data"].contains("attributes"))
    attrs = &j["data"]["attributes"];

  BehaviorReport r;
  r.sha256 = sha256;
  static const std::regex technique_re("^T\\d{4}$");
  if (attrs->contains("tags"))
    for (const auto& t : (*attrs)["tags"]) r.tags.insert(t.get<std::string>());
  if (attrs->contains("tactics"))
    for (const auto& t : (*attrs)["tactics"])
      r.tactics.insert(t.get<std::string>());
  if (attrs->contains("attack_techniques")) {
    for (const auto& e : (*attrs)["attack_techniques"]) {
      if (e.contains("id")) {
        std::string id = e["id"].get<std::string>();
        if (!std::regex_match(id, technique_re))
          throw MalformedReport(sha256 + ": bad technique id '" + id + "'");
        r.techniques.insert(id);
      }
      if (e.contains("tactic")) r.tactics.insert(e["tactic"].get<std::string>());
      if (e.contains("tactics"))
        for (const auto& t : e["tactics"]) r.tactics.insert(t.get<std::string>());
    }
  }
  return r;
}

// Network seam. Tests use a counting stub; the real client lives in the
// CLI where the API key is available.
class Transport {
 public:
  virtual ~Transport() = default;
  // returns the raw report JSON for the hash
  virtual std::string fetch(const std::string& sha256) = 0;
};

struct FetchOptions {
  std::filesystem::path cache_dir;
  bool offline = true;
  Transport* transport = nullptr;  // required when online
};

inline std::filesystem::path cache_path(const std::filesystem::path& cache_dir,
                                        const std::string& sha256) {
  return cache_dir / "vt" / (sha256 + ".json");
}

// Offline-first: the cache is authoritative; the network fills it.
inline BehaviorReport fetch_report(const std::string& sha256,
                                   const FetchOptions& opts) {
  auto path = cache_path(opts.cache_dir, sha256);
  if (std::filesystem::exists(path))
    return parse_behavior_report(sha256, read_file(path));
  if (opts.offline)
    throw CacheMiss("offline mode and no cached report for " + sha256);
  if (!opts.transport)
    throw ConfigInvalid("online fetch requires a transport");
  std::string raw = opts.transport->fetch(sha256);
  BehaviorReport r = parse_behavior_report(sha256, raw);  // validate first
  write_file(path, raw);
  return r;
}

struct PrevalenceRow {
  std::string key;
  size_t fn_hits = 0, tp_hits = 0;
  double fn_pct = 0.0, tp_pct = 0.0;
};

struct PrevalenceTable {
  std::vector<PrevalenceRow> rows;  // sorted by key
  size_t fn_denominator = 0;        // FN samples with a report
  size_t tp_denominator = 0;
  size_t missing_reports = 0;       // analyzed samples without a report
};

namespace reportdetail {

inline PrevalenceTable tabulate(
    const std::vector<std::pair<const BehaviorReport*, bool>>& cohort,  // (report, is_tp)
    size_t missing,
    const std::set<std::string> BehaviorReport::* field) {
  PrevalenceTable t;
  t.missing_reports = missing;
  std::map<std::string, std::pair<size_t, size_t>> hits;  // key -> (fn, tp)
  for (const auto& [rep, is_tp] : cohort) {
    (is_tp ? t.tp_denominator : t.fn_denominator)++;
    for (const auto& key : rep->*field)
      (is_tp ? hits[key].second : hits[key].first)++;
  }
  for (const auto& [key, fn_tp] : hits) {
    PrevalenceRow row;
    row.key = key;
    row.fn_hits = fn_tp.first;
    row.tp_hits = fn_tp.second;
    row.fn_pct = t.fn_denominator
                     ? 100.0 * double(row.fn_hits) / double(t.fn_denominator)
                     : 0.0;
    row.tp_pct = t.tp_denominator
                     ? 100.0 * double(row.tp_hits) / double(t.tp_denominator)
                     : 0.0;
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace reportdetail

struct PrevalenceResult {
  PrevalenceTable tactics;
  PrevalenceTable techniques;
};

// Cohort: malware test samples, split into TP and FN by the prediction
// file. Samples without a cached report are excluded and counted.
inline PrevalenceResult prevalence(
    const std::vector<Prediction>& predictions,
    const std::map<std::string, BehaviorReport>& reports) {
  std::vector<std::pair<const BehaviorReport*, bool>> cohort;
  size_t missing = 0;
  for (const auto& p : predictions) {
    if (p.true_label != 1) continue;  // malware only
    auto it = reports.find(p.sha256);
    if (it == reports.end()) {
      ++missing;
      continue;
    }
    cohort.emplace_back(&it->second, p.label == 1);
  }
  if (cohort.empty()) throw EmptyCohort("no malware samples with reports");
  PrevalenceResult out;
  out.tactics =
      reportdetail::tabulate(cohort, missing, &BehaviorReport::tactics);
  out.techniques =
      reportdetail::tabulate(cohort, missing, &BehaviorReport::techniques);
  return out;
}

struct ObfuscationBreakdown {
  size_t malware_with_reports = 0;
  size_t obfuscated = 0;
  size_t obfuscated_tp = 0;
  double obfuscated_share = 0.0;  // % of malware tagged obfuscated
  std::optional<double> tp_share; // % of obfuscated that were detected
  std::optional<double> fn_share; // % of obfuscated that were missed
};

inline ObfuscationBreakdown obfuscation_breakdown(
    const std::vector<Prediction>& predictions,
    const std::map<std::string, BehaviorReport>& reports,
    bool use_t1406 = false) {
  ObfuscationBreakdown b;
  for (const auto& p : predictions) {
    if (p.true_label != 1) continue;
    auto it = reports.find(p.sha256);
    if (it == reports.end()) continue;
    ++b.malware_with_reports;
    bool obf = use_t1406 ? it->second.obfuscated_t1406()
                         : it->second.obfuscated_tag();
    if (obf) {
      ++b.obfuscated;
      if (p.label == 1) ++b.obfuscated_tp;
    }
  }
  if (b.malware_with_reports == 0)
    throw EmptyCohort("no malware samples with reports");
  b.obfuscated_share =
      100.0 * double(b.obfuscated) / double(b.malware_with_reports);
  if (b.obfuscated > 0) {
    b.tp_share = 100.0 * double(b.obfuscated_tp) / double(b.obfuscated);
    b.fn_share = 100.0 * double(b.obfuscated - b.obfuscated_tp) /
                 double(b.obfuscated);
  }
  return b;
}

}  // namespace tempo
