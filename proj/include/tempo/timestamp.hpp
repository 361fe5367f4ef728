#pragma once

// API-introduction-date timestamp verification: resolve each framework
// call to its earliest introduction date via direct lookup, inheritance
// walk, or API-level fallback; the max over an app's calls lower-bounds
// its release date. Claimed timestamps are checked at year granularity.

#include <json.hpp>

#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tempo/date.hpp"
#include "tempo/dex.hpp"
#include "tempo/errors.hpp"
#include "tempo/io.hpp"

namespace tempo {

struct ApiIntroTable {
  // (class, method) -> earliest introduction date
  std::map<std::pair<std::string, std::string>, Date> entries;

  void add(const std::string& cls, const std::string& method, Date d) {
    auto key = std::make_pair(cls, method);
    auto it = entries.find(key);
    if (it == entries.end() || d < it->second) entries[key] = d;
  }

  std::optional<Date> find(const std::string& cls,
                           const std::string& method) const {
    auto it = entries.find({cls, method});
    if (it == entries.end()) return std::nullopt;
    return it->second;
  }

  // CSV: class,method,first_seen_date (header row expected)
  static ApiIntroTable load_csv(const std::filesystem::path& path) {
    ApiIntroTable t;
    auto lines = read_lines(path);
    for (size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      auto f = split_csv_row(lines[i]);
      if (f.size() != 3)
        throw ConfigInvalid(path.string() + ":" + std::to_string(i + 1) +
                            ": want class,method,first_seen_date");
      t.add(f[0], f[1], Date::parse(f[2]));
    }
    return t;
  }
};

struct InheritanceMap {
  // class -> direct ancestors, superclass first then interfaces
  std::map<std::string, std::vector<std::string>> parents;
  int depth_cap = 32;

  const std::vector<std::string>& ancestors_of(const std::string& cls) const {
    static const std::vector<std::string> empty;
    auto it = parents.find(cls);
    return it == parents.end() ? empty : it->second;
  }

  static InheritanceMap load_json(const std::filesystem::path& path) {
    InheritanceMap m;
    auto j = nlohmann::json::parse(read_file(path));
    for (auto it = j.begin(); it != j.end(); ++it)
      m.parents[it.key()] = it.value().get<std::vector<std::string>>();
    return m;
  }
};

struct ApiLevelMap {
  std::map<std::pair<std::string, std::string>, int> levels;
  std::map<int, Date> level_dates;

  std::optional<Date> find(const std::string& cls,
                           const std::string& method) const {
    auto it = levels.find({cls, method});
    if (it == levels.end()) return std::nullopt;
    auto dit = level_dates.find(it->second);
    if (dit == level_dates.end()) return std::nullopt;
    return dit->second;
  }

  void validate() const {
    for (const auto& [key, lvl] : levels) {
      if (lvl <= 0)
        throw ConfigInvalid("api level must be positive for " + key.first +
                            "#" + key.second);
      if (!level_dates.count(lvl))
        throw ConfigInvalid("api level " + std::to_string(lvl) +
                            " has no release date");
    }
  }

  // api_levels.csv: class,method,level; level_dates.csv: level,release_date
  static ApiLevelMap load_csv(const std::filesystem::path& levels_path,
                              const std::filesystem::path& dates_path) {
    ApiLevelMap m;
    auto lv = read_lines(levels_path);
    for (size_t i = 1; i < lv.size(); ++i) {
      if (lv[i].empty()) continue;
      auto f = split_csv_row(lv[i]);
      if (f.size() != 3)
        throw ConfigInvalid(levels_path.string() + ": want class,method,level");
      m.levels[{f[0], f[1]}] = std::stoi(f[2]);
    }
    auto ld = read_lines(dates_path);
    for (size_t i = 1; i < ld.size(); ++i) {
      if (ld[i].empty()) continue;
      auto f = split_csv_row(ld[i]);
      if (f.size() != 2)
        throw ConfigInvalid(dates_path.string() + ": want level,release_date");
      m.level_dates[std::stoi(f[0])] = Date::parse(f[1]);
    }
    m.validate();
    return m;
  }
};

struct TimestampTables {
  ApiIntroTable intro;
  InheritanceMap inheritance;
  ApiLevelMap api_levels;
  std::vector<std::string> framework_prefixes = default_framework_prefixes();

  static TimestampTables load_dir(const std::filesystem::path& dir) {
    TimestampTables t;
    t.intro = ApiIntroTable::load_csv(dir / "api_intro.csv");
    t.inheritance = InheritanceMap::load_json(dir / "inheritance.json");
    t.api_levels =
        ApiLevelMap::load_csv(dir / "api_levels.csv", dir / "level_dates.csv");
    return t;
  }
};

enum class MatchLevel { Direct, Inherited, ApiLevel, Unmatched };

inline const char* match_level_name(MatchLevel m) {
  switch (m) {
    case MatchLevel::Direct: return "direct";
    case MatchLevel::Inherited: return "inherited";
    case MatchLevel::ApiLevel: return "api_level";
    case MatchLevel::Unmatched: return "unmatched";
  }
  return "?";
}

struct Resolution {
  Date date;
  MatchLevel level;
};

// Matching precedence is strict: direct, then inheritance walk, then
// API-level fallback. The walk is breadth-first over the declared
// ancestor order; among equal-depth hits the earliest date wins.
inline std::optional<Resolution> resolve_intro_date(
    const ApiRef& api, const TimestampTables& tables) {
  if (auto d = tables.intro.find(api.class_name, api.method_name))
    return Resolution{*d, MatchLevel::Direct};

  std::set<std::string> seen{api.class_name};
  std::vector<std::string> frontier =
      tables.inheritance.ancestors_of(api.class_name);
  for (int depth = 0;
       depth < tables.inheritance.depth_cap && !frontier.empty(); ++depth) {
    std::optional<Date> best;
    std::vector<std::string> next;
    for (const auto& anc : frontier) {
      if (!seen.insert(anc).second) continue;
      if (auto d = tables.intro.find(anc, api.method_name))
        if (!best || *d < *best) best = d;
      const auto& up = tables.inheritance.ancestors_of(anc);
      next.insert(next.end(), up.begin(), up.end());
    }
    if (best) return Resolution{*best, MatchLevel::Inherited};
    frontier = std::move(next);
  }

  if (auto d = tables.api_levels.find(api.class_name, api.method_name))
    return Resolution{*d, MatchLevel::ApiLevel};
  return std::nullopt;
}

struct LowerBound {
  Date date;
  ApiRef bounding_api;
};

struct MatchCounters {
  size_t direct = 0, inherited = 0, api_level = 0, unmatched = 0;
  size_t total() const { return direct + inherited + api_level + unmatched; }
  void count(MatchLevel m) {
    switch (m) {
      case MatchLevel::Direct: ++direct; break;
      case MatchLevel::Inherited: ++inherited; break;
      case MatchLevel::ApiLevel: ++api_level; break;
      case MatchLevel::Unmatched: ++unmatched; break;
    }
  }
};

// Max over resolved dates; ties broken toward the lexicographically
// smallest ApiRef so the bounding API is deterministic.
inline std::optional<LowerBound> release_lower_bound(
    const std::vector<ApiRef>& apis, const TimestampTables& tables,
    MatchCounters* counters = nullptr) {
  std::optional<LowerBound> best;
  std::vector<ApiRef> sorted(apis.begin(), apis.end());
  std::sort(sorted.begin(), sorted.end());
  for (const auto& api : sorted) {
    auto res = resolve_intro_date(api, tables);
    if (counters)
      counters->count(res ? res->level : MatchLevel::Unmatched);
    if (!res) continue;
    if (!best || res->date > best->date) best = LowerBound{res->date, api};
  }
  return best;
}

struct TimestampedSample {
  std::string sha256;
  int label = 0;  // 0 benign, 1 malware
  Date timestamp;
  std::string source;  // uploadDate | first_submission_date
  int year() const { return timestamp.year; }
};

struct VerificationResult {
  std::string sha256;
  Date claimed;
  std::string source;
  std::optional<Date> lower_bound;
  std::optional<ApiRef> bounding_api;
  MatchCounters matched;
  bool discrepant = false;
};

// Discrepancy is judged at year granularity; strict_date compares full
// calendar dates instead (research escape hatch).
inline VerificationResult verify_sample(const TimestampedSample& sample,
                                        const std::vector<ApiRef>& apis,
                                        const TimestampTables& tables,
                                        bool strict_date = false) {
  VerificationResult r;
  r.sha256 = sample.sha256;
  r.claimed = sample.timestamp;
  r.source = sample.source;

  // only framework APIs take part in resolution
  std::vector<ApiRef> framework;
  for (const auto& a : apis)
    if (dexdetail::matches_prefix(a.class_name, tables.framework_prefixes))
      framework.push_back(a);

  if (auto lb = release_lower_bound(framework, tables, &r.matched)) {
    r.lower_bound = lb->date;
    r.bounding_api = lb->bounding_api;
    r.discrepant = strict_date ? lb->date > sample.timestamp
                               : lb->date.year > sample.timestamp.year;
  }
  return r;
}

struct CorpusVerification {
  std::map<int, std::pair<size_t, size_t>> per_year;  // year -> (discrepant, total)
  size_t unmatched_refs = 0;
  size_t total_refs = 0;
  std::vector<VerificationResult> results;

  double discrepancy_rate(int year) const {
    auto it = per_year.find(year);
    if (it == per_year.end() || it->second.second == 0) return 0.0;
    return 100.0 * double(it->second.first) / double(it->second.second);
  }
  double unmatched_rate() const {
    return total_refs == 0 ? 0.0
                           : 100.0 * double(unmatched_refs) / double(total_refs);
  }
};

inline CorpusVerification verify_corpus(
    const std::vector<std::pair<TimestampedSample, std::vector<ApiRef>>>& corpus,
    const TimestampTables& tables, bool strict_date = false) {
  CorpusVerification cv;
  for (const auto& [sample, apis] : corpus) {
    auto r = verify_sample(sample, apis, tables, strict_date);
    auto& [disc, total] = cv.per_year[sample.year()];
    ++total;
    if (r.discrepant) ++disc;
    cv.unmatched_refs += r.matched.unmatched;
    cv.total_refs += r.matched.total();
    cv.results.push_back(std::move(r));
  }
  return cv;
}

}  // namespace tempo
