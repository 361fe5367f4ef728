#pragma once

// Chronological dataset handling: the labeled time-stamped manifest,
// the train/test split with a fixed most-recent test cohort, and
// expanding-window time-based cross-validation folds.

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tempo/errors.hpp"
#include "tempo/io.hpp"
#include "tempo/timestamp.hpp"

namespace tempo {

using Manifest = std::vector<TimestampedSample>;

// manifest.csv: sha256,label,timestamp,source
inline Manifest load_manifest(const std::filesystem::path& path) {
  Manifest m;
  auto lines = read_lines(path);
  std::set<std::string> seen;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = split_csv_row(lines[i]);
    if (f.size() != 4)
      throw ConfigInvalid(path.string() + ":" + std::to_string(i + 1) +
                          ": want sha256,label,timestamp,source");
    TimestampedSample s;
    s.sha256 = f[0];
    s.label = std::stoi(f[1]);
    if (s.label != 0 && s.label != 1)
      throw ConfigInvalid(path.string() + ": label must be 0 or 1, got " + f[1]);
    s.timestamp = Date::parse(f[2]);
    s.source = f[3];
    if (!seen.insert(s.sha256).second)
      throw ConfigInvalid(path.string() + ": duplicate sha256 " + s.sha256);
    m.push_back(std::move(s));
  }
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::string out = "sha256,label,timestamp,source\n";
  for (const auto& s : m)
    out += s.sha256 + "," + std::to_string(s.label) + "," + s.timestamp.str() +
           "," + s.source + "\n";
  write_file(path, out);
}

struct SplitSpec {
  int test_year = 2024;
  size_t test_malware = 400;
  size_t test_benign = 3600;
};

struct SplitResult {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  // training-side samples newer than the oldest test sample, dropped to
  // keep the chronology strict
  std::vector<std::string> excluded_ids;
  std::vector<std::string> warnings;
};

namespace datasetdetail {

inline bool chrono_less(const TimestampedSample& a, const TimestampedSample& b) {
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  return a.sha256 < b.sha256;
}

}  // namespace datasetdetail

// Test = the most recent spec counts per class within test_year;
// everything chronologically before the test boundary trains. The few
// samples that are newer than the oldest test sample but not selected
// (possible when class timelines interleave) are excluded rather than
// allowed to leak future data into training.
inline SplitResult temporal_split(const Manifest& manifest,
                                  const SplitSpec& spec) {
  Manifest sorted = manifest;
  std::sort(sorted.begin(), sorted.end(), datasetdetail::chrono_less);

  std::vector<const TimestampedSample*> per_class[2];
  for (const auto& s : sorted)
    if (s.year() == spec.test_year) per_class[s.label].push_back(&s);

  if (per_class[1].size() < spec.test_malware ||
      per_class[0].size() < spec.test_benign)
    throw Unsatisfiable(
        "test year " + std::to_string(spec.test_year) + " has " +
        std::to_string(per_class[1].size()) + " malware / " +
        std::to_string(per_class[0].size()) + " benign, spec wants " +
        std::to_string(spec.test_malware) + " / " +
        std::to_string(spec.test_benign));

  std::set<std::string> test_set;
  auto take_recent = [&](int label, size_t n) {
    const auto& v = per_class[label];
    for (size_t i = 0; i < n; ++i) test_set.insert(v[v.size() - 1 - i]->sha256);
  };
  take_recent(1, spec.test_malware);
  take_recent(0, spec.test_benign);

  std::optional<Date> test_min;
  for (const auto& s : sorted)
    if (test_set.count(s.sha256) && (!test_min || s.timestamp < *test_min))
      test_min = s.timestamp;

  SplitResult r;
  size_t train_mal = 0, train_ben = 0;
  for (const auto& s : sorted) {
    if (test_set.count(s.sha256)) {
      r.test_ids.push_back(s.sha256);
    } else if (test_min && s.timestamp > *test_min) {
      r.excluded_ids.push_back(s.sha256);
    } else {
      r.train_ids.push_back(s.sha256);
      (s.label == 1 ? train_mal : train_ben)++;
    }
  }
  if (!r.excluded_ids.empty())
    r.warnings.push_back(std::to_string(r.excluded_ids.size()) +
                         " unselected samples newer than the test boundary "
                         "were excluded from training");
  if (train_mal > 0) {
    double ratio = double(train_ben) / double(train_mal);
    if (ratio < 8.1 || ratio > 9.9)
      r.warnings.push_back("train benign:malware ratio " +
                           std::to_string(ratio) +
                           " deviates from 9:1 by more than 10%");
  }
  return r;
}

struct Fold {
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;
};

struct FoldPlan {
  size_t k = 5;
  std::vector<std::vector<std::string>> blocks;  // k+1 chronological blocks
  std::vector<Fold> folds;                       // expanding window
};

// Sort by timestamp, cut into k+1 contiguous blocks; fold i trains on
// blocks 1..i and validates on block i+1. Equal-timestamp runs at a cut
// land entirely in the later block.
inline FoldPlan time_folds(const Manifest& train, size_t k = 5) {
  if (train.size() < k + 1)
    throw TooFewSamples("need at least " + std::to_string(k + 1) +
                        " samples for " + std::to_string(k) + " time folds");
  Manifest sorted = train;
  std::sort(sorted.begin(), sorted.end(), datasetdetail::chrono_less);

  size_t n = sorted.size(), nb = k + 1;
  std::vector<size_t> cuts;  // block start indices, nb+1 entries
  cuts.push_back(0);
  for (size_t b = 1; b < nb; ++b) {
    size_t c = (n * b) / nb;
    // shift a straddled equal-timestamp run into the later block
    while (c > cuts.back() && c < n &&
           sorted[c - 1].timestamp == sorted[c].timestamp)
      --c;
    if (c < cuts.back()) c = cuts.back();
    cuts.push_back(c);
  }
  cuts.push_back(n);

  FoldPlan plan;
  plan.k = k;
  for (size_t b = 0; b < nb; ++b) {
    std::vector<std::string> block;
    for (size_t i = cuts[b]; i < cuts[b + 1]; ++i)
      block.push_back(sorted[i].sha256);
    if (block.empty())
      throw TooFewSamples("time fold block " + std::to_string(b + 1) +
                          " is empty (too many timestamp ties)");
    plan.blocks.push_back(std::move(block));
  }
  for (size_t i = 1; i <= k; ++i) {
    Fold f;
    for (size_t b = 0; b < i; ++b)
      f.train_ids.insert(f.train_ids.end(), plan.blocks[b].begin(),
                         plan.blocks[b].end());
    f.validation_ids = plan.blocks[i];
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

}  // namespace tempo
