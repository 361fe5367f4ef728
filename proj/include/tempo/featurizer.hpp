#pragma once

// Binary feature modalities: 3-grams over the 17-symbol opcode alphabet,
// API-call presence vector, permission presence vector. Vocabularies are
// frozen from the training split and fingerprinted so train/test skew is
// detected instead of silently tolerated.

#include <json.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "tempo/dalvik_opcodes.hpp"
#include "tempo/errors.hpp"
#include "tempo/io.hpp"
#include "tempo/record.hpp"
#include "tempo/sha256.hpp"

namespace tempo {

// Mnemonic -> category mapping. The default table covers every defined
// Dalvik opcode; a replacement table can be loaded from JSON so the
// category scheme stays swappable data, not code.
class SymbolAlphabet {
 public:
  static SymbolAlphabet default_table() {
    SymbolAlphabet a;
    const auto& t = dalvik_opcode_table();
    for (const auto& e : t)
      if (e.mnemonic) a.map_[e.mnemonic] = e.sym;
    return a;
  }

  static SymbolAlphabet from_json(const nlohmann::json& j) {
    SymbolAlphabet a;
    for (auto it = j.begin(); it != j.end(); ++it) {
      Sym s;
      if (!sym_from_name(it.value().get<std::string>(), &s))
        throw ConfigInvalid("unknown symbol category: " +
                            it.value().get<std::string>());
      a.map_[it.key()] = s;
    }
    return a;
  }

  Sym lookup(const std::string& mnemonic) const {
    auto it = map_.find(mnemonic);
    return it == map_.end() ? Sym::UNKNOWN : it->second;
  }

  // Length-preserving; unknown mnemonics land in the UNKNOWN bucket.
  std::vector<std::string> symbolize(
      const std::vector<std::string>& mnemonics) const {
    std::vector<std::string> out;
    out.reserve(mnemonics.size());
    for (const auto& m : mnemonics) out.push_back(sym_name(lookup(m)));
    return out;
  }

  std::vector<std::string> symbolize_opcodes(
      const std::vector<uint8_t>& opcodes) const {
    std::vector<std::string> out;
    out.reserve(opcodes.size());
    const auto& t = dalvik_opcode_table();
    for (uint8_t op : opcodes) {
      const auto& e = t[op];
      out.push_back(e.mnemonic ? sym_name(lookup(e.mnemonic))
                               : sym_name(Sym::UNKNOWN));
    }
    return out;
  }

 private:
  std::map<std::string, Sym> map_;
};

// n-gram key: symbols joined with '|'.
inline std::string gram_key(const std::vector<std::string>& symbols,
                            size_t start, size_t n) {
  std::string k = symbols[start];
  for (size_t i = 1; i < n; ++i) k += "|" + symbols[start + i];
  return k;
}

// Sliding windows; L < n yields the empty multiset.
inline std::map<std::string, size_t> ngrams(
    const std::vector<std::string>& symbols, size_t n = 3) {
  std::map<std::string, size_t> out;
  if (n == 0 || symbols.size() < n) return out;
  for (size_t i = 0; i + n <= symbols.size(); ++i)
    out[gram_key(symbols, i, n)]++;
  return out;
}

struct NgramVocabulary {
  size_t n = 3;
  std::vector<std::string> keys;  // sorted lexicographically
  std::string built_from;
  std::string fingerprint;

  size_t dimension() const { return keys.size(); }

  static std::string compute_fingerprint(size_t n,
                                         const std::vector<std::string>& keys) {
    Sha256 h;
    h.update("ngram-vocab\n");
    h.update(std::to_string(n) + "\n");
    for (const auto& k : keys) h.update(k + "\n");
    return h.hex_digest();
  }

  nlohmann::json to_json() const {
    return {{"n", n},
            {"keys", keys},
            {"fingerprint", fingerprint},
            {"built_from", built_from}};
  }

  static NgramVocabulary from_json(const nlohmann::json& j) {
    NgramVocabulary v;
    v.n = j.at("n").get<size_t>();
    v.keys = j.at("keys").get<std::vector<std::string>>();
    v.built_from = j.value("built_from", "");
    v.fingerprint = j.at("fingerprint").get<std::string>();
    if (v.fingerprint != compute_fingerprint(v.n, v.keys))
      throw FingerprintMismatch("vocabulary fingerprint does not match keys");
    return v;
  }
};

inline bool gram_contains_unknown(const std::string& key) {
  const std::string u = sym_name(Sym::UNKNOWN);
  size_t pos = 0;
  while ((pos = key.find(u, pos)) != std::string::npos) {
    bool left_ok = pos == 0 || key[pos - 1] == '|';
    size_t end = pos + u.size();
    bool right_ok = end == key.size() || key[end] == '|';
    if (left_ok && right_ok) return true;
    pos = end;
  }
  return false;
}

// Vocabulary = every n-gram with nonzero frequency in the TRAINING split.
inline NgramVocabulary build_vocab(const std::vector<FeatureRecord>& training,
                                   const std::string& built_from,
                                   size_t n = 3,
                                   bool include_unknown = false) {
  if (training.empty()) throw EmptyCorpus("no training records");
  std::set<std::string> keys;
  for (const auto& r : training)
    for (const auto& [k, cnt] : ngrams(r.opcode_symbols, n))
      if (include_unknown || !gram_contains_unknown(k)) keys.insert(k);
  NgramVocabulary v;
  v.n = n;
  v.keys.assign(keys.begin(), keys.end());  // std::set is already sorted
  v.built_from = built_from;
  v.fingerprint = NgramVocabulary::compute_fingerprint(v.n, v.keys);
  return v;
}

// Frozen name list for the api / permission modalities.
struct FeatureList {
  std::string modality;  // "api" or "permission"
  std::vector<std::string> names;
  std::string fingerprint;

  size_t dimension() const { return names.size(); }

  static FeatureList make(const std::string& modality,
                          std::vector<std::string> names) {
    std::set<std::string> uniq(names.begin(), names.end());
    if (uniq.size() != names.size())
      throw ConfigInvalid(modality + " feature list has duplicate names");
    FeatureList f;
    f.modality = modality;
    f.names = std::move(names);
    Sha256 h;
    h.update("feature-list\n" + f.modality + "\n");
    for (const auto& k : f.names) h.update(k + "\n");
    f.fingerprint = h.hex_digest();
    return f;
  }

  nlohmann::json to_json() const {
    return {{"modality", modality}, {"names", names}, {"fingerprint", fingerprint}};
  }
  static FeatureList from_json(const nlohmann::json& j) {
    return make(j.at("modality").get<std::string>(),
                j.at("names").get<std::vector<std::string>>());
  }
};

// Placeholder defaults matching the published dimensions (95 APIs,
// 161 permissions). The canonical membership of the original lists is
// not public; these exist so the pipeline runs end to end and should be
// replaced with real lists for any study.
inline FeatureList placeholder_api_list() {
  std::vector<std::string> names;
  for (int i = 0; i < 95; ++i) {
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "android.placeholder.Api%02d#call#()V", i);
    names.push_back(buf);
  }
  return FeatureList::make("api", std::move(names));
}

inline FeatureList placeholder_permission_list() {
  std::vector<std::string> names;
  for (int i = 0; i < 161; ++i) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "android.permission.PLACEHOLDER_%03d", i);
    names.push_back(buf);
  }
  return FeatureList::make("permission", std::move(names));
}

struct FeatureVector {
  std::string modality;
  std::string fingerprint;
  std::vector<uint8_t> bits;  // 0/1, length = vocabulary dimension
};

// Projection onto the frozen vocabulary: unseen test-time patterns drop.
inline FeatureVector vectorize_opcodes(const FeatureRecord& r,
                                       const NgramVocabulary& vocab) {
  FeatureVector v;
  v.modality = "opcode";
  v.fingerprint = vocab.fingerprint;
  v.bits.assign(vocab.dimension(), 0);
  std::unordered_map<std::string, size_t> index;
  index.reserve(vocab.keys.size());
  for (size_t i = 0; i < vocab.keys.size(); ++i) index[vocab.keys[i]] = i;
  for (const auto& [k, cnt] : ngrams(r.opcode_symbols, vocab.n)) {
    auto it = index.find(k);
    if (it != index.end()) v.bits[it->second] = 1;
  }
  return v;
}

inline FeatureVector vectorize_names(const std::vector<std::string>& present,
                                     const FeatureList& list) {
  FeatureVector v;
  v.modality = list.modality;
  v.fingerprint = list.fingerprint;
  v.bits.assign(list.dimension(), 0);
  std::set<std::string> have(present.begin(), present.end());
  for (size_t i = 0; i < list.names.size(); ++i)
    if (have.count(list.names[i])) v.bits[i] = 1;
  return v;
}

inline FeatureVector vectorize(const FeatureRecord& r, const FeatureList& list) {
  return vectorize_names(list.modality == "api" ? r.apis : r.permissions, list);
}

}  // namespace tempo
