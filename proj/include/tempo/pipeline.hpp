#pragma once

// Stage orchestration over persisted artifacts. Every artifact embeds
// the fingerprints of its inputs; a stage refuses to run on drifted
// upstream files. Content hashes, never timestamps.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tempo/apk.hpp"
#include "tempo/byol.hpp"
#include "tempo/classifier.hpp"
#include "tempo/dataset.hpp"
#include "tempo/featurizer.hpp"
#include "tempo/record.hpp"
#include "tempo/report.hpp"
#include "tempo/timestamp.hpp"

namespace tempo {

namespace fs = std::filesystem;

struct PipelineConfig {
  fs::path workdir = "work";
  fs::path manifest_csv;        // sha256,label,timestamp,source
  fs::path corpus_dir;          // apk tree (extract stage only)
  fs::path tables_dir;          // timestamp tables
  fs::path cache_dir = "cache"; // vt report cache
  fs::path api_list_file;       // optional; placeholder list otherwise
  fs::path permission_list_file;
  SplitSpec split;
  size_t cv_folds = 5;
  size_t ngram_n = 3;
  bool include_unknown = false;
  std::vector<double> lr_grid = {0.01, 0.1, 1.0, 10.0, 100.0};
  LrTrainOptions lr_opts;
  ByolConfig byol;  // modality/input_dim/fingerprint filled per modality
  std::optional<uint64_t> seed;
  bool offline = true;

  fs::path features_path() const { return workdir / "features.ndjson"; }
  fs::path split_path() const { return workdir / "split.json"; }
  fs::path vocab_path() const { return workdir / "vocab.json"; }
  fs::path api_list_path() const { return workdir / "api_list.json"; }
  fs::path permission_list_path() const { return workdir / "permission_list.json"; }
  fs::path matrix_path(const std::string& mod) const {
    return workdir / ("matrix_" + mod + ".ndjson");
  }
  fs::path model_path(const std::string& mod) const {
    return workdir / ("byol_" + mod + ".json");
  }
  fs::path loss_curve_path(const std::string& mod) const {
    return workdir / ("loss_" + mod + ".csv");
  }
  fs::path embeddings_path() const { return workdir / "embeddings.ndjson"; }
  fs::path lr_model_path() const { return workdir / "lr_model.json"; }
  fs::path cv_table_path() const { return workdir / "cv_table.csv"; }
  fs::path predictions_path() const { return workdir / "predictions.csv"; }
  fs::path metrics_path() const { return workdir / "metrics.json"; }
  fs::path verification_path() const { return workdir / "verification.csv"; }
};

inline const std::vector<std::string>& modalities() {
  static const std::vector<std::string> m = {"opcode", "api", "permission"};
  return m;
}

namespace pipedetail {

inline std::string file_fingerprint(const fs::path& p) {
  return sha256_hex(read_file(p));
}

inline void require(const fs::path& p, const std::string& stage) {
  if (!fs::exists(p))
    throw MissingArtifact(stage + ": missing input " + p.string());
}

inline void require_fingerprint(const std::string& want,
                                const std::string& have,
                                const std::string& stage,
                                const std::string& what) {
  if (want != have)
    throw FingerprintMismatch(stage + ": " + what +
                              " fingerprint drifted (expected " + want +
                              ", found " + have + ")");
}

}  // namespace pipedetail

// ---- extract ---------------------------------------------------------

// Manifest rows name APKs as <corpus_dir>/<sha256>.apk unless the
// manifest carries an explicit path column variant.
inline void stage_extract(const PipelineConfig& cfg) {
  pipedetail::require(cfg.manifest_csv, "extract");
  Manifest manifest = load_manifest(cfg.manifest_csv);
  SymbolAlphabet alphabet = SymbolAlphabet::default_table();
  std::vector<FeatureRecord> records;
  for (const auto& s : manifest) {
    fs::path apk = cfg.corpus_dir / (s.sha256 + ".apk");
    pipedetail::require(apk, "extract");
    ApkStaticFeatures f = extract_features(apk);
    FeatureRecord r;
    r.sha256 = s.sha256;
    r.opcode_symbols = alphabet.symbolize_opcodes(f.opcodes);
    for (const auto& a : f.apis) r.apis.push_back(api_key(a));
    r.permissions.assign(f.permissions.begin(), f.permissions.end());
    r.warnings = f.warnings;
    records.push_back(std::move(r));
  }
  write_ndjson(cfg.features_path(), records);
}

// ---- verify-timestamps ----------------------------------------------

inline CorpusVerification stage_verify_timestamps(const PipelineConfig& cfg) {
  pipedetail::require(cfg.features_path(), "verify-timestamps");
  pipedetail::require(cfg.manifest_csv, "verify-timestamps");
  TimestampTables tables = TimestampTables::load_dir(cfg.tables_dir);
  Manifest manifest = load_manifest(cfg.manifest_csv);
  auto records = read_ndjson(cfg.features_path());
  std::unordered_map<std::string, const FeatureRecord*> by_sha;
  for (const auto& r : records) by_sha[r.sha256] = &r;

  std::vector<std::pair<TimestampedSample, std::vector<ApiRef>>> corpus;
  for (const auto& s : manifest) {
    auto it = by_sha.find(s.sha256);
    if (it == by_sha.end())
      throw MissingArtifact("verify-timestamps: no feature record for " +
                            s.sha256);
    std::vector<ApiRef> apis;
    for (const auto& k : it->second->apis) apis.push_back(parse_api_key(k));
    corpus.emplace_back(s, std::move(apis));
  }
  CorpusVerification cv = verify_corpus(corpus, tables);

  std::string out =
      "sha256,claimed,source,lower_bound,bounding_api,direct,inherited,"
      "api_level,unmatched,discrepant\n";
  for (const auto& r : cv.results) {
    out += r.sha256 + "," + r.claimed.str() + "," + r.source + ",";
    out += (r.lower_bound ? r.lower_bound->str() : "") + ",";
    out += (r.bounding_api ? r.bounding_api->class_name + "#" +
                                 r.bounding_api->method_name
                           : "");
    out += "," + std::to_string(r.matched.direct) + "," +
           std::to_string(r.matched.inherited) + "," +
           std::to_string(r.matched.api_level) + "," +
           std::to_string(r.matched.unmatched) + "," +
           (r.discrepant ? "1" : "0") + "\n";
  }
  write_file(cfg.verification_path(), out);
  return cv;
}

// ---- split -----------------------------------------------------------

inline SplitResult stage_split(const PipelineConfig& cfg) {
  pipedetail::require(cfg.manifest_csv, "split");
  Manifest manifest = load_manifest(cfg.manifest_csv);
  SplitResult r = temporal_split(manifest, cfg.split);
  nlohmann::json j{{"kind", "split"},
                   {"train_ids", r.train_ids},
                   {"test_ids", r.test_ids},
                   {"excluded_ids", r.excluded_ids},
                   {"warnings", r.warnings},
                   {"inputs",
                    {{"manifest", pipedetail::file_fingerprint(cfg.manifest_csv)}}}};
  write_file(cfg.split_path(), j.dump(2));
  return r;
}

inline SplitResult load_split(const PipelineConfig& cfg,
                              const std::string& stage) {
  pipedetail::require(cfg.split_path(), stage);
  auto j = nlohmann::json::parse(read_file(cfg.split_path()));
  pipedetail::require_fingerprint(
      j.at("inputs").at("manifest").get<std::string>(),
      pipedetail::file_fingerprint(cfg.manifest_csv), stage, "manifest");
  SplitResult r;
  r.train_ids = j.at("train_ids").get<std::vector<std::string>>();
  r.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  r.excluded_ids = j.at("excluded_ids").get<std::vector<std::string>>();
  return r;
}

// ---- build-vocab -----------------------------------------------------

inline NgramVocabulary stage_build_vocab(const PipelineConfig& cfg) {
  pipedetail::require(cfg.features_path(), "build-vocab");
  SplitResult split = load_split(cfg, "build-vocab");
  auto records = read_ndjson(cfg.features_path());
  std::set<std::string> train(split.train_ids.begin(), split.train_ids.end());
  std::vector<FeatureRecord> training;
  for (auto& r : records)
    if (train.count(r.sha256)) training.push_back(std::move(r));
  NgramVocabulary vocab =
      build_vocab(training, pipedetail::file_fingerprint(cfg.split_path()),
                  cfg.ngram_n, cfg.include_unknown);
  write_file(cfg.vocab_path(), vocab.to_json().dump(2));

  FeatureList apis = cfg.api_list_file.empty()
                         ? placeholder_api_list()
                         : FeatureList::make(
                               "api", read_lines(cfg.api_list_file));
  FeatureList perms = cfg.permission_list_file.empty()
                          ? placeholder_permission_list()
                          : FeatureList::make(
                                "permission",
                                read_lines(cfg.permission_list_file));
  write_file(cfg.api_list_path(), apis.to_json().dump(2));
  write_file(cfg.permission_list_path(), perms.to_json().dump(2));
  return vocab;
}

// ---- featurize -------------------------------------------------------

struct MatrixFile {
  std::string modality;
  std::string fingerprint;  // vocabulary / list fingerprint
  size_t dimension = 0;
  std::vector<std::string> ids;
  Matrix rows;
};

inline void write_matrix_file(const fs::path& path, const std::string& modality,
                              const std::string& fingerprint, size_t dim,
                              const std::vector<std::string>& ids,
                              const std::vector<std::vector<size_t>>& set_bits,
                              const nlohmann::json& inputs) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << nlohmann::json{{"kind", "feature-matrix"},
                        {"modality", modality},
                        {"fingerprint", fingerprint},
                        {"dimension", dim},
                        {"inputs", inputs}}
             .dump()
      << "\n";
  for (size_t i = 0; i < ids.size(); ++i)
    out << nlohmann::json{{"sha256", ids[i]}, {"set_bits", set_bits[i]}}.dump()
        << "\n";
}

inline MatrixFile load_matrix_file(const fs::path& path,
                                   const std::string& stage) {
  pipedetail::require(path, stage);
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line))
    throw MissingArtifact(stage + ": empty matrix file " + path.string());
  auto header = nlohmann::json::parse(line);
  MatrixFile m;
  m.modality = header.at("modality").get<std::string>();
  m.fingerprint = header.at("fingerprint").get<std::string>();
  m.dimension = header.at("dimension").get<size_t>();
  std::vector<std::vector<size_t>> bits;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    m.ids.push_back(j.at("sha256").get<std::string>());
    bits.push_back(j.at("set_bits").get<std::vector<size_t>>());
  }
  m.rows = Matrix(m.ids.size(), m.dimension);
  for (size_t i = 0; i < bits.size(); ++i)
    for (size_t b : bits[i]) {
      if (b >= m.dimension)
        throw Error(path.string() + ": set bit out of range");
      m.rows.at(i, b) = 1.0;
    }
  return m;
}

inline void stage_featurize(const PipelineConfig& cfg) {
  pipedetail::require(cfg.features_path(), "featurize");
  pipedetail::require(cfg.vocab_path(), "featurize");
  pipedetail::require(cfg.api_list_path(), "featurize");
  pipedetail::require(cfg.permission_list_path(), "featurize");
  auto vocab = NgramVocabulary::from_json(
      nlohmann::json::parse(read_file(cfg.vocab_path())));
  auto apis = FeatureList::from_json(
      nlohmann::json::parse(read_file(cfg.api_list_path())));
  auto perms = FeatureList::from_json(
      nlohmann::json::parse(read_file(cfg.permission_list_path())));
  auto records = read_ndjson(cfg.features_path());

  nlohmann::json inputs{
      {"features", pipedetail::file_fingerprint(cfg.features_path())},
      {"vocab", vocab.fingerprint}};

  std::unordered_map<std::string, size_t> vocab_index;
  for (size_t i = 0; i < vocab.keys.size(); ++i) vocab_index[vocab.keys[i]] = i;

  std::vector<std::string> ids;
  std::vector<std::vector<size_t>> op_bits, api_bits, perm_bits;
  for (const auto& r : records) {
    ids.push_back(r.sha256);
    std::vector<size_t> ob;
    for (const auto& [k, cnt] : ngrams(r.opcode_symbols, vocab.n)) {
      auto it = vocab_index.find(k);
      if (it != vocab_index.end()) ob.push_back(it->second);
    }
    std::sort(ob.begin(), ob.end());
    op_bits.push_back(std::move(ob));
    auto names_bits = [](const std::vector<std::string>& present,
                         const FeatureList& list) {
      std::set<std::string> have(present.begin(), present.end());
      std::vector<size_t> out;
      for (size_t i = 0; i < list.names.size(); ++i)
        if (have.count(list.names[i])) out.push_back(i);
      return out;
    };
    api_bits.push_back(names_bits(r.apis, apis));
    perm_bits.push_back(names_bits(r.permissions, perms));
  }
  write_matrix_file(cfg.matrix_path("opcode"), "opcode", vocab.fingerprint,
                    vocab.dimension(), ids, op_bits, inputs);
  write_matrix_file(cfg.matrix_path("api"), "api", apis.fingerprint,
                    apis.dimension(), ids, api_bits, inputs);
  write_matrix_file(cfg.matrix_path("permission"), "permission",
                    perms.fingerprint, perms.dimension(), ids, perm_bits,
                    inputs);
}

// ---- pretrain --------------------------------------------------------

namespace pipedetail {

inline Matrix select_rows(const Matrix& x,
                          const std::vector<std::string>& all_ids,
                          const std::vector<std::string>& wanted,
                          const std::string& stage) {
  std::unordered_map<std::string, size_t> row_of;
  for (size_t i = 0; i < all_ids.size(); ++i) row_of[all_ids[i]] = i;
  Matrix out(wanted.size(), x.cols);
  for (size_t i = 0; i < wanted.size(); ++i) {
    auto it = row_of.find(wanted[i]);
    if (it == row_of.end())
      throw MissingArtifact(stage + ": no row for id " + wanted[i]);
    const double* src = x.row(it->second);
    std::copy(src, src + x.cols, out.row(i));
  }
  return out;
}

}  // namespace pipedetail

inline void stage_pretrain(const PipelineConfig& cfg) {
  if (!cfg.seed)
    throw ConfigInvalid("pretrain: --seed is required for reproducibility");
  SplitResult split = load_split(cfg, "pretrain");
  for (const auto& mod : modalities()) {
    MatrixFile mf = load_matrix_file(cfg.matrix_path(mod), "pretrain");
    Matrix train =
        pipedetail::select_rows(mf.rows, mf.ids, split.train_ids, "pretrain");
    ByolConfig bc = cfg.byol;
    bc.modality = mod;
    bc.input_dim = mf.dimension;
    bc.input_fingerprint = mf.fingerprint;
    // one seed per modality, derived via a platform-stable hash
    Sha256 h;
    h.update("seed:" + mod);
    auto d = h.digest();
    uint64_t mix = 0;
    for (int i = 0; i < 8; ++i) mix = (mix << 8) | d[size_t(i)];
    bc.seed = *cfg.seed ^ mix;
    ByolTrainResult res = train_byol(train, bc);
    write_file(cfg.model_path(mod), res.model.to_json().dump());
    std::string curve = "epoch,mean_loss\n";
    for (size_t e = 0; e < res.loss_curve.size(); ++e)
      curve += std::to_string(e + 1) + "," + std::to_string(res.loss_curve[e]) +
               "\n";
    write_file(cfg.loss_curve_path(mod), curve);
  }
}

// ---- embed -----------------------------------------------------------

struct EmbeddingsFile {
  size_t dimension = 0;
  std::map<std::string, std::string> model_fingerprints;
  std::vector<std::string> ids;
  Matrix rows;
};

inline void stage_embed(const PipelineConfig& cfg) {
  std::map<std::string, ByolModel> models;
  std::map<std::string, MatrixFile> mats;
  for (const auto& mod : modalities()) {
    pipedetail::require(cfg.model_path(mod), "embed");
    models.emplace(mod, ByolModel::from_json(nlohmann::json::parse(
                            read_file(cfg.model_path(mod)))));
    mats.emplace(mod, load_matrix_file(cfg.matrix_path(mod), "embed"));
    pipedetail::require_fingerprint(models.at(mod).input_fingerprint,
                                    mats.at(mod).fingerprint, "embed",
                                    mod + " features");
  }
  const auto& ids = mats.at("opcode").ids;
  for (const auto& mod : modalities())
    if (mats.at(mod).ids != ids)
      throw FingerprintMismatch("embed: modality files list different apps");

  Matrix e_op = byol_embed(models.at("opcode"), mats.at("opcode").rows);
  Matrix e_api = byol_embed(models.at("api"), mats.at("api").rows);
  Matrix e_perm = byol_embed(models.at("permission"), mats.at("permission").rows);
  Matrix all = concat_embeddings(e_op, e_api, e_perm);

  std::ofstream out(cfg.embeddings_path(), std::ios::trunc);
  if (!out) throw Error("cannot write " + cfg.embeddings_path().string());
  nlohmann::json fps;
  for (const auto& mod : modalities())
    fps[mod] = models.at(mod).fingerprint();
  out << nlohmann::json{{"kind", "embeddings"},
                        {"dimension", all.cols},
                        {"model_fingerprints", fps}}
             .dump()
      << "\n";
  out.precision(17);
  for (size_t i = 0; i < ids.size(); ++i) {
    std::vector<double> v(all.row(i), all.row(i) + all.cols);
    out << nlohmann::json{{"sha256", ids[i]}, {"v", v}}.dump() << "\n";
  }
}

inline EmbeddingsFile load_embeddings(const PipelineConfig& cfg,
                                      const std::string& stage) {
  pipedetail::require(cfg.embeddings_path(), stage);
  std::ifstream in(cfg.embeddings_path());
  std::string line;
  if (!std::getline(in, line))
    throw MissingArtifact(stage + ": empty embeddings file");
  auto header = nlohmann::json::parse(line);
  EmbeddingsFile e;
  e.dimension = header.at("dimension").get<size_t>();
  for (auto it = header.at("model_fingerprints").begin();
       it != header.at("model_fingerprints").end(); ++it)
    e.model_fingerprints[it.key()] = it.value().get<std::string>();
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    e.ids.push_back(j.at("sha256").get<std::string>());
    rows.push_back(j.at("v").get<std::vector<double>>());
  }
  e.rows = Matrix(e.ids.size(), e.dimension);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != e.dimension)
      throw ShapeMismatch(stage + ": embedding row width mismatch");
    std::copy(rows[i].begin(), rows[i].end(), e.rows.row(i));
  }
  return e;
}

// ---- train / evaluate ------------------------------------------------

inline GridSearchResult stage_train(const PipelineConfig& cfg) {
  if (!cfg.seed)
    throw ConfigInvalid("train: --seed is required for reproducibility");
  SplitResult split = load_split(cfg, "train");
  EmbeddingsFile emb = load_embeddings(cfg, "train");
  Manifest manifest = load_manifest(cfg.manifest_csv);
  std::unordered_map<std::string, const TimestampedSample*> by_sha;
  for (const auto& s : manifest) by_sha[s.sha256] = &s;

  Manifest train_manifest;
  for (const auto& id : split.train_ids) train_manifest.push_back(*by_sha.at(id));
  FoldPlan folds = time_folds(train_manifest, cfg.cv_folds);

  Matrix x = pipedetail::select_rows(emb.rows, emb.ids, split.train_ids, "train");
  std::vector<int> y;
  for (const auto& id : split.train_ids) y.push_back(by_sha.at(id)->label);

  GridSearchResult res =
      grid_search(x, y, split.train_ids, folds, cfg.lr_grid, cfg.lr_opts);
  if (res.best.stop_condition == "max_iterations")
    std::fprintf(stderr,
                 "train: warning: LR stopped at the iteration cap (%zu)\n",
                 res.best.iterations);
  res.best.embedding_fingerprint =
      pipedetail::file_fingerprint(cfg.embeddings_path());
  write_file(cfg.lr_model_path(), res.best.to_json().dump());

  std::string table = "reg_c,fold,f1\n";
  for (const auto& cell : res.table)
    table += std::to_string(cell.reg_c) + "," + std::to_string(cell.fold) +
             "," + std::to_string(cell.f1) + "\n";
  write_file(cfg.cv_table_path(), table);
  return res;
}

inline MetricsReport stage_evaluate(const PipelineConfig& cfg) {
  pipedetail::require(cfg.lr_model_path(), "evaluate");
  LrModel model = LrModel::from_json(
      nlohmann::json::parse(read_file(cfg.lr_model_path())));
  EmbeddingsFile emb = load_embeddings(cfg, "evaluate");
  pipedetail::require_fingerprint(
      model.embedding_fingerprint,
      pipedetail::file_fingerprint(cfg.embeddings_path()), "evaluate",
      "embeddings");
  SplitResult split = load_split(cfg, "evaluate");
  Manifest manifest = load_manifest(cfg.manifest_csv);
  std::unordered_map<std::string, const TimestampedSample*> by_sha;
  for (const auto& s : manifest) by_sha[s.sha256] = &s;

  Matrix x =
      pipedetail::select_rows(emb.rows, emb.ids, split.test_ids, "evaluate");
  std::vector<int> y;
  for (const auto& id : split.test_ids) y.push_back(by_sha.at(id)->label);

  MetricsReport rep = evaluate(model, x, y, split.test_ids);

  std::string preds = "sha256,probability,label,true_label\n";
  {
    char buf[64];
    for (const auto& p : rep.predictions) {
      std::snprintf(buf, sizeof(buf), "%.9f", p.probability);
      preds += p.sha256 + "," + buf + "," + std::to_string(p.label) + "," +
               std::to_string(p.true_label) + "\n";
    }
  }
  write_file(cfg.predictions_path(), preds);
  nlohmann::json mj{{"accuracy", rep.accuracy}, {"precision", rep.precision},
                    {"recall", rep.recall},     {"f1", rep.f1},
                    {"tp", rep.tp},             {"fp", rep.fp},
                    {"tn", rep.tn},             {"fn", rep.fn},
                    {"inputs",
                     {{"lr_model",
                       pipedetail::file_fingerprint(cfg.lr_model_path())},
                      {"embeddings", model.embedding_fingerprint}}}};
  write_file(cfg.metrics_path(), mj.dump(2));
  return rep;
}

// ---- report-mitre ----------------------------------------------------

inline std::vector<Prediction> load_predictions(const fs::path& path) {
  std::vector<Prediction> out;
  auto lines = read_lines(path);
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = split_csv_row(lines[i]);
    if (f.size() != 4)
      throw ConfigInvalid(path.string() +
                          ": want sha256,probability,label,true_label");
    out.push_back({f[0], std::stod(f[1]), std::stoi(f[2]), std::stoi(f[3])});
  }
  return out;
}

struct MitreReportResult {
  PrevalenceResult prevalence;
  ObfuscationBreakdown obfuscation_tag;
  ObfuscationBreakdown obfuscation_t1406;
};

inline MitreReportResult stage_report_mitre(const PipelineConfig& cfg,
                                            Transport* transport = nullptr) {
  pipedetail::require(cfg.predictions_path(), "report-mitre");
  auto predictions = load_predictions(cfg.predictions_path());
  FetchOptions fo{cfg.cache_dir, cfg.offline, transport};
  std::map<std::string, BehaviorReport> reports;
  for (const auto& p : predictions) {
    if (p.true_label != 1) continue;
    try {
      reports.emplace(p.sha256, fetch_report(p.sha256, fo));
    } catch (const CacheMiss&) {
      // excluded-and-counted by the prevalence denominators
    }
  }
  MitreReportResult r;
  r.prevalence = prevalence(predictions, reports);
  r.obfuscation_tag = obfuscation_breakdown(predictions, reports, false);
  r.obfuscation_t1406 = obfuscation_breakdown(predictions, reports, true);

  auto table_csv = [](const PrevalenceTable& t) {
    char buf[64];
    std::string s = "key,fn_pct,tp_pct,fn_hits,tp_hits\n";
    for (const auto& row : t.rows) {
      std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%zu,%zu\n",
                    row.key.c_str(), row.fn_pct, row.tp_pct, row.fn_hits,
                    row.tp_hits);
      s += buf;
    }
    return s;
  };
  write_file(cfg.workdir / "mitre_tactics.csv", table_csv(r.prevalence.tactics));
  write_file(cfg.workdir / "mitre_techniques.csv",
             table_csv(r.prevalence.techniques));

  char buf[256];
  std::string md = "# Behavior analysis\n\n";
  md += "FN denominator: " + std::to_string(r.prevalence.tactics.fn_denominator) +
        ", TP denominator: " +
        std::to_string(r.prevalence.tactics.tp_denominator) +
        ", samples without reports: " +
        std::to_string(r.prevalence.tactics.missing_reports) + "\n\n";
  md += "| Tactic | FN% | TP% |\n|---|---|---|\n";
  for (const auto& row : r.prevalence.tactics.rows) {
    std::snprintf(buf, sizeof(buf), "| %s | %.1f%% | %.1f%% |\n",
                  row.key.c_str(), row.fn_pct, row.tp_pct);
    md += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "\nObfuscated (tag): %.1f%% of malware; TP %.1f%%, FN %.1f%%\n",
                r.obfuscation_tag.obfuscated_share,
                r.obfuscation_tag.tp_share.value_or(0.0),
                r.obfuscation_tag.fn_share.value_or(0.0));
  md += buf;
  write_file(cfg.workdir / "report.md", md);
  return r;
}

}  // namespace tempo
