// Pipeline entry point. Each subcommand runs one stage over persisted,
// fingerprinted artifacts; `pipeline` chains the ML stages in order.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>
#include <thread>

#include "tempo/pipeline.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace {

using tempo::PipelineConfig;

// VirusTotal behavior-summary client. Honors Retry-After on 429.
class VtTransport : public tempo::Transport {
 public:
  explicit VtTransport(std::string api_key) : api_key_(std::move(api_key)) {}

  std::string fetch(const std::string& sha256) override {
    httplib::SSLClient client("www.virustotal.com");
    httplib::Headers headers{{"x-apikey", api_key_}};
    for (int attempt = 0; attempt < 5; ++attempt) {
      auto res = client.Get(
          ("/api/v3/files/" + sha256 + "/behaviour_summary").c_str(), headers);
      if (!res) throw tempo::Error("network error fetching " + sha256);
      if (res->status == 200) return res->body;
      if (res->status == 401 || res->status == 403)
        throw tempo::AuthError("VirusTotal rejected the API key");
      if (res->status == 429) {
        int wait = 30;
        auto it = res->headers.find("Retry-After");
        if (it != res->headers.end()) wait = std::atoi(it->second.c_str());
        if (attempt == 4) throw tempo::RateLimited("rate limited", wait);
        std::this_thread::sleep_for(std::chrono::seconds(wait));
        continue;
      }
      throw tempo::Error("VirusTotal returned status " +
                         std::to_string(res->status) + " for " + sha256);
    }
    throw tempo::RateLimited("rate limited", 30);
  }

 private:
  std::string api_key_;
};

void apply_config_file(const std::string& path, PipelineConfig* cfg) {
  auto j = nlohmann::json::parse(tempo::read_file(path));
  if (j.contains("workdir")) cfg->workdir = j["workdir"].get<std::string>();
  if (j.contains("manifest")) cfg->manifest_csv = j["manifest"].get<std::string>();
  if (j.contains("corpus")) cfg->corpus_dir = j["corpus"].get<std::string>();
  if (j.contains("tables")) cfg->tables_dir = j["tables"].get<std::string>();
  if (j.contains("cache")) cfg->cache_dir = j["cache"].get<std::string>();
  if (j.contains("api_list"))
    cfg->api_list_file = j["api_list"].get<std::string>();
  if (j.contains("permission_list"))
    cfg->permission_list_file = j["permission_list"].get<std::string>();
  if (j.contains("seed")) cfg->seed = j["seed"].get<uint64_t>();
  if (j.contains("offline")) cfg->offline = j["offline"].get<bool>();
  if (j.contains("include_unknown"))
    cfg->include_unknown = j["include_unknown"].get<bool>();
  if (j.contains("lr_grid"))
    cfg->lr_grid = j["lr_grid"].get<std::vector<double>>();
  if (j.contains("cv_folds")) cfg->cv_folds = j["cv_folds"].get<size_t>();
  if (j.contains("lr_max_iters"))
    cfg->lr_opts.max_iters = j["lr_max_iters"].get<size_t>();
  if (j.contains("lr_tol")) cfg->lr_opts.tol = j["lr_tol"].get<double>();
  if (j.contains("split")) {
    const auto& s = j["split"];
    if (s.contains("test_year")) cfg->split.test_year = s["test_year"];
    if (s.contains("test_malware")) cfg->split.test_malware = s["test_malware"];
    if (s.contains("test_benign")) cfg->split.test_benign = s["test_benign"];
  }
  if (j.contains("byol")) {
    const auto& b = j["byol"];
    if (b.contains("encoder_hidden"))
      cfg->byol.encoder_hidden = b["encoder_hidden"].get<std::vector<size_t>>();
    if (b.contains("embed_dim")) cfg->byol.embed_dim = b["embed_dim"];
    if (b.contains("projector_hidden"))
      cfg->byol.projector_hidden = b["projector_hidden"];
    if (b.contains("projector_out")) cfg->byol.projector_out = b["projector_out"];
    if (b.contains("predictor_hidden"))
      cfg->byol.predictor_hidden = b["predictor_hidden"];
    if (b.contains("epochs")) cfg->byol.epochs = b["epochs"];
    if (b.contains("batch_size")) cfg->byol.batch_size = b["batch_size"];
    if (b.contains("lr")) cfg->byol.lr = b["lr"];
    if (b.contains("momentum")) cfg->byol.momentum = b["momentum"];
    if (b.contains("tau")) cfg->byol.tau = b["tau"];
    if (b.contains("dropout_p")) cfg->byol.dropout_p = b["dropout_p"];
    if (b.contains("bn_momentum")) cfg->byol.bn_momentum = b["bn_momentum"];
  }
}

int dispatch(const std::string& cmd, PipelineConfig& cfg) {
  using namespace tempo;
  if (cmd == "extract") {
    stage_extract(cfg);
    std::cerr << "extract: wrote " << cfg.features_path() << "\n";
  } else if (cmd == "verify-timestamps") {
    CorpusVerification cv = stage_verify_timestamps(cfg);
    std::cerr << "verify-timestamps: " << cv.results.size() << " samples, "
              << "unmatched API rate " << cv.unmatched_rate() << "%\n";
    for (const auto& [year, dt] : cv.per_year)
      std::cerr << "  " << year << ": " << cv.discrepancy_rate(year)
                << "% discrepant (" << dt.first << "/" << dt.second << ")\n";
  } else if (cmd == "split") {
    SplitResult r = stage_split(cfg);
    std::cerr << "split: " << r.train_ids.size() << " train, "
              << r.test_ids.size() << " test, " << r.excluded_ids.size()
              << " excluded\n";
    for (const auto& w : r.warnings) std::cerr << "  warning: " << w << "\n";
  } else if (cmd == "build-vocab") {
    NgramVocabulary v = stage_build_vocab(cfg);
    std::cerr << "build-vocab: " << v.dimension() << " " << v.n
              << "-grams, fingerprint " << v.fingerprint.substr(0, 12) << "\n";
  } else if (cmd == "featurize") {
    stage_featurize(cfg);
    std::cerr << "featurize: wrote matrices for opcode/api/permission\n";
  } else if (cmd == "pretrain") {
    stage_pretrain(cfg);
    std::cerr << "pretrain: wrote byol models for opcode/api/permission\n";
  } else if (cmd == "embed") {
    stage_embed(cfg);
    std::cerr << "embed: wrote " << cfg.embeddings_path() << "\n";
  } else if (cmd == "train") {
    GridSearchResult r = stage_train(cfg);
    std::cerr << "train: best C=" << r.best_reg_c << " (mean CV F1 "
              << r.best_mean_f1 << "), stop=" << r.best.stop_condition << "\n";
  } else if (cmd == "evaluate") {
    MetricsReport rep = stage_evaluate(cfg);
    std::cerr << "evaluate: accuracy " << rep.accuracy << " precision "
              << rep.precision << " recall " << rep.recall << " F1 " << rep.f1
              << " (TP " << rep.tp << " FP " << rep.fp << " TN " << rep.tn
              << " FN " << rep.fn << ")\n";
  } else if (cmd == "report-mitre") {
    std::unique_ptr<VtTransport> transport;
    if (!cfg.offline) {
      const char* key = std::getenv("VT_API_KEY");
      if (!key)
        throw AuthError("online mode requires the VT_API_KEY environment variable");
      transport = std::make_unique<VtTransport>(key);
    }
    MitreReportResult r = stage_report_mitre(cfg, transport.get());
    std::cerr << "report-mitre: " << r.prevalence.tactics.rows.size()
              << " tactics, obfuscated share "
              << r.obfuscation_tag.obfuscated_share << "%\n";
  } else if (cmd == "pipeline") {
    dispatch("split", cfg);
    dispatch("build-vocab", cfg);
    dispatch("featurize", cfg);
    dispatch("pretrain", cfg);
    dispatch("embed", cfg);
    dispatch("train", cfg);
    dispatch("evaluate", cfg);
  } else {
    throw tempo::ConfigInvalid("unknown subcommand " + cmd);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-aware Android malware detection pipeline"};
  app.require_subcommand(1);

  PipelineConfig cfg;
  std::string config_file;
  uint64_t seed_flag = 0;

  // the config file loads before flag parsing so flags override it
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") config_file = argv[i + 1];
  try {
    if (!config_file.empty()) apply_config_file(config_file, &cfg);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  app.add_option("--config", config_file, "JSON config file");
  app.add_option("--workdir", cfg.workdir, "artifact directory");
  app.add_option("--manifest", cfg.manifest_csv, "manifest CSV");
  app.add_option("--corpus", cfg.corpus_dir, "APK directory");
  app.add_option("--tables", cfg.tables_dir, "timestamp tables directory");
  app.add_option("--cache", cfg.cache_dir, "report cache directory");
  app.add_option("--api-list", cfg.api_list_file, "API feature list file");
  app.add_option("--permission-list", cfg.permission_list_file,
                 "permission feature list file");
  auto* seed_opt = app.add_option("--seed", seed_flag, "master RNG seed");
  app.add_flag("--offline,!--online", cfg.offline,
               "report-mitre: cache only (default) or allow network");
  app.add_flag("--include-unknown", cfg.include_unknown,
               "let the UNKNOWN symbol participate in n-grams");
  app.add_option("--test-year", cfg.split.test_year, "test cohort year");
  app.add_option("--test-malware", cfg.split.test_malware,
                 "malware count in the test cohort");
  app.add_option("--test-benign", cfg.split.test_benign,
                 "benign count in the test cohort");
  app.add_option("--epochs", cfg.byol.epochs, "BYOL epochs");
  app.add_option("--batch", cfg.byol.batch_size, "BYOL batch size");
  app.add_option("--grid", cfg.lr_grid, "LR regularization grid (C values)");

  const char* subcommands[] = {"extract",  "verify-timestamps", "split",
                               "build-vocab", "featurize", "pretrain",
                               "embed",    "train",    "evaluate",
                               "report-mitre", "pipeline"};
  for (const char* name : subcommands) app.add_subcommand(name);

  CLI11_PARSE(app, argc, argv);

  try {
    if (seed_opt->count() > 0) cfg.seed = seed_flag;
    std::string cmd = app.get_subcommands().front()->get_name();
    return dispatch(cmd, cfg);
  } catch (const tempo::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const tempo::MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const tempo::FingerprintMismatch& e) {
    std::cerr << "fingerprint mismatch: " << e.what() << "\n";
    return 4;
  } catch (const tempo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
