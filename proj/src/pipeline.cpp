#include "severe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pipeline_internal.hpp"
#include "severe/digest.hpp"
#include "severe/log.hpp"

#ifndef SEVERE_VERSION
#define SEVERE_VERSION "0.0.0"
#endif

namespace severe {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const char* software_version() { return SEVERE_VERSION; }

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::synth_data: return "synth-data";
    case Stage::train_cgan: return "train-cgan";
    case Stage::train_encoder: return "train-encoder";
    case Stage::train_classifier: return "train-classifier";
    case Stage::train_mlp: return "train-mlp";
    case Stage::predict: return "predict";
    case Stage::verify: return "verify";
    case Stage::report: return "report";
  }
  return "?";
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages{Stage::synth_data, Stage::train_cgan, Stage::train_encoder,
                                         Stage::train_classifier, Stage::train_mlp, Stage::predict,
                                         Stage::verify, Stage::report};
  return stages;
}

Stage parse_stage(const std::string& name) {
  for (auto s : all_stages())
    if (name == stage_name(s)) return s;
  fail(Errc::config_error, "unknown stage '" + name + "'");
}

std::vector<Stage> parse_stages(const std::string& list) {
  if (list == "all") return all_stages();
  std::set<Stage> chosen;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) chosen.insert(parse_stage(item));
  require(!chosen.empty(), Errc::config_error, "no stages selected");
  return {chosen.begin(), chosen.end()};
}

StageFailure::StageFailure(Stage stage, Errc cause, const std::string& what)
    : Error(Errc::stage_failure, std::string(stage_name(stage)) + " failed: " + what), stage_(stage), cause_(cause) {}

fs::path RunPaths::forecast_csv(EnsembleMethod m) const {
  return root / "forecasts" / (std::string(method_name(m)) + ".csv");
}
fs::path RunPaths::forecast_store(EnsembleMethod m) const {
  return root / "forecasts" / (std::string(method_name(m)) + ".sev");
}

std::string RunManifest::to_json() const {
  json j;
  j["version"] = version;
  j["config_digest"] = config_digest;
  j["completed"] = completed;
  j["timings_s"] = timings;
  j["checkpoints"] = checkpoints;
  j["metric_files"] = metric_files;
  j["files"] = files;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  try {
    const auto j = json::parse(text);
    m.version = j.at("version").get<std::string>();
    m.config_digest = j.at("config_digest").get<std::string>();
    m.completed = j.at("completed").get<std::vector<std::string>>();
    m.timings = j.at("timings_s").get<std::map<std::string, double>>();
    m.checkpoints = j.at("checkpoints").get<std::map<std::string, std::string>>();
    m.metric_files = j.at("metric_files").get<std::vector<std::string>>();
    m.files = j.at("files").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    fail(Errc::format_error, std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

void RunManifest::save(const fs::path& path) const {
  std::ofstream out(path);
  out << to_json();
  require(static_cast<bool>(out), Errc::io_error, "failed writing " + path.string());
}

RunManifest RunManifest::load(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io_error, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

namespace {

// Re-hashes every file of the run directory.
void refresh_listing(RunManifest& m, const RunPaths& paths) {
  m.files.clear();
  m.checkpoints.clear();
  m.metric_files.clear();
  std::vector<std::string> rels;
  for (const auto& e : fs::recursive_directory_iterator(paths.root))
    if (e.is_regular_file()) rels.push_back(fs::relative(e.path(), paths.root).generic_string());
  std::sort(rels.begin(), rels.end());
  for (const auto& rel : rels) {
    if (rel == "manifest.json") continue;
    const auto digest = sha256_file(paths.root / rel);
    m.files[rel] = digest;
    if (rel.rfind("models/", 0) == 0 && rel.size() > 4 && rel.substr(rel.size() - 4) == ".sev") m.checkpoints[rel] = digest;
    if (rel.rfind("metrics/", 0) == 0) m.metric_files.push_back(rel);
  }
}

void run_stage(Stage s, const ExperimentConfig& cfg, const RunPaths& paths, const RunOptions& options,
               RunManifest& m) {
  switch (s) {
    case Stage::synth_data: return detail::run_synth_data(cfg, paths);
    case Stage::train_cgan: return detail::run_train_cgan(cfg, paths);
    case Stage::train_encoder: return detail::run_train_encoder(cfg, paths);
    case Stage::train_classifier: return detail::run_train_classifier(cfg, paths, options.classifier_window);
    case Stage::train_mlp: return detail::run_train_mlp(cfg, paths);
    case Stage::predict: return detail::run_predict(cfg, paths);
    case Stage::verify: return detail::run_verify(cfg, paths);
    case Stage::report:
      refresh_listing(m, paths);
      emit_report(m, paths.root);
      return;
  }
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& cfg, const fs::path& out, const RunOptions& options) {
  require(fs::is_directory(out), Errc::config_error, "output directory " + out.string() + " does not exist");
  cfg.validate();
  const RunPaths paths{out};
  RunManifest m;
  if (fs::exists(paths.manifest())) {
    try {
      m = RunManifest::load(paths.manifest());
    } catch (const Error&) {
      m = RunManifest{};
    }
    if (!m.config_digest.empty() && m.config_digest != cfg.digest())
      log_info("config differs from the one recorded in ", paths.manifest().string());
  }
  m.version = software_version();
  m.config_digest = cfg.digest();
  cfg.save(paths.config());

  for (Stage s : options.stages) {
    const std::string name = stage_name(s);
    log_info("stage ", name);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      run_stage(s, cfg, paths, options, m);
    } catch (const std::exception& e) {
      const auto* err = dynamic_cast<const Error*>(&e);
      refresh_listing(m, paths);
      m.save(paths.manifest());
      throw StageFailure(s, err ? err->code() : Errc::stage_failure, e.what());
    }
    m.timings[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.completed.erase(std::remove(m.completed.begin(), m.completed.end(), name), m.completed.end());
    m.completed.push_back(name);
  }
  refresh_listing(m, paths);
  m.save(paths.manifest());
  return m;
}

TrainedRun load_trained_run(const ExperimentConfig& cfg, const fs::path& out) {
  const RunPaths paths{out};
  TrainedRun run;
  run.cfg = cfg;
  run.synth = cfg.synth_config();
  run.norms = detail::load_run_normalizers(paths);
  const auto digest = normalizer_digest(run.norms);
  auto open = [&](const fs::path& p, const std::string& what) {
    require(fs::exists(p), Errc::io_error, "no " + what + " checkpoint in the run directory");
    auto store = ArrayStore::load(p);
    detail::require_digest(store, what + " checkpoint", digest);
    return store;
  };
  run.models.encoder = load_encoder(open(paths.encoder(), "encoder"), cfg.encoder);
  run.models.classifiers = load_classifiers(open(paths.classifiers(), "classifier"), cfg.classifier,
                                            cfg.encoder.feature_size());
  run.models.mlp = load_mlp(open(paths.mlp(), "MLP"), cfg.mlp);
  run.models.normalizer_digest = digest;
  run.cgan.cfg = cfg.cgan;
  run.cgan.cfg.seed = cfg.stage_seed("train-cgan");
  load_cgan(open(paths.cgan(), "CGAN"), run.cgan.cfg, run.cgan.a, run.cgan.b);
  run.cgan.normalizer_digest = digest;
  return run;
}

DayInput make_day_input(const SynthConfig& synth, const NormalizerSet& norms, Date day) {
  DayInput in;
  in.day = day;
  in.stacks = day_stacks(synth, norms, day);
  const auto coarse = synth.coarse_grid();
  in.index = build_patch_index(synth.fine_grid(), coarse);
  in.geo = cell_geography(synth, norms, in.index);
  in.coarse_cols = coarse.n_cols;
  in.normalizer_digest = normalizer_digest(norms);
  return in;
}

EnsembleForecast predict_day(const TrainedRun& run, Date day, const std::string& method, int members,
                             std::uint64_t seed) {
  const auto m = parse_method(method);
  const auto input = make_day_input(run.synth, run.norms, day);
  switch (m) {
    case EnsembleMethod::cgan: {
      CganEnsembleOptions opt;
      opt.members = members;
      opt.cross_product = run.cfg.ensemble.cross_product;
      opt.dropout_draws = run.cfg.ensemble.cross_draws;
      return cgan_ensemble_predict(run.cgan, run.models, input, opt, seed);
    }
    case EnsembleMethod::cnn: return cnn_ensemble_predict(run.models, input, members, seed);
    case EnsembleMethod::mlp: return mlp_ensemble_predict(run.models, input, members, seed);
  }
  fail(Errc::unknown_method, method);
}

}  // namespace severe
