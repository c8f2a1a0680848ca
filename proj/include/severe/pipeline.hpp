#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "severe/config.hpp"
#include "severe/ensembles.hpp"
#include "severe/error.hpp"

namespace severe {

const char* software_version();

// Pipeline stages in execution order; names match the CLI subcommands.
enum class Stage { synth_data, train_cgan, train_encoder, train_classifier, train_mlp, predict, verify, report };

const char* stage_name(Stage s);
Stage parse_stage(const std::string& name);  // ConfigError
const std::vector<Stage>& all_stages();
// Comma-separated names or "all"; returned in execution order without
// duplicates.
std::vector<Stage> parse_stages(const std::string& list);

// A stage threw; outputs of earlier stages and the stage's own partial
// outputs stay on disk.
class StageFailure : public Error {
 public:
  StageFailure(Stage stage, Errc cause, const std::string& what);
  Stage stage() const noexcept { return stage_; }
  Errc cause() const noexcept { return cause_; }

 private:
  Stage stage_;
  Errc cause_;
};

// Files of a run directory, relative to its root.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path operator/(const std::string& rel) const { return root / rel; }
  std::filesystem::path config() const { return root / "config.ini"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path archive() const { return root / "data/archive.sev"; }
  std::filesystem::path normalizers() const { return root / "data/normalizers.txt"; }
  std::filesystem::path climatology() const { return root / "data/climatology.sev"; }
  std::filesystem::path reports() const { return root / "data/reports.csv"; }
  std::filesystem::path features() const { return root / "data/features.sev"; }
  std::filesystem::path cgan() const { return root / "models/cgan.sev"; }
  std::filesystem::path encoder() const { return root / "models/encoder.sev"; }
  std::filesystem::path classifiers() const { return root / "models/classifiers.sev"; }
  std::filesystem::path mlp() const { return root / "models/mlp.sev"; }
  std::filesystem::path forecast_csv(EnsembleMethod m) const;
  std::filesystem::path forecast_store(EnsembleMethod m) const;
  std::filesystem::path verify_inputs() const { return root / "forecasts/verify_inputs.sev"; }
  std::filesystem::path metrics() const { return root / "metrics"; }
  std::filesystem::path summary() const { return root / "report/summary.md"; }
};

struct RunManifest {
  std::string version;
  std::string config_digest;
  std::vector<std::string> completed;              // stages, in the order run
  std::map<std::string, double> timings;           // seconds per stage
  std::map<std::string, std::string> files;        // relative path -> SHA-256
  std::map<std::string, std::string> checkpoints;  // models/*.sev -> SHA-256
  std::vector<std::string> metric_files;           // relative paths

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

struct RunOptions {
  std::vector<Stage> stages = all_stages();
  // Restricts train-classifier to one window start; the other windows keep
  // their stored weights.
  std::optional<int> classifier_window;
};

// Runs the selected stages in order inside an existing directory and writes
// config.ini and manifest.json. Missing directories fail before any work.
RunManifest run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out,
                           const RunOptions& options = {});

// Checkpoints and grids of a trained run, enough to forecast any day.
struct TrainedRun {
  ExperimentConfig cfg;
  SynthConfig synth;
  NormalizerSet norms;
  SevereModels models;
  TrainedCgan cgan;
};

TrainedRun load_trained_run(const ExperimentConfig& cfg, const std::filesystem::path& out);
DayInput make_day_input(const SynthConfig& synth, const NormalizerSet& norms, Date day);

// Dispatches to the ensemble of `method` ("cgan", "cnn" or "mlp") with
// `members` = K for the CGAN and M otherwise. Throws UnknownMethod.
EnsembleForecast predict_day(const TrainedRun& run, Date day, const std::string& method, int members,
                             std::uint64_t seed);

// Writes report/summary.md from the manifest's metric files and returns its
// path. Throws MissingMetric when a required metric is absent.
std::filesystem::path emit_report(const RunManifest& manifest, const std::filesystem::path& out);

}  // namespace severe
