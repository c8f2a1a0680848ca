#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "severe/config.hpp"
#include "severe/pipeline.hpp"
#include "severe/stacks.hpp"
#include "severe/stormgen.hpp"

namespace severe::detail {

void run_synth_data(const ExperimentConfig& cfg, const RunPaths& paths);
void run_train_cgan(const ExperimentConfig& cfg, const RunPaths& paths);
void run_train_encoder(const ExperimentConfig& cfg, const RunPaths& paths);
void run_train_classifier(const ExperimentConfig& cfg, const RunPaths& paths, std::optional<int> window);
void run_train_mlp(const ExperimentConfig& cfg, const RunPaths& paths);
void run_predict(const ExperimentConfig& cfg, const RunPaths& paths);
void run_verify(const ExperimentConfig& cfg, const RunPaths& paths);

// Run-directory inputs shared by several stages.
SynthArchive load_run_archive(const ExperimentConfig& cfg, const RunPaths& paths);
NormalizerSet load_run_normalizers(const RunPaths& paths);
void require_digest(const ArrayStore& store, const std::string& what, const std::string& digest);

struct PatchSample {
  int day = 0;  // index into archive.days
  int hour = 0;
  int cell = 0;
};

// Normalized 15-channel patches (n, 64, 64, 15) for the samples, in order.
// Each (day, hour) is synthesized once.
nn::Tensor<float> materialize_patches(const SynthArchive& archive, const NormalizerSet& norms,
                                      const PatchIndexMap& index, const std::vector<PatchSample>& samples);

// Whether a storm is visible in the cell's footprint at `hour`.
bool storm_in_footprint(const std::vector<StormObject>& storms, const PatchOrigin& origin, int hour);

// Rows of MLP features (24 * cells, 63) of a day in window-major, cell order,
// matching ensemble forecast rows.
std::vector<float> day_mlp_features(const DayInput& input);

std::string fmt(double v);  // %.10g

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header);
  template <class... Cols>
  void row(const Cols&... cols) {
    std::string line;
    bool first = true;
    ((line += first ? "" : ",", line += cell(cols), first = false), ...);
    out_ << line << '\n';
  }
  void close();

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }

  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace severe::detail
