#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "pipeline_internal.hpp"
#include "severe/error.hpp"
#include "severe/log.hpp"
#include "severe/parallel.hpp"

namespace severe::detail {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

CsvWriter::CsvWriter(const fs::path& path, const std::string& header) : path_(path), out_(path) {
  require(static_cast<bool>(out_), Errc::io_error, "cannot write " + path.string());
  out_ << header << '\n';
}

void CsvWriter::close() {
  out_.close();
  require(!out_.fail(), Errc::io_error, "failed writing " + path_.string());
}

SynthArchive load_run_archive(const ExperimentConfig& cfg, const RunPaths& paths) {
  require(fs::exists(paths.archive()), Errc::io_error, "no archive in the run directory; run synth-data first");
  return load_archive(ArrayStore::load(paths.archive()), cfg.synth_config());
}

NormalizerSet load_run_normalizers(const RunPaths& paths) {
  std::ifstream in(paths.normalizers());
  require(static_cast<bool>(in), Errc::io_error, "no normalizers in the run directory; run synth-data first");
  std::stringstream ss;
  ss << in.rdbuf();
  return NormalizerSet::from_text(ss.str());
}

void require_digest(const ArrayStore& store, const std::string& what, const std::string& digest) {
  require(store.has_attr("normalizer_digest") && store.attr("normalizer_digest") == digest, Errc::checkpoint_mismatch,
          what + " was trained with different normalizers");
}

nn::Tensor<float> materialize_patches(const SynthArchive& archive, const NormalizerSet& norms,
                                      const PatchIndexMap& index, const std::vector<PatchSample>& samples) {
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[{samples[i].day, samples[i].hour}].push_back(i);
  std::vector<std::pair<std::pair<int, int>, std::vector<std::size_t>>> work(groups.begin(), groups.end());

  nn::Tensor<float> out({static_cast<int>(samples.size()), kPatchSize, kPatchSize, kNumDiagnostics});
  const std::size_t patch_len = static_cast<std::size_t>(kPatchSize) * kPatchSize * kNumDiagnostics;
  parallel_for(work.size(), [&](std::size_t w) {
    const auto [day, hour] = work[w].first;
    const auto stack = normalized_stack(
        synth_hour(archive.cfg, archive.days.at(day), hour, archive.storms.at(day)), norms);
    std::vector<int> cells;
    for (auto i : work[w].second) cells.push_back(samples[i].cell);
    const auto patches = stack_patches(stack, index, cells);
    for (std::size_t j = 0; j < cells.size(); ++j)
      std::copy(patches.sample(static_cast<int>(j)), patches.sample(static_cast<int>(j)) + patch_len,
                out.sample(static_cast<int>(work[w].second[j])));
  });
  return out;
}

bool storm_in_footprint(const std::vector<StormObject>& storms, const PatchOrigin& origin, int hour) {
  return std::any_of(storms.begin(), storms.end(), [&](const StormObject& s) {
    return std::abs(s.hour - hour) <= 1 && s.row >= origin.row0 && s.row < origin.row0 + kPatchSize &&
           s.col >= origin.col0 && s.col < origin.col0 + kPatchSize;
  });
}

std::vector<float> day_mlp_features(const DayInput& input) {
  const int n_cells = static_cast<int>(input.index.origins.size());
  std::vector<int> cells(n_cells);
  for (int c = 0; c < n_cells; ++c) cells[c] = c;
  std::vector<std::vector<std::vector<float>>> summaries(kHoursPerDay);
  for (int h = 0; h < kHoursPerDay; ++h) {
    const auto patches = stack_patches(input.stacks[h], input.index, cells);
    const auto& s = patches.shape();
    for (int c = 0; c < n_cells; ++c) summaries[h].push_back(patch_summary(patches.sample(c), s.c, s.h * s.w));
  }
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(kHoursPerDay) * n_cells * MlpModel::kMlpFeatures);
  for (int w = 0; w < kHoursPerDay; ++w)
    for (int c = 0; c < n_cells; ++c) {
      std::vector<std::vector<float>> per_hour;
      for (int h : window_feature_hours(w)) per_hour.push_back(summaries[h][c]);
      const auto f = mlp_features_from_summaries(per_hour, input.geo[c]);
      out.insert(out.end(), f.begin(), f.end());
    }
  return out;
}

void run_synth_data(const ExperimentConfig& cfg, const RunPaths& paths) {
  fs::create_directories(paths / "data");
  const auto synth = cfg.synth_config();
  const auto archive = make_archive(synth, cfg.n_days, cfg.verify_days);
  log_info("archive: ", archive.days.size(), " days, ", archive.reports.size(), " reports");
  {
    ArrayStore store;
    save_archive(store, archive);
    store.save(paths.archive());
  }
  write_reports_csv(paths.reports(), archive.reports);

  std::vector<Date> train_days;
  for (int d : archive.train) train_days.push_back(archive.days[d]);
  const auto norms = fit_normalizers(synth, train_days, "train");
  {
    std::ofstream out(paths.normalizers());
    out << norms.to_text();
    require(static_cast<bool>(out), Errc::io_error, "failed writing " + paths.normalizers().string());
  }

  const auto clim = build_climatology(climatology_archive(synth, cfg.climatology_years), cfg.smoothing);
  ArrayStore store;
  save_climatology(store, "climatology/", clim);
  store.save(paths.climatology());
}

}  // namespace severe::detail
