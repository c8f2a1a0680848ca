#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pipeline_internal.hpp"
#include "severe/error.hpp"
#include "severe/pipeline.hpp"

namespace severe {

namespace fs = std::filesystem;

namespace {

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    require(it != header.end(), Errc::missing_metric, "metric column '" + name + "' is missing");
    return static_cast<int>(it - header.begin());
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Csv read_csv(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::missing_metric, "metric file " + path.string() + " is missing");
  Csv csv;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::missing_metric, path.string() + " is empty");
  csv.header = split(line);
  while (std::getline(in, line))
    if (!line.empty()) csv.rows.push_back(split(line));
  return csv;
}

std::string md_row(const std::vector<std::string>& cells) {
  std::string s = "|";
  for (const auto& c : cells) s += " " + c + " |";
  return s + "\n";
}

std::string md_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string s = md_row(header);
  s += md_row(std::vector<std::string>(header.size(), "---"));
  for (const auto& r : rows) s += md_row(r);
  return s;
}

// Selected columns of every row, copied verbatim.
std::string project(const Csv& csv, const std::vector<std::string>& cols,
                    const std::function<bool(const std::vector<std::string>&)>& keep = nullptr) {
  std::vector<int> idx;
  for (const auto& c : cols) idx.push_back(csv.col(c));
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : csv.rows) {
    if (keep && !keep(r)) continue;
    std::vector<std::string> out;
    for (int i : idx) out.push_back(i < static_cast<int>(r.size()) ? r[i] : "");
    rows.push_back(out);
  }
  return md_table(cols, rows);
}

bool listed(const RunManifest& m, const std::string& rel) {
  return std::find(m.metric_files.begin(), m.metric_files.end(), rel) != m.metric_files.end();
}

std::string fraction_text(std::size_t hits, std::size_t total) {
  if (total == 0) return "n/a";
  return detail::fmt(static_cast<double>(hits) / static_cast<double>(total)) + " (" + std::to_string(hits) + " of " +
         std::to_string(total) + ")";
}

}  // namespace

fs::path emit_report(const RunManifest& manifest, const fs::path& out) {
  require(!manifest.metric_files.empty(), Errc::missing_metric, "the run has no metrics; run verify first");
  for (const char* required : {"metrics/bss_summary.csv", "metrics/bss_by_window.csv"})
    require(listed(manifest, required), Errc::missing_metric, std::string(required) + " is not in the run");
  const RunPaths paths{out};
  auto metric = [&](const std::string& rel) { return read_csv(paths / rel); };

  std::string md = "# Severe weather ensemble run\n\n";
  md += "Software version " + manifest.version + ", config digest `" + manifest.config_digest + "`.\n\n";

  const auto summary = metric("metrics/bss_summary.csv");
  md += "## Ensemble-mean skill\n\nBrier skill scores are relative to the synthetic climatology; member columns "
        "give the spread of individual member scores.\n\n";
  md += project(summary, {"method", "members", "rows", "bs", "bs_clim", "bss", "member_bss_median", "member_bss_min",
                          "member_bss_max", "members_below_mean"});

  md += "\n## Brier score decomposition and uncertainty quality\n\n";
  md += project(summary, {"method", "rel", "res", "unc", "bs", "ssrel", "mf"});

  md += "\n## BSS by lead window\n\nWindow s collects reports from hours s-1 to s+2.\n\n";
  md += project(metric("metrics/bss_by_window.csv"), {"window", "cgan", "cnn", "mlp"});

  if (listed(manifest, "metrics/significance.csv")) {
    md += "\n## CGAN minus baseline BSS (paired bootstrap over days)\n\n";
    md += project(metric("metrics/significance.csv"),
                  {"comparison", "window", "observed", "ci_low", "ci_high", "fraction_positive"},
                  [](const auto& r) { return r.at(1) == "all"; });
  }

  if (listed(manifest, "metrics/neighborhood.csv")) {
    const auto nb = metric("metrics/neighborhood.csv");
    const int masked = nb.col("masked"), method = nb.col("method");
    std::map<std::string, std::pair<int, int>> counts;
    for (const auto& r : nb.rows) {
      auto& c = counts[r.at(method)];
      c.second += 1;
      c.first += r.at(masked) == "1";
    }
    md += "\n## Neighborhood BSS maps\n\nCells pool their 3x3 neighborhood; the report-count mask threshold is " +
          (nb.rows.empty() ? std::string("n/a") : nb.rows.front().at(nb.col("threshold"))) + ".\n\n";
    std::vector<std::vector<std::string>> rows;
    for (const auto& [m, c] : counts) rows.push_back({m, std::to_string(c.first), std::to_string(c.second)});
    md += md_table({"method", "masked cells", "cells"}, rows);
  }

  if (listed(manifest, "metrics/top_decile.csv")) {
    md += "\n## Events among the best-scored decile, by report category\n\n";
    md += project(metric("metrics/top_decile.csv"), {"method", "category", "hits", "events", "fraction"});
  }

  if (listed(manifest, "metrics/permutation_importance.csv")) {
    auto imp = metric("metrics/permutation_importance.csv");
    const int delta = imp.col("mean_delta");
    std::stable_sort(imp.rows.begin(), imp.rows.end(),
                     [&](const auto& a, const auto& b) { return std::stod(a[delta]) > std::stod(b[delta]); });
    md += "\n## Permutation importance of the MLP inputs (Brier score increase)\n\n";
    md += project(imp, {"predictor", "mean_delta", "min_delta", "max_delta", "positive_shuffles"});
  }

  if (listed(manifest, "metrics/cgan_fidelity.csv")) {
    const auto fid = metric("metrics/cgan_fidelity.csv");
    const int gen_uh = fid.col("gen_cref_uh"), real_cc = fid.col("real_cape_cin"), gen_cc = fid.col("gen_cape_cin");
    std::size_t pos = 0, match = 0;
    for (const auto& r : fid.rows) {
      const double g = std::stod(r.at(gen_uh)), a = std::stod(r.at(real_cc)), b = std::stod(r.at(gen_cc));
      pos += g > 0.0;
      match += !std::isnan(a) && !std::isnan(b) && std::signbit(a) == std::signbit(b);
    }
    md += "\n## Generated fields on storm patches\n\n";
    md += "- generated CREF positively correlated with the conditioning UH: " + fraction_text(pos, fid.rows.size()) + "\n";
    md += "- generated CAPE/CIN correlation sign matches the real pair: " + fraction_text(match, fid.rows.size()) + "\n";
  }

  md += "\n## Files\n\n";
  for (const auto& f : manifest.metric_files) md += "- " + f + "\n";

  fs::create_directories(paths.summary().parent_path());
  std::ofstream file(paths.summary());
  file << md;
  require(static_cast<bool>(file), Errc::io_error, "failed writing " + paths.summary().string());
  return paths.summary();
}

}  // namespace severe
