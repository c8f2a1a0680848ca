#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "severe/array_store.hpp"
#include "severe/calendar.hpp"

namespace severe {

constexpr int kPatchSize = 64;
constexpr int kHoursPerDay = 24;
constexpr int kWindowLength = 4;
constexpr double kEarthRadiusKm = 6371.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

double great_circle_km(LatLon a, LatLon b);

// Storm-scale grid on a local plate-carree projection. Row index grows
// northward from `origin`, column index eastward; grid point (r, c) sits at
// fractional position (r, c).
struct FineGridSpec {
  int n_rows = 192;
  int n_cols = 192;
  double spacing_km = 3.0;
  LatLon origin{30.0, -100.0};
  std::vector<double> elevation;  // n_rows * n_cols, row-major, meters

  void validate() const;
  LatLon latlon(double row, double col) const;
  // Fractional (row, col) of a location.
  std::array<double, 2> project(LatLon p) const;
};

struct CoarseGridSpec {
  int n_rows = 6;
  int n_cols = 6;
  double spacing_km = 80.0;
  std::vector<LatLon> centers;  // row-major, n_rows * n_cols
  // Reports outside this box are skipped when gridding.
  LatLon lower{0.0, 0.0};
  LatLon upper{0.0, 0.0};

  int n_cells() const { return n_rows * n_cols; }
};

// Coarse grid with cell centers evenly spread over the fine grid, restricted
// so every 64x64 footprint fits; the domain box is the fine-grid extent.
CoarseGridSpec make_coarse_grid(const FineGridSpec& fine, int n_rows, int n_cols);

struct PatchOrigin {
  int row0 = 0;
  int col0 = 0;
};

struct PatchIndexMap {
  std::vector<PatchOrigin> origins;  // per coarse cell, row-major
};

// Footprint top-left = fine cell containing the projected center minus 32.
PatchIndexMap build_patch_index(const FineGridSpec& fine, const CoarseGridSpec& coarse);

// Copies the 64x64 block of `field` (row-major n_rows x n_cols) for `cell`.
std::vector<float> extract_patch(std::span<const float> field, int n_rows, int n_cols, int cell,
                                 const PatchIndexMap& index);

enum class ReportCategory : std::uint8_t { tornado, hail, wind };
const char* category_name(ReportCategory c);
ReportCategory parse_category(const std::string& s);

struct ReportRecord {
  ReportCategory category = ReportCategory::hail;
  double lat = 0.0;
  double lon = 0.0;
  int hour = 0;
  Date day;
};

// labels[(day * 24 + window_start) * n_cells + cell] in {0, 1}.
struct LabelGrid {
  std::vector<Date> days;
  int n_cells = 0;
  int window_len = kWindowLength;
  std::vector<std::uint8_t> labels;

  std::size_t offset(int day_idx, int start, int cell) const {
    return (static_cast<std::size_t>(day_idx) * kHoursPerDay + start) * n_cells + cell;
  }
  std::uint8_t at(int day_idx, int start, int cell) const { return labels[offset(day_idx, start, cell)]; }
};

// Window starts a report at `hour` belongs to: {h-2, h-1, h, h+1} within the day.
std::vector<int> report_window_starts(int hour);

// Nearest coarse cell by great-circle distance; ties go to the lowest
// (row, col). Returns -1 when the point lies outside the domain box.
int nearest_cell(const CoarseGridSpec& coarse, LatLon p);

struct GriddedReports {
  LabelGrid grid;
  std::size_t skipped = 0;
};

// Days are the consecutive range [first, first + n_days).
GriddedReports grid_reports(const std::vector<ReportRecord>& reports, const CoarseGridSpec& coarse, Date first,
                            int n_days);

constexpr double kClimatologyFloor = 1e-4;
constexpr int kClimatologyDays = 365;

struct ClimatologySmoothing {
  double sigma_doy = 15.0;
  double sigma_hour = 2.0;
};

// prob[(cell * 365 + (doy - 1)) * 24 + hour].
struct Climatology {
  int n_cells = 0;
  std::vector<double> prob;
  int first_year = 0;
  int last_year = 0;
};

// Relative frequency per (cell, day of year, hour) smoothed by circular
// Gaussian kernels in day of year and hour. Smoothing is applied to event
// counts and sample counts separately, so zero widths give the exact
// empirical frequency. Day 366 is folded onto day 1.
Climatology build_climatology(const LabelGrid& archive, const ClimatologySmoothing& smooth);

double climatology_lookup(const Climatology& clim, int cell, int doy, int hour);

void save_label_grid(ArrayStore& store, const std::string& prefix, const LabelGrid& grid);
LabelGrid load_label_grid(const ArrayStore& store, const std::string& prefix);
void save_climatology(ArrayStore& store, const std::string& prefix, const Climatology& clim);
Climatology load_climatology(const ArrayStore& store, const std::string& prefix);

// CSV with header `day,hour,category,lat,lon`; day as YYYY-MM-DD.
std::vector<ReportRecord> read_reports_csv(const std::filesystem::path& path);
void write_reports_csv(const std::filesystem::path& path, const std::vector<ReportRecord>& reports);

}  // namespace severe
