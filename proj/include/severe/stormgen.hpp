#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "severe/griddata.hpp"
#include "severe/normalize.hpp"

namespace severe {

// A convective storm planted as an isotropic Gaussian bump. Storms are
// visible in the fields at hour-1 and hour+1 at half amplitude as well.
struct StormObject {
  double row = 0.0;
  double col = 0.0;
  double radius = 4.0;     // fine cells
  double intensity = 1.0;  // (0, 2]
  double rotation = 0.5;   // [0, 1]
  int hour = 0;
  int id = 0;  // index within its day
};

struct SynthConfig {
  int fine_rows = 192;
  int fine_cols = 192;
  double spacing_km = 3.0;
  LatLon origin{33.0, -100.0};
  int coarse_rows = 6;
  int coarse_cols = 6;

  double storms_per_day = 24.0;  // Poisson mean before the seasonal factor
  // Report probability sigmoid(a_uh * rotation * intensity + a_cref * intensity - bias).
  double a_uh = 3.0;
  double a_cref = 1.0;
  double bias = 3.0;
  // Target domain pattern correlations.
  double corr_cape_cin = -0.5;  // CIN signed (<= 0)
  double corr_cref_dewpoint = 0.5;
  double corr_srh = 0.7;
  double noise_floor = 0.5;
  std::uint64_t seed = 1;
  Date start = Date::from_ymd(2020, 1, 1);

  void validate() const;
  FineGridSpec fine_grid() const;  // includes the synthetic elevation field
  CoarseGridSpec coarse_grid() const;
};

// Raw (physical-unit) diagnostics for one valid hour, channel-major:
// values[ch * rows * cols + r * cols + c].
struct HourFields {
  int rows = 0;
  int cols = 0;
  std::vector<float> values;

  std::span<const float> channel(int ch) const {
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    return {values.data() + ch * n, n};
  }
  std::span<float> channel(int ch) {
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    return {values.data() + ch * n, n};
  }
};

struct SynthDay {
  Date day;
  std::vector<StormObject> storms;
  std::vector<HourFields> hours;  // 24
};

// Storm list of one day; deterministic in (seed, day).
std::vector<StormObject> synth_storms(const SynthConfig& cfg, Date day);
// Fields of a single hour; deterministic in (seed, day, hour).
HourFields synth_hour(const SynthConfig& cfg, Date day, int hour, const std::vector<StormObject>& storms);
SynthDay synth_day(const SynthConfig& cfg, Date day);

double report_probability(const SynthConfig& cfg, const StormObject& s);
// One Bernoulli draw per storm; category hail/wind/tornado with weights
// 0.5/0.35/0.15; location = storm center.
std::vector<ReportRecord> synth_labels(const SynthConfig& cfg, Date day, const std::vector<StormObject>& storms);

// Exact probability that (window start, cell) is labeled positive given the
// planted storms: 1 - prod(1 - p_s) over storms that would stamp it.
// Returned as [start * n_cells + cell].
std::vector<double> bayes_probabilities(const SynthConfig& cfg, const std::vector<StormObject>& storms,
                                        const CoarseGridSpec& coarse);

struct SynthArchive {
  SynthConfig cfg;
  std::vector<Date> days;
  std::vector<int> train;  // indices into days
  std::vector<int> val;
  std::vector<int> verify;
  std::vector<std::vector<StormObject>> storms;  // per day
  std::vector<ReportRecord> reports;
  LabelGrid labels;
};

// The trailing `verify_days` days form the verification block; 10% of the
// rest (seeded) is validation, the remainder training.
SynthArchive make_archive(const SynthConfig& cfg, int n_days, int verify_days);

// Labels of `years` whole years immediately before cfg.start, used to build
// the climatology reference.
LabelGrid climatology_archive(const SynthConfig& cfg, int years);

void save_archive(ArrayStore& store, const SynthArchive& archive);
SynthArchive load_archive(const ArrayStore& store, const SynthConfig& cfg);

// Static predictors at fine resolution: latitude, longitude, elevation.
std::array<std::vector<double>, 3> static_fields(const SynthConfig& cfg);

}  // namespace severe
