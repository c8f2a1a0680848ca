#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace severe {

// The 15 diagnostics in stack-channel order, then the three static inputs.
enum class PredictorId : int {
  cref,
  uh_0_2km,
  uh_2_5km,
  apcp,
  wind_10m,
  graupel,
  mslp,
  temp_2m,
  dewpoint_2m,
  cape,
  cin,
  srh_0_1km,
  srh_0_3km,
  shear_u_0_6km,
  shear_v_0_6km,
  latitude,
  longitude,
  elevation,
};

constexpr int kNumDiagnostics = 15;
constexpr int kNumPredictors = 18;

constexpr int channel(PredictorId id) { return static_cast<int>(id); }

// Short names used in files and on the command line, e.g. "CAPE", "UH25".
const char* predictor_name(PredictorId id);
PredictorId parse_predictor(const std::string& name);  // UnknownPredictor
std::array<PredictorId, kNumDiagnostics> diagnostics();

enum class NormMethod { log_transform, standardize, minmax };
const char* method_name(NormMethod m);

NormMethod method_for(PredictorId id);

struct NormalizerSpec {
  PredictorId id = PredictorId::cref;
  NormMethod method = NormMethod::log_transform;
  double mean = 0.0;  // standardize
  double std = 1.0;
  double min = 0.0;   // minmax
  double max = 1.0;
  std::string fitted_on;
};

// CIN arrives signed (<= 0) and is normalized as its magnitude; every other
// predictor is used as is.
double to_transform_input(PredictorId id, double raw);
double from_transform_input(PredictorId id, double v);

// Population statistics for standardize, sample extremes for minmax, nothing
// for the log transform. Throws DegenerateSample.
NormalizerSpec fit_normalizer(PredictorId id, std::span<const double> raw, const std::string& fitted_on = "");

// log: ln(1 + x); standardize: (x - mean) / std; minmax: (x - min) / (max - min).
// Throws NegativeLogInput.
double apply_normalizer(const NormalizerSpec& spec, double raw);
void apply_normalizer(const NormalizerSpec& spec, std::span<float> values);
double invert_normalizer(const NormalizerSpec& spec, double y);
void invert_normalizer(const NormalizerSpec& spec, std::span<float> values);

// key=value text, one spec per block.
std::string to_text(const NormalizerSpec& spec);
NormalizerSpec spec_from_text(const std::string& text);

// Normalizers for all 18 predictors, indexed by PredictorId.
struct NormalizerSet {
  std::vector<NormalizerSpec> specs;

  const NormalizerSpec& operator[](PredictorId id) const { return specs.at(static_cast<std::size_t>(id)); }
  std::string to_text() const;
  static NormalizerSet from_text(const std::string& text);
};

}  // namespace severe
