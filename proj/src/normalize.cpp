#include "severe/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "severe/error.hpp"

namespace severe {
namespace {

constexpr const char* kNames[kNumPredictors] = {"CREF", "UH02",  "UH25",  "APCP",  "SPD10", "GRPL",
                                                "MSLP", "T2",    "TD2",   "CAPE",  "CIN",   "SRH01",
                                                "SRH03", "USHR6", "VSHR6", "LAT",   "LON",   "ELEV"};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

NormMethod parse_method(const std::string& s) {
  if (s == "log_transform") return NormMethod::log_transform;
  if (s == "standardize") return NormMethod::standardize;
  if (s == "minmax") return NormMethod::minmax;
  fail(Errc::format_error, "unknown normalization method '" + s + "'");
}

}  // namespace

const char* predictor_name(PredictorId id) { return kNames[static_cast<int>(id)]; }

PredictorId parse_predictor(const std::string& name) {
  for (int i = 0; i < kNumPredictors; ++i)
    if (name == kNames[i]) return static_cast<PredictorId>(i);
  fail(Errc::unknown_predictor, "unknown predictor '" + name + "'");
}

std::array<PredictorId, kNumDiagnostics> diagnostics() {
  std::array<PredictorId, kNumDiagnostics> out{};
  for (int i = 0; i < kNumDiagnostics; ++i) out[i] = static_cast<PredictorId>(i);
  return out;
}

const char* method_name(NormMethod m) {
  switch (m) {
    case NormMethod::log_transform: return "log_transform";
    case NormMethod::standardize: return "standardize";
    case NormMethod::minmax: return "minmax";
  }
  return "?";
}

NormMethod method_for(PredictorId id) {
  switch (id) {
    case PredictorId::cref:
    case PredictorId::uh_0_2km:
    case PredictorId::uh_2_5km:
    case PredictorId::apcp:
    case PredictorId::wind_10m:
    case PredictorId::graupel:
    case PredictorId::cape:
    case PredictorId::cin:
      return NormMethod::log_transform;
    case PredictorId::latitude:
    case PredictorId::longitude:
    case PredictorId::elevation:
      return NormMethod::minmax;
    default:
      return NormMethod::standardize;
  }
}

double to_transform_input(PredictorId id, double raw) { return id == PredictorId::cin ? -raw : raw; }
double from_transform_input(PredictorId id, double v) { return id == PredictorId::cin ? -v : v; }

NormalizerSpec fit_normalizer(PredictorId id, std::span<const double> raw, const std::string& fitted_on) {
  require(!raw.empty(), Errc::degenerate_sample, std::string("empty sample for ") + predictor_name(id));
  NormalizerSpec s;
  s.id = id;
  s.method = method_for(id);
  s.fitted_on = fitted_on;
  switch (s.method) {
    case NormMethod::log_transform:
      for (double v : raw)
        require(to_transform_input(id, v) >= 0.0, Errc::negative_log_input,
                std::string("negative value in log-transformed sample for ") + predictor_name(id));
      break;
    case NormMethod::standardize: {
      double sum = 0.0;
      for (double v : raw) sum += v;
      s.mean = sum / static_cast<double>(raw.size());
      double sq = 0.0;
      for (double v : raw) sq += (v - s.mean) * (v - s.mean);
      s.std = std::sqrt(sq / static_cast<double>(raw.size()));
      require(s.std > 0.0, Errc::degenerate_sample, std::string("zero spread in sample for ") + predictor_name(id));
      break;
    }
    case NormMethod::minmax: {
      const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
      s.min = *lo;
      s.max = *hi;
      require(s.max > s.min, Errc::degenerate_sample, std::string("constant sample for ") + predictor_name(id));
      break;
    }
  }
  return s;
}

double apply_normalizer(const NormalizerSpec& spec, double raw) {
  switch (spec.method) {
    case NormMethod::log_transform: {
      const double x = to_transform_input(spec.id, raw);
      if (x < 0.0) fail(Errc::negative_log_input, std::string("negative input to log transform of ") + predictor_name(spec.id));
      return std::log1p(x);
    }
    case NormMethod::standardize:
      return (raw - spec.mean) / spec.std;
    case NormMethod::minmax:
      return (raw - spec.min) / (spec.max - spec.min);
  }
  return raw;
}

void apply_normalizer(const NormalizerSpec& spec, std::span<float> values) {
  for (auto& v : values) v = static_cast<float>(apply_normalizer(spec, v));
}

double invert_normalizer(const NormalizerSpec& spec, double y) {
  switch (spec.method) {
    case NormMethod::log_transform:
      return from_transform_input(spec.id, std::expm1(y));
    case NormMethod::standardize:
      return y * spec.std + spec.mean;
    case NormMethod::minmax:
      return y * (spec.max - spec.min) + spec.min;
  }
  return y;
}

void invert_normalizer(const NormalizerSpec& spec, std::span<float> values) {
  for (auto& v : values) v = static_cast<float>(invert_normalizer(spec, v));
}

std::string to_text(const NormalizerSpec& spec) {
  std::ostringstream os;
  os << "predictor=" << predictor_name(spec.id) << '\n' << "method=" << method_name(spec.method) << '\n';
  if (spec.method == NormMethod::standardize)
    os << "mean=" << fmt_double(spec.mean) << '\n' << "std=" << fmt_double(spec.std) << '\n';
  if (spec.method == NormMethod::minmax)
    os << "min=" << fmt_double(spec.min) << '\n' << "max=" << fmt_double(spec.max) << '\n';
  os << "fitted_on=" << spec.fitted_on << '\n';
  return os.str();
}

NormalizerSpec spec_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, Errc::format_error, "normalizer line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  require(kv.count("predictor") && kv.count("method"), Errc::format_error, "normalizer text lacks predictor/method");
  NormalizerSpec s;
  s.id = parse_predictor(kv["predictor"]);
  s.method = parse_method(kv["method"]);
  if (kv.count("mean")) s.mean = std::stod(kv["mean"]);
  if (kv.count("std")) s.std = std::stod(kv["std"]);
  if (kv.count("min")) s.min = std::stod(kv["min"]);
  if (kv.count("max")) s.max = std::stod(kv["max"]);
  s.fitted_on = kv["fitted_on"];
  return s;
}

std::string NormalizerSet::to_text() const {
  std::string out;
  for (const auto& s : specs) out += severe::to_text(s) + "\n";
  return out;
}

NormalizerSet NormalizerSet::from_text(const std::string& text) {
  NormalizerSet set;
  std::istringstream is(text);
  std::string line, block;
  auto flush = [&] {
    if (!block.empty()) set.specs.push_back(spec_from_text(block));
    block.clear();
  };
  while (std::getline(is, line)) {
    if (line.empty())
      flush();
    else
      block += line + "\n";
  }
  flush();
  require(set.specs.size() == kNumPredictors, Errc::format_error, "normalizer set must hold 18 predictors");
  for (int i = 0; i < kNumPredictors; ++i)
    require(set.specs[i].id == static_cast<PredictorId>(i), Errc::format_error, "normalizer set out of order");
  return set;
}

}  // namespace severe
