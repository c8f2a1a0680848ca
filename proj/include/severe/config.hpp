#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "severe/cgan.hpp"
#include "severe/griddata.hpp"
#include "severe/nn/optim.hpp"
#include "severe/severe_models.hpp"
#include "severe/stormgen.hpp"

namespace severe {

struct EnsembleSizes {
  int cgan_members = 10;     // K
  int dropout_members = 10;  // M, for the CNN and MLP ensembles
  bool cross_product = false;
  int cross_draws = 10;
};

struct VerifyOptions {
  int reliability_bins = 20;
  int bootstrap = 100;
  int spread_bins = 10;
  double mask_threshold = 150.0;
  // Sample count the mask threshold refers to; it is scaled to the
  // verification set actually used.
  double mask_reference_samples = 365.0 * 24.0 * 6045.0;
  int importance_shuffles = 20;
  double top_fraction = 0.10;
  // Storm-containing verification patches whose generated fields are
  // correlated per day; 0 skips the CGAN fidelity table.
  int fidelity_patches_per_day = 8;
};

// Everything a run depends on. Stage seeds are derived from `seed`; the
// synthetic archive's own seed field is ignored in favor of the derived one.
struct ExperimentConfig {
  std::uint64_t seed = 1;

  SynthConfig synth;
  int n_days = 220;
  int verify_days = 20;
  int climatology_years = 2;
  ClimatologySmoothing smoothing;

  CganConfig cgan;
  int cgan_bank = 1500;

  EncoderSpec encoder;
  nn::TrainConfig encoder_train;
  int encoder_positives = 400;
  int encoder_negatives = 4000;
  double encoder_ratio = 10.0;

  ClassifierSpec classifier;
  nn::TrainConfig classifier_train;
  double classifier_ratio = 1.0;

  MlpSpec mlp;
  nn::TrainConfig mlp_train;
  double mlp_ratio = 1.0;

  EnsembleSizes ensemble;
  VerifyOptions verify;

  ExperimentConfig();

  // Copies with seeds filled in from the global seed.
  SynthConfig synth_config() const;
  std::uint64_t stage_seed(const std::string& stage) const;

  // INI text with [section] headers; doubles are written with enough digits
  // to round-trip exactly.
  std::string to_ini() const;
  // Missing keys keep their defaults; unknown sections or keys and
  // malformed values throw ConfigError.
  static ExperimentConfig from_ini(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  void validate() const;
  std::string digest() const;  // SHA-256 of to_ini()
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace severe
