#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "severe/array_store.hpp"
#include "severe/calendar.hpp"
#include "severe/cgan.hpp"
#include "severe/griddata.hpp"
#include "severe/nn/tensor.hpp"
#include "severe/severe_models.hpp"

namespace severe {

enum class EnsembleMethod { cgan, cnn, mlp };
const char* method_name(EnsembleMethod m);
// Throws UnknownMethod.
EnsembleMethod parse_method(const std::string& s);

struct ForecastKey {
  Date day;
  int window = 0;
  int cell = 0;
};

// Rows are keys; members are stored row-major (row * n_members + k).
struct EnsembleForecast {
  EnsembleMethod method = EnsembleMethod::cnn;
  int n_members = 0;
  int coarse_cols = 0;
  std::vector<ForecastKey> keys;
  std::vector<float> members;
  std::vector<double> mean;
  std::vector<double> spread;  // population standard deviation

  std::size_t rows() const { return keys.size(); }
  std::span<const float> row_members(std::size_t r) const {
    return {members.data() + r * n_members, static_cast<std::size_t>(n_members)};
  }
  // Appends rows and derives their mean and spread.
  void add_row(ForecastKey key, std::span<const float> probs);
  void append(const EnsembleForecast& other);
};

// Everything prediction needs besides the models: the grids and the
// normalized predictor stacks of one day.
struct DayInput {
  Date day;
  std::vector<nn::Tensor<float>> stacks;  // 24 hours of (1, rows, cols, 15)
  PatchIndexMap index;
  std::vector<std::array<float, 3>> geo;  // per coarse cell
  int coarse_cols = 0;
  std::string normalizer_digest;
};

struct TrainedCgan {
  CganConfig cfg;
  CganModel a;
  CganModel b;
  std::string normalizer_digest;
};

struct CganEnsembleOptions {
  int members = 10;  // K
  // Each CGAN member gets one MC-dropout draw; with cross_product every
  // member is paired with `dropout_draws` draws (K x M members).
  bool cross_product = false;
  int dropout_draws = 10;
  // Uses the original stack for every member instead of generating one.
  bool bypass_generators = false;
};

// Seed of MC-dropout draw `member` of (day, window). The CNN and CGAN
// ensembles share it, so bypassed generators reproduce the CNN ensemble.
std::uint64_t dropout_seed(std::uint64_t seed, Date day, int window, int member);

EnsembleForecast cgan_ensemble_predict(const TrainedCgan& cgan, const SevereModels& models, const DayInput& input,
                                       const CganEnsembleOptions& options, std::uint64_t seed);
EnsembleForecast cnn_ensemble_predict(const SevereModels& models, const DayInput& input, int members,
                                      std::uint64_t seed);
EnsembleForecast mlp_ensemble_predict(const SevereModels& models, const DayInput& input, int members,
                                      std::uint64_t seed);

// CSV columns day,window,cell_row,cell_col,method,member_idx,prob; one line
// per member. Probabilities use %.9g so float values round-trip exactly.
void write_forecast_csv(const std::filesystem::path& path, const EnsembleForecast& fc);
EnsembleForecast read_forecast_csv(const std::filesystem::path& path, int coarse_cols);

void save_forecast(ArrayStore& store, const std::string& prefix, const EnsembleForecast& fc);
EnsembleForecast load_forecast(const ArrayStore& store, const std::string& prefix);

}  // namespace severe
