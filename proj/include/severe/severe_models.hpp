#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "severe/array_store.hpp"
#include "severe/nn/graph.hpp"
#include "severe/nn/params.hpp"
#include "severe/nn/tensor.hpp"
#include "severe/nn/train.hpp"

namespace severe {

// Feature hours of the window starting at `start`: {start-2, ..., start+1}
// clipped to the day, so starts 0 and 1 see 2 and 3 hours and start 23 sees 3.
std::vector<int> window_feature_hours(int start);

struct EncoderSpec {
  // Each level: two same-padding 3x3 convs and one stride-2 conv, all ReLU.
  std::vector<int> widths{48, 64, 96, 128};
  int channels = 15;
  int patch = 64;

  int feature_size() const { return widths.back(); }
};

struct ClassifierSpec {
  int conv_kernels = 128;
  int kernel_length = 2;  // over the lead-time axis, same padding
  int hidden = 64;
  double dropout = 0.1;
};

struct MlpSpec {
  int hidden1 = 128;
  int hidden2 = 64;
  double dropout = 0.1;
};

// Input "patch" (64, 64, C) -> (1, 1, feature_size) after global max pooling.
nn::Graph build_encoder(const EncoderSpec& spec);
// The encoder followed by the auxiliary dense + sigmoid head "enc_aux".
nn::Graph build_encoder_pretrainer(const EncoderSpec& spec);
// Inputs "features" (1, arity, F) and "geo" (1, 1, 3); output (1, 1, 1).
// Parameter names do not depend on arity, so one store serves every window.
nn::Graph build_classifier(const ClassifierSpec& spec, int feature_size, int arity);
// Input "features" (1, 1, n_features); output (1, 1, 1).
nn::Graph build_mlp(const MlpSpec& spec, int n_features);

struct EncoderModel {
  EncoderSpec spec;
  nn::ParamStore<float> params;  // encoder parameters only
};

struct ClassifierModel {
  ClassifierSpec spec;
  int feature_size = 128;
  nn::ParamStore<float> params;
};

struct MlpModel {
  MlpSpec spec;
  int n_features = kMlpFeatures;
  nn::ParamStore<float> params;

  static constexpr int kMlpFeatures = 63;
};

EncoderModel make_encoder(const EncoderSpec& spec, std::uint64_t seed);
ClassifierModel make_classifier(const ClassifierSpec& spec, int feature_size, std::uint64_t seed);
MlpModel make_mlp(const MlpSpec& spec, std::uint64_t seed);

// Feature vectors (n, 1, 1, F) of patches (n, 64, 64, C); deterministic.
nn::Tensor<float> encode_patches(const EncoderModel& enc, const nn::Tensor<float>& patches);
std::vector<float> encode_patch(const EncoderModel& enc, const nn::Tensor<float>& patch);

struct PretrainResult {
  EncoderModel encoder;
  nn::BinaryFitResult fit;
};

// Trains encoder + auxiliary head on (patch, window label) pairs with
// undersampled epochs; the head is dropped afterwards. Batches return one
// tensor (n, 64, 64, C).
PretrainResult pretrain_encoder(const EncoderSpec& spec, const nn::BatchFn& train_batch,
                                std::span<const std::uint8_t> train_labels, const nn::BatchFn& val_batch,
                                std::span<const std::uint8_t> val_labels, const nn::TrainConfig& cfg,
                                double negatives_per_positive = 10.0);

// Probabilities for feature sequences (n, 1, arity, F) and geography
// (n, 1, 1, 3). MC dropout stays active; masks derive from mc_seed.
std::vector<float> classify(const ClassifierModel& cls, const nn::Tensor<float>& features,
                            const nn::Tensor<float>& geo, std::uint64_t mc_seed);

struct ClassifierFit {
  ClassifierModel model;
  nn::BinaryFitResult fit;
};

// Trains the classifier of one window on frozen features. Batches return
// {features (n, 1, arity, F), geo (n, 1, 1, 3)}.
ClassifierFit train_classifier(const ClassifierSpec& spec, int feature_size, int arity, const nn::BatchFn& train_batch,
                               std::span<const std::uint8_t> train_labels, const nn::BatchFn& val_batch,
                               std::span<const std::uint8_t> val_labels, const nn::TrainConfig& cfg,
                               double negatives_per_positive = 1.0);

// Spatial mean then spatial max of each channel of one patch (64, 64, C)
// stored at `patch`: 2 * C values ordered [means..., maxes...].
std::vector<float> patch_summary(const float* patch, int channels, int pixels);

// MLP features of a window from its per-hour patch summaries: for channel p,
// entries 4p..4p+3 are (time mean of spatial mean, time max of spatial mean,
// time mean of spatial max, time max of spatial max); the 3 geographic
// scalars follow.
std::vector<float> mlp_features_from_summaries(std::span<const std::vector<float>> summaries,
                                               const std::array<float, 3>& geo);
// Same from the patches (arity, 64, 64, 15) directly.
std::vector<float> mlp_features(const nn::Tensor<float>& patches, const std::array<float, 3>& geo);
// Names of the MLP features in order, e.g. "CAPE/space_mean/time_max".
std::vector<std::string> mlp_feature_names();

std::vector<float> mlp_forward(const MlpModel& mlp, const nn::Tensor<float>& features, std::uint64_t mc_seed);

struct MlpFit {
  MlpModel model;
  nn::BinaryFitResult fit;
};

// Batches return one tensor (n, 1, 1, 63).
MlpFit train_mlp(const MlpSpec& spec, const nn::BatchFn& train_batch, std::span<const std::uint8_t> train_labels,
                 const nn::BatchFn& val_batch, std::span<const std::uint8_t> val_labels, const nn::TrainConfig& cfg,
                 double negatives_per_positive = 1.0);

// The trained prediction models and the normalizer digest they assume.
struct SevereModels {
  EncoderModel encoder;
  std::vector<ClassifierModel> classifiers;  // one per window start
  MlpModel mlp;
  std::string normalizer_digest;
};

void save_models(ArrayStore& store, const SevereModels& models);
// Throws CheckpointMismatch if the stored architecture differs from the
// given specs.
SevereModels load_models(const ArrayStore& store, const EncoderSpec& enc, const ClassifierSpec& cls,
                         const MlpSpec& mlp);

void save_encoder(ArrayStore& store, const EncoderModel& enc);
EncoderModel load_encoder(const ArrayStore& store, const EncoderSpec& spec);
// One window's classifier under "classifier/{window}/"; all windows of a store
// share one architecture.
void save_classifier(ArrayStore& store, int window, const ClassifierModel& cls);
ClassifierModel load_classifier(const ArrayStore& store, int window, const ClassifierSpec& spec, int feature_size);
void save_classifiers(ArrayStore& store, const std::vector<ClassifierModel>& classifiers);
std::vector<ClassifierModel> load_classifiers(const ArrayStore& store, const ClassifierSpec& spec, int feature_size);
void save_mlp(ArrayStore& store, const MlpModel& mlp);
MlpModel load_mlp(const ArrayStore& store, const MlpSpec& spec);

}  // namespace severe
