#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "severe/nn/network.hpp"
#include "severe/nn/optim.hpp"
#include "severe/rng.hpp"

namespace severe::nn {

// One epoch of negative undersampling: every positive plus at most
// round(ratio * positives) negatives drawn without replacement, shuffled.
std::vector<std::size_t> rebalanced_epoch(std::span<const std::uint8_t> labels, double negatives_per_positive,
                                          Rng& rng);

// Fraction of negatives an epoch keeps under the given ratio.
double negative_keep_fraction(std::span<const std::uint8_t> labels, double negatives_per_positive);

using BatchFn = std::function<std::vector<Tensor<float>>(std::span<const std::size_t> indices)>;

struct BinaryFitOptions {
  TrainConfig train;
  double negatives_per_positive = 1.0;
  // Bias of the final dense layer; after training it is shifted by ln(keep
  // fraction) so probabilities refer to the original class balance. Empty
  // disables the correction.
  std::string output_bias;
  std::string label = "model";
};

struct BinaryFitResult {
  ParamStore<float> params;
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // index 0 is the untrained network
  int best_epoch = 0;            // 0 means the initial weights were kept
  double prior_shift = 0.0;
};

// Mini-batch Adam on binary cross-entropy with per-epoch learning-rate decay,
// undersampled epochs and early stopping on validation loss (the best
// weights are restored).
BinaryFitResult fit_binary(const Graph& graph, ParamStore<float> params, const BatchFn& train_batch,
                           std::span<const std::uint8_t> train_labels, const BatchFn& val_batch,
                           std::span<const std::uint8_t> val_labels, const BinaryFitOptions& options);

// Mean BCE of the network over a dataset in inference mode with a fixed seed.
double evaluate_bce(const Graph& graph, const ParamStore<float>& params, const BatchFn& batch,
                    std::span<const std::uint8_t> labels, std::uint64_t seed, int chunk = 256);

}  // namespace severe::nn
