#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "severe/array_store.hpp"
#include "severe/nn/graph.hpp"
#include "severe/nn/params.hpp"
#include "severe/nn/tensor.hpp"
#include "severe/normalize.hpp"

namespace severe {

// Five explicit predictors condition both generators; group A generates
// CAPE/CIN/CREF, group B the seven remaining environment predictors.
enum class CganGroup { a, b };

const char* group_name(CganGroup g);
CganGroup parse_group(const std::string& s);

const std::array<PredictorId, 5>& conditional_predictors();
const std::vector<PredictorId>& group_predictors(CganGroup g);

struct UnetSpec {
  // Kernel count of each encoder level; every level ends in a stride-2 conv.
  std::vector<int> widths{32, 64, 128, 256};
  int bottleneck = 512;
};

struct DiscriminatorSpec {
  std::vector<int> widths{32, 64, 128, 256, 512};  // stride-2 conv stack
};

struct CganConfig {
  UnetSpec generator;
  DiscriminatorSpec discriminator;
  double lambda = 1.0;
  double noise_sigma = 0.5;
  double learning_rate = 1e-4;
  double decay = 0.99;
  int batch_size = 32;
  int epochs = 200;
  // Drops the adversarial term from the generator objective (pure L1).
  bool adversarial = true;
  // Generator minimizes -ln D(G) instead of ln(1 - D(G)).
  bool non_saturating = false;
  std::uint64_t seed = 0;
};

// Inputs are named "condition" (H, W, 5) and "state" (H, W, group size); the
// output has the group's channels. Spatial size must divide by 2^levels.
nn::Graph build_generator(const UnetSpec& spec, int group_channels, int height, int width);
// Inputs "candidate" (H, W, group size) and "condition" (H, W, 5); output (1,1,1).
nn::Graph build_discriminator(const DiscriminatorSpec& spec, int group_channels, int height, int width);

// z = x + N(0, sigma^2) per element with CAPE, CIN and CREF channels clamped
// at 0 from below. `x` holds the group's channels in group order.
nn::Tensor<float> make_initial_state(const nn::Tensor<float>& x, CganGroup group, double sigma, std::uint64_t seed);

// Channel selection from a 15-channel diagnostic stack (n, H, W, 15).
nn::Tensor<float> select_channels(const nn::Tensor<float>& stack, std::span<const PredictorId> ids);
nn::Tensor<float> condition_channels(const nn::Tensor<float>& stack);
nn::Tensor<float> group_channels(const nn::Tensor<float>& stack, CganGroup group);

struct CganLosses {
  double adversarial = 0.0;     // L_A = mean ln D(x|m) + mean ln(1 - D(G(z|m)|m))
  double reconstruction = 0.0;  // L_R = mean |x - G(z|m)|
};

// Group-specific networks and parameters; params are float, but the same
// graphs serve double-precision checks.
struct CganModel {
  CganGroup group = CganGroup::a;
  nn::Graph generator;
  nn::Graph discriminator;
  nn::ParamStore<float> g_params;
  nn::ParamStore<float> d_params;
};

CganModel make_cgan(const CganConfig& cfg, CganGroup group, int height = 64, int width = 64);

template <class T>
nn::Tensor<T> generator_forward(const nn::Graph& g, const nn::ParamStore<T>& params, const nn::Tensor<T>& z,
                                const nn::Tensor<T>& m, bool train_mode = false);
template <class T>
nn::Tensor<T> discriminator_forward(const nn::Graph& d, const nn::ParamStore<T>& params,
                                    const nn::Tensor<T>& candidate, const nn::Tensor<T>& m, bool train_mode = false);

// Losses on a batch of targets x and conditions m with z drawn from `seed`.
// Both networks run in training mode (batch statistics).
template <class T>
CganLosses cgan_losses(const nn::Graph& g, const nn::ParamStore<T>& g_params, const nn::Graph& d,
                       const nn::ParamStore<T>& d_params, const nn::Tensor<T>& x, const nn::Tensor<T>& m,
                       const nn::Tensor<T>& z);

// Generator objective L_A + lambda * L_R (or its variants per config) and its
// gradients with respect to the generator parameters, D frozen.
template <class T>
double generator_objective(const nn::Graph& g, const nn::ParamStore<T>& g_params, const nn::Graph& d,
                           const nn::ParamStore<T>& d_params, const nn::Tensor<T>& x, const nn::Tensor<T>& m,
                           const nn::Tensor<T>& z, const CganConfig& cfg, nn::Gradients<T>* grads);
// Discriminator objective -L_A and its gradients, G frozen.
template <class T>
double discriminator_objective(const nn::Graph& g, const nn::ParamStore<T>& g_params, const nn::Graph& d,
                               const nn::ParamStore<T>& d_params, const nn::Tensor<T>& x, const nn::Tensor<T>& m,
                               const nn::Tensor<T>& z, nn::Gradients<T>* grads);

struct CganStepResult {
  CganLosses before;  // losses seen by the discriminator step
  double d_objective = 0.0;
  double g_objective = 0.0;
};

// One discriminator Adam step on -L_A, then one generator Adam step with D
// frozen, sharing the batch and one z draw. Throws NonFiniteLoss.
CganStepResult train_cgan_step(CganModel& model, const nn::Tensor<float>& x, const nn::Tensor<float>& m,
                               const CganConfig& cfg, double learning_rate, std::uint64_t seed);

// Source of training batches: fills 15-channel stacks (n, 64, 64, 15) for
// sample indices.
using StackBatchFn = std::function<nn::Tensor<float>(std::span<const std::size_t> indices)>;

struct CganTrainLog {
  std::vector<double> adversarial;  // per epoch means
  std::vector<double> reconstruction;
};

CganTrainLog train_cgan(CganModel& model, const StackBatchFn& batch, std::size_t n_samples, const CganConfig& cfg);

// K members of a 15-channel stack (n, H, W, 15): group channels come from the
// generators with independent z per member and group, explicit channels are
// copied. The generators run in inference mode and are rebuilt for (H, W).
std::vector<nn::Tensor<float>> generate_members(const CganModel& a, const CganModel& b, const CganConfig& cfg,
                                                const nn::Tensor<float>& stack, int k, std::uint64_t seed);

// Checkpoint: both models under prefixes "cgan_a/" and "cgan_b/".
void save_cgan(ArrayStore& store, const CganConfig& cfg, const CganModel& a, const CganModel& b);
void load_cgan(const ArrayStore& store, const CganConfig& cfg, CganModel& a, CganModel& b);

}  // namespace severe
