#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "severe/nn/graph.hpp"
#include "severe/nn/params.hpp"

namespace severe::nn {

enum class Mode { train, infer };

constexpr double kBatchNormEps = 1e-6;

// Per-node data kept from the forward pass for backward.
template <class T>
struct NodeCache {
  std::vector<T> mask;            // dropout scale per element (0 or 1/(1-p))
  std::vector<std::int32_t> arg;  // max-pool source index per output element
  std::vector<T> mean;            // batch-norm statistics used
  std::vector<T> inv_std;
  std::vector<T> batch_var;       // biased batch variance (train mode)
  bool used_batch_stats = false;
};

template <class T>
struct Activations {
  std::vector<Tensor<T>> values;
  std::vector<NodeCache<T>> nodes;
  Mode mode = Mode::infer;
  std::uint64_t seed = 0;
};

template <class T>
struct ForwardResult {
  Tensor<T> output;
  Activations<T> cache;
};

// Evaluates the graph. In train mode batch norm uses batch statistics and all
// dropout layers are active; in infer mode batch norm uses running statistics
// and only dropout layers flagged mc stay active. Dropout masks derive from
// (seed, node index), so identical arguments give bit-identical outputs.
template <class T>
ForwardResult<T> forward(const Graph& graph, const ParamStore<T>& params, std::span<const Tensor<T>> inputs,
                         Mode mode, std::uint64_t seed);

template <class T>
ForwardResult<T> forward(const Graph& graph, const ParamStore<T>& params, const Tensor<T>& input, Mode mode,
                         std::uint64_t seed) {
  return forward<T>(graph, params, std::span<const Tensor<T>>(&input, 1), mode, seed);
}

// With input_grads false, gradients with respect to the network inputs are
// neither computed nor returned.
template <class T>
Gradients<T> backward(const Graph& graph, const ParamStore<T>& params, const Activations<T>& cache,
                      const Tensor<T>& upstream, bool input_grads = true);

// Folds the batch statistics seen in a train-mode forward pass into the
// running estimates: running = momentum * running + (1 - momentum) * batch.
template <class T>
void update_running_stats(const Graph& graph, ParamStore<T>& params, const Activations<T>& cache,
                          double momentum = 0.9);

// Hash over ReLU activity patterns and max-pool winners; equal signatures
// mean two evaluations sit on the same linear piece of the network.
template <class T>
std::uint64_t kink_signature(const Graph& graph, const Activations<T>& cache);

}  // namespace severe::nn
