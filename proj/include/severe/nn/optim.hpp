#pragma once

#include <cmath>
#include <cstdint>

#include "severe/nn/params.hpp"

namespace severe::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update for every parameter that has a gradient.
template <class T>
void adam_step(ParamStore<T>& params, const Gradients<T>& grads, const AdamConfig& cfg) {
  for (const auto& [name, g] : grads.params) {
    auto& e = params.entry(name);
    if (!e.trainable) continue;
    require(g.size() == e.value.size(), Errc::shape_mismatch, "gradient for '" + name + "' has the wrong size");
    if (e.m.size() != e.value.size()) {
      e.m.assign(e.value.size(), T(0));
      e.v.assign(e.value.size(), T(0));
    }
    ++e.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(e.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(e.step));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      const double m = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * gi;
      const double v = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * gi * gi;
      e.m[i] = static_cast<T>(m);
      e.v[i] = static_cast<T>(v);
      e.value[i] -= static_cast<T>(cfg.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.epsilon));
    }
  }
}

// Learning rate 1e-4 decayed by `decay` after every epoch; early stopping
// restores the weights of the best validation epoch.
struct TrainConfig {
  double learning_rate = 1e-4;
  double decay = 0.99;
  int batch_size = 32;
  int max_epochs = 100;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;
};

}  // namespace severe::nn
