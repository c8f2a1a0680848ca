#include "severe/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "severe/rng.hpp"

namespace severe::nn {

GradCheckResult grad_check(ParamStore<double>& params, const Objective& objective, double eps, int n_coords,
                           std::uint64_t seed, double floor) {
  const ObjectiveValue base = objective(params, true);
  struct Coord {
    std::string name;
    std::size_t index;
  };
  std::vector<std::string> names;
  std::size_t total = 0;
  for (const auto& [name, g] : base.grads.params) {
    names.push_back(name);
    total += g.size();
  }
  require(total > 0, Errc::empty_input, "objective has no trainable parameters");

  Rng rng(seed);
  auto random_coord = [&]() {
    std::size_t k = rng.below(total);
    for (const auto& name : names) {
      const auto n = base.grads.params.at(name).size();
      if (k < n) return Coord{name, k};
      k -= n;
    }
    return Coord{names.back(), 0};
  };

  std::vector<Coord> queue;
  for (const auto& name : names) queue.push_back({name, rng.below(base.grads.params.at(name).size())});
  while (static_cast<int>(queue.size()) < n_coords) queue.push_back(random_coord());

  GradCheckResult result;
  const int max_skips = 20 * n_coords;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const auto& c = queue[q];
    double& theta = params.value(c.name)[c.index];
    const double saved = theta;
    theta = saved + eps;
    const ObjectiveValue up = objective(params, false);
    theta = saved - eps;
    const ObjectiveValue down = objective(params, false);
    theta = saved;
    if (up.signature != base.signature || down.signature != base.signature) {
      ++result.skipped;
      require(result.skipped <= max_skips, Errc::empty_input, "gradient check could not avoid kinks");
      queue.push_back(random_coord());
      continue;
    }
    const double numeric = (up.loss - down.loss) / (2.0 * eps);
    const double analytic = base.grads.params.at(c.name)[c.index];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic - numeric) / denom);
    ++result.checked;
  }
  return result;
}

GradCheckResult grad_check(const Graph& graph, ParamStore<double>& params, std::span<const Tensor<double>> inputs,
                           const LossFn& loss_fn, double eps, int n_coords, std::uint64_t seed, Mode mode) {
  std::vector<Tensor<double>> held(inputs.begin(), inputs.end());
  Objective objective = [&](const ParamStore<double>& p, bool with_grads) {
    auto fwd = forward<double>(graph, p, held, mode, seed);
    auto loss = loss_fn(fwd.output);
    ObjectiveValue v;
    v.loss = loss.loss;
    v.signature = kink_signature(graph, fwd.cache);
    if (with_grads) v.grads = backward(graph, p, fwd.cache, loss.grad);
    return v;
  };
  return grad_check(params, objective, eps, n_coords, seed);
}

}  // namespace severe::nn
