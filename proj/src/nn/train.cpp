#include "severe/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "severe/log.hpp"
#include "severe/nn/losses.hpp"

namespace severe::nn {

std::vector<std::size_t> rebalanced_epoch(std::span<const std::uint8_t> labels, double negatives_per_positive,
                                          Rng& rng) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  const auto want = static_cast<std::size_t>(std::llround(negatives_per_positive * static_cast<double>(pos.size())));
  const std::size_t take = std::min(want, neg.size());
  // Partial Fisher-Yates picks `take` negatives without replacement.
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.below(neg.size() - i);
    std::swap(neg[i], neg[j]);
  }
  std::vector<std::size_t> out = pos;
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(take));
  rng.shuffle(out.begin(), out.end());
  return out;
}

double negative_keep_fraction(std::span<const std::uint8_t> labels, double negatives_per_positive) {
  const auto pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; }));
  const std::size_t neg = labels.size() - pos;
  if (neg == 0) return 1.0;
  const auto want = static_cast<std::size_t>(std::llround(negatives_per_positive * static_cast<double>(pos)));
  return static_cast<double>(std::min(want, neg)) / static_cast<double>(neg);
}

double evaluate_bce(const Graph& graph, const ParamStore<float>& params, const BatchFn& batch,
                    std::span<const std::uint8_t> labels, std::uint64_t seed, int chunk) {
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < labels.size(); start += chunk) {
    const std::size_t end = std::min(labels.size(), start + static_cast<std::size_t>(chunk));
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto inputs = batch(idx);
    const auto out = forward<float>(graph, params, inputs, Mode::infer, derive_seed(seed, {start}));
    std::vector<float> y(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) y[i] = labels[idx[i]];
    total += binary_cross_entropy<float>(out.output, y).loss * static_cast<double>(idx.size());
  }
  return labels.empty() ? 0.0 : total / static_cast<double>(labels.size());
}

BinaryFitResult fit_binary(const Graph& graph, ParamStore<float> params, const BatchFn& train_batch,
                           std::span<const std::uint8_t> train_labels, const BatchFn& val_batch,
                           std::span<const std::uint8_t> val_labels, const BinaryFitOptions& options) {
  const auto& cfg = options.train;
  require(std::any_of(train_labels.begin(), train_labels.end(), [](auto v) { return v != 0; }),
          Errc::no_positive_samples, options.label + " training set has no positive samples");
  require(cfg.batch_size >= 1 && cfg.learning_rate > 0.0, Errc::config_error, "invalid training config");

  BinaryFitResult result;
  if (!options.output_bias.empty())
    result.prior_shift = std::log(negative_keep_fraction(train_labels, options.negatives_per_positive));

  auto shifted = [&](const ParamStore<float>& p) {
    ParamStore<float> q = p;
    if (!options.output_bias.empty())
      for (auto& b : q.value(options.output_bias)) b += static_cast<float>(result.prior_shift);
    return q;
  };
  const std::uint64_t val_seed = derive_seed(cfg.seed, {0x7a1u});
  auto validate = [&](const ParamStore<float>& p) {
    return val_labels.empty() ? 0.0 : evaluate_bce(graph, shifted(p), val_batch, val_labels, val_seed);
  };

  ParamStore<float> best = params;
  double best_loss = validate(params);
  result.val_loss.push_back(best_loss);
  int since_best = 0;
  Rng rng(derive_seed(cfg.seed, {0xe90cu}));

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    AdamConfig adam;
    adam.learning_rate = cfg.learning_rate * std::pow(cfg.decay, epoch - 1);
    const auto order = rebalanced_epoch(train_labels, options.negatives_per_positive, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const auto inputs = train_batch(idx);
      auto fwd = forward<float>(graph, params, inputs, Mode::train, derive_seed(cfg.seed, {0xf0u, static_cast<std::uint64_t>(epoch), start}));
      std::vector<float> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) y[i] = train_labels[idx[i]];
      const auto loss = binary_cross_entropy<float>(fwd.output, y);
      require(std::isfinite(loss.loss), Errc::non_finite_loss,
              options.label + " loss became non-finite at epoch " + std::to_string(epoch));
      epoch_loss += loss.loss * static_cast<double>(idx.size());
      const auto grads = backward(graph, params, fwd.cache, loss.grad, false);
      adam_step(params, grads, adam);
      update_running_stats(graph, params, fwd.cache);
    }
    result.train_loss.push_back(order.empty() ? 0.0 : epoch_loss / static_cast<double>(order.size()));
    const double v = validate(params);
    result.val_loss.push_back(v);
    log_info(options.label, " epoch ", epoch, " train ", result.train_loss.back(), " val ", v);
    if (v < best_loss) {
      best_loss = v;
      best = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  result.params = shifted(best);
  return result;
}

}  // namespace severe::nn
