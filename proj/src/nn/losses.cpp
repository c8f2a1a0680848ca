#include "severe/nn/losses.hpp"

#include <algorithm>
#include <cmath>

namespace severe::nn {

template <class T>
LossResult<T> binary_cross_entropy(const Tensor<T>& p, std::span<const T> targets) {
  require(p.size() == targets.size(), Errc::shape_mismatch, "BCE prediction/target size mismatch");
  require(p.size() > 0, Errc::shape_mismatch, "BCE on empty batch");
  LossResult<T> r;
  r.grad = Tensor<T>(p.shape());
  const double inv_n = 1.0 / static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(static_cast<double>(p[i]), kProbClamp, 1.0 - kProbClamp);
    const double y = targets[i];
    total -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
    r.grad[i] = static_cast<T>(-(y / pc - (1.0 - y) / (1.0 - pc)) * inv_n);
  }
  r.loss = total * inv_n;
  return r;
}

template <class T>
LossResult<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), Errc::shape_mismatch,
          "L1 operands differ: " + a.shape().str() + " vs " + b.shape().str());
  require(a.size() > 0, Errc::shape_mismatch, "L1 on empty tensors");
  LossResult<T> r;
  r.grad = Tensor<T>(a.shape());
  const double inv_n = 1.0 / static_cast<double>(a.size());
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    total += std::abs(d);
    r.grad[i] = static_cast<T>(d > 0 ? inv_n : (d < 0 ? -inv_n : 0.0));
  }
  r.loss = total * inv_n;
  return r;
}

template LossResult<float> binary_cross_entropy<float>(const Tensor<float>&, std::span<const float>);
template LossResult<double> binary_cross_entropy<double>(const Tensor<double>&, std::span<const double>);
template LossResult<float> l1_loss<float>(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> l1_loss<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace severe::nn
