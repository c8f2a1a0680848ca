#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "severe/error.hpp"

namespace severe::nn {

// Batch-major NHWC shape. Vectors are (n, 1, 1, c); lead-time sequences are
// (n, 1, steps, c).
struct Shape {
  int n = 0;
  int h = 1;
  int w = 1;
  int c = 0;

  std::size_t size() const { return static_cast<std::size_t>(n) * h * w * c; }
  std::size_t per_sample() const { return static_cast<std::size_t>(h) * w * c; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," +
           std::to_string(c) + ")";
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    require(data_.size() == shape_.size(), Errc::shape_mismatch,
            "tensor data size does not match shape " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int y, int x, int c) const {
    return ((static_cast<std::size_t>(n) * shape_.h + y) * shape_.w + x) * shape_.c + c;
  }
  T& at(int n, int y, int x, int c) { return data_[index(n, y, x, c)]; }
  const T& at(int n, int y, int x, int c) const { return data_[index(n, y, x, c)]; }

  T* sample(int n) { return data_.data() + static_cast<std::size_t>(n) * shape_.per_sample(); }
  const T* sample(int n) const { return data_.data() + static_cast<std::size_t>(n) * shape_.per_sample(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

}  // namespace severe::nn
