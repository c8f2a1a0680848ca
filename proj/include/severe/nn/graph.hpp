#pragma once

#include <string>
#include <vector>

#include "severe/nn/tensor.hpp"

namespace severe::nn {

enum class LayerKind {
  conv2d,
  conv2d_stride2,
  transposed_conv2d_stride2,
  conv1d,
  dense,
  batch_norm,
  relu,
  sigmoid,
  dropout,
  global_max_pool_2d,
  global_max_pool_1d,
  concat,
};

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  int kernel_size = 3;
  int channels_out = 0;
  double dropout_rate = 0.0;
  // Dropout stays active in inference mode (Monte Carlo dropout).
  bool mc = false;
  // Convs and dense layers feeding batch norm can drop their redundant bias.
  bool bias = true;
};

// Convenience constructors.
LayerSpec conv(std::string name, int channels_out, int kernel = 3);
LayerSpec conv_down(std::string name, int channels_out);
LayerSpec conv_up(std::string name, int channels_out);
LayerSpec conv1d(std::string name, int channels_out, int kernel);
LayerSpec dense(std::string name, int units);
LayerSpec batch_norm(std::string name);
LayerSpec relu();
LayerSpec sigmoid();
LayerSpec dropout(std::string name, double rate, bool mc);
LayerSpec global_max_pool_2d();
LayerSpec global_max_pool_1d();
LayerSpec concat();
LayerSpec without_bias(LayerSpec spec);

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  int fan_in = 0;
  enum class Init { he_uniform, zeros, ones } init = Init::zeros;
  bool trainable = true;
};

// A directed acyclic network. Values are numbered in creation order: each
// add_input() or add() returns the id of the value it produces. Nodes are
// evaluated in insertion order, which is a topological order by construction.
class Graph {
 public:
  struct Node {
    LayerSpec spec;
    std::vector<int> inputs;
    int output = -1;
    // Resolved geometry.
    int channels_in = 0;
    int kh = 1;
    int kw = 1;
    int stride = 1;
  };

  int add_input(std::string name, int h, int w, int c);
  int add(LayerSpec spec, std::vector<int> inputs);
  int add(LayerSpec spec, int input) { return add(std::move(spec), std::vector<int>{input}); }
  void set_output(int value) { output_ = value; }

  int output() const { return output_; }
  int num_values() const { return static_cast<int>(value_shapes_.size()); }
  const std::vector<int>& inputs() const { return inputs_; }
  const std::vector<std::string>& input_names() const { return input_names_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  // Per-sample shape of a value (n = 1).
  const Shape& value_shape(int value) const { return value_shapes_.at(value); }
  Shape output_shape() const { return value_shape(output_); }

  std::vector<ParamSpec> param_specs() const;
  // Names of every parameter array, in a stable order; used as the manifest.
  std::vector<std::string> param_names() const;

 private:
  std::vector<Node> nodes_;
  std::vector<int> inputs_;
  std::vector<std::string> input_names_;
  std::vector<Shape> value_shapes_;
  std::vector<int> producer_;  // node index producing each value, -1 for inputs
  int output_ = -1;
};

}  // namespace severe::nn
