#include "severe/nn/graph.hpp"

#include <algorithm>

namespace severe::nn {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv2d_stride2: return "conv2d_stride2";
    case LayerKind::transposed_conv2d_stride2: return "transposed_conv2d_stride2";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::dense: return "dense";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::dropout: return "dropout";
    case LayerKind::global_max_pool_2d: return "global_max_pool_2d";
    case LayerKind::global_max_pool_1d: return "global_max_pool_1d";
    case LayerKind::concat: return "concat";
  }
  return "?";
}

LayerSpec conv(std::string name, int channels_out, int kernel) {
  return {LayerKind::conv2d, std::move(name), kernel, channels_out};
}
LayerSpec conv_down(std::string name, int channels_out) {
  return {LayerKind::conv2d_stride2, std::move(name), 3, channels_out};
}
LayerSpec conv_up(std::string name, int channels_out) {
  return {LayerKind::transposed_conv2d_stride2, std::move(name), 3, channels_out};
}
LayerSpec conv1d(std::string name, int channels_out, int kernel) {
  return {LayerKind::conv1d, std::move(name), kernel, channels_out};
}
LayerSpec dense(std::string name, int units) { return {LayerKind::dense, std::move(name), 1, units}; }
LayerSpec batch_norm(std::string name) { return {LayerKind::batch_norm, std::move(name)}; }
LayerSpec relu() { return {LayerKind::relu, ""}; }
LayerSpec sigmoid() { return {LayerKind::sigmoid, ""}; }
LayerSpec dropout(std::string name, double rate, bool mc) {
  LayerSpec s{LayerKind::dropout, std::move(name)};
  s.dropout_rate = rate;
  s.mc = mc;
  return s;
}
LayerSpec global_max_pool_2d() { return {LayerKind::global_max_pool_2d, ""}; }
LayerSpec global_max_pool_1d() { return {LayerKind::global_max_pool_1d, ""}; }
LayerSpec concat() { return {LayerKind::concat, ""}; }

LayerSpec without_bias(LayerSpec spec) {
  spec.bias = false;
  return spec;
}

int Graph::add_input(std::string name, int h, int w, int c) {
  require(h > 0 && w > 0 && c > 0, Errc::shape_mismatch, "input dims must be positive");
  const int id = num_values();
  value_shapes_.push_back({1, h, w, c});
  producer_.push_back(-1);
  inputs_.push_back(id);
  input_names_.push_back(std::move(name));
  return id;
}

int Graph::add(LayerSpec spec, std::vector<int> inputs) {
  const auto kind = spec.kind;
  const std::string what = std::string(layer_kind_name(kind)) + " '" + spec.name + "'";
  require(!inputs.empty(), Errc::shape_mismatch, what + " has no inputs");
  for (int v : inputs) require(v >= 0 && v < num_values(), Errc::shape_mismatch, what + " reads unknown value");
  if (kind != LayerKind::concat)
    require(inputs.size() == 1, Errc::shape_mismatch, what + " takes exactly one input");

  Node node;
  node.inputs = inputs;
  const Shape in = value_shapes_[inputs[0]];
  node.channels_in = in.c;
  Shape out = in;

  switch (kind) {
    case LayerKind::conv2d:
      require(spec.kernel_size >= 1 && spec.kernel_size % 2 == 1, Errc::shape_mismatch,
              what + " needs an odd kernel for same padding");
      require(spec.channels_out > 0, Errc::shape_mismatch, what + " needs channels_out");
      node.kh = node.kw = spec.kernel_size;
      out.c = spec.channels_out;
      break;
    case LayerKind::conv2d_stride2:
      require(spec.kernel_size >= 1 && spec.kernel_size % 2 == 1, Errc::shape_mismatch, what + " needs an odd kernel");
      require(spec.channels_out > 0, Errc::shape_mismatch, what + " needs channels_out");
      node.kh = node.kw = spec.kernel_size;
      node.stride = 2;
      out.h = (in.h + 1) / 2;
      out.w = (in.w + 1) / 2;
      out.c = spec.channels_out;
      break;
    case LayerKind::transposed_conv2d_stride2:
      require(spec.kernel_size == 3, Errc::shape_mismatch, what + " supports kernel 3 only");
      require(spec.channels_out > 0, Errc::shape_mismatch, what + " needs channels_out");
      node.kh = node.kw = 3;
      node.stride = 2;
      out.h = in.h * 2;
      out.w = in.w * 2;
      out.c = spec.channels_out;
      break;
    case LayerKind::conv1d:
      require(in.h == 1, Errc::shape_mismatch, what + " expects (1, steps, c) input");
      require(spec.kernel_size >= 1 && spec.channels_out > 0, Errc::shape_mismatch, what + " bad geometry");
      node.kh = 1;
      node.kw = spec.kernel_size;
      out.c = spec.channels_out;
      break;
    case LayerKind::dense:
      require(spec.channels_out > 0, Errc::shape_mismatch, what + " needs units");
      node.channels_in = static_cast<int>(in.per_sample());
      out = {1, 1, 1, spec.channels_out};
      break;
    case LayerKind::dropout:
      require(spec.dropout_rate >= 0.0 && spec.dropout_rate < 1.0, Errc::shape_mismatch,
              what + " rate must be in [0, 1)");
      break;
    case LayerKind::batch_norm:
    case LayerKind::relu:
    case LayerKind::sigmoid:
      break;
    case LayerKind::global_max_pool_2d:
      out = {1, 1, 1, in.c};
      break;
    case LayerKind::global_max_pool_1d:
      require(in.h == 1, Errc::shape_mismatch, what + " expects (1, steps, c) input");
      out = {1, 1, 1, in.c};
      break;
    case LayerKind::concat: {
      int c = 0;
      for (int v : inputs) {
        const Shape& s = value_shapes_[v];
        require(s.h == in.h && s.w == in.w, Errc::shape_mismatch,
                what + " inputs differ in spatial shape: " + s.str() + " vs " + in.str());
        c += s.c;
      }
      out.c = c;
      break;
    }
  }
  const bool has_params = kind == LayerKind::conv2d || kind == LayerKind::conv2d_stride2 ||
                          kind == LayerKind::transposed_conv2d_stride2 || kind == LayerKind::conv1d ||
                          kind == LayerKind::dense || kind == LayerKind::batch_norm;
  if (has_params) {
    require(!spec.name.empty(), Errc::shape_mismatch, what + " needs a parameter name");
    for (const auto& n : nodes_)
      require(n.spec.name != spec.name, Errc::shape_mismatch, "duplicate layer name '" + spec.name + "'");
  }

  node.spec = std::move(spec);
  const int id = num_values();
  node.output = id;
  value_shapes_.push_back(out);
  producer_.push_back(static_cast<int>(nodes_.size()));
  nodes_.push_back(std::move(node));
  output_ = id;
  return id;
}

std::vector<ParamSpec> Graph::param_specs() const {
  std::vector<ParamSpec> out;
  using Init = ParamSpec::Init;
  for (const auto& n : nodes_) {
    const auto& s = n.spec;
    const int cout = s.channels_out;
    switch (s.kind) {
      case LayerKind::conv2d:
      case LayerKind::conv2d_stride2:
      case LayerKind::conv1d: {
        const int fan_in = n.kh * n.kw * n.channels_in;
        out.push_back({s.name + "/w", {fan_in, cout}, fan_in, Init::he_uniform, true});
        if (s.bias) out.push_back({s.name + "/b", {cout}, fan_in, Init::zeros, true});
        break;
      }
      case LayerKind::transposed_conv2d_stride2: {
        // Each output pixel of a stride-2, 3x3 transposed conv sees 9/4 taps
        // per input channel on average.
        const int fan_in = std::max(1, n.channels_in * 9 / 4);
        out.push_back({s.name + "/w", {n.channels_in, 9 * cout}, fan_in, Init::he_uniform, true});
        if (s.bias) out.push_back({s.name + "/b", {cout}, fan_in, Init::zeros, true});
        break;
      }
      case LayerKind::dense:
        out.push_back({s.name + "/w", {n.channels_in, cout}, n.channels_in, Init::he_uniform, true});
        if (s.bias) out.push_back({s.name + "/b", {cout}, n.channels_in, Init::zeros, true});
        break;
      case LayerKind::batch_norm: {
        const int c = n.channels_in;
        out.push_back({s.name + "/gamma", {c}, c, Init::ones, true});
        out.push_back({s.name + "/beta", {c}, c, Init::zeros, true});
        out.push_back({s.name + "/running_mean", {c}, c, Init::zeros, false});
        out.push_back({s.name + "/running_var", {c}, c, Init::ones, false});
        break;
      }
      default:
        break;
    }
  }
  return out;
}

std::vector<std::string> Graph::param_names() const {
  std::vector<std::string> names;
  for (const auto& p : param_specs()) names.push_back(p.name);
  return names;
}

}  // namespace severe::nn
