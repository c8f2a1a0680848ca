#include "severe/nn/network.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <malloc.h>

#include "severe/rng.hpp"

namespace severe::nn {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;
template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

struct ConvGeom {
  int n, h_in, w_in, c, h_out, w_out, kh, kw, stride, pad_h, pad_w;
  std::size_t rows() const { return static_cast<std::size_t>(n) * h_out * w_out; }
  std::size_t cols() const { return static_cast<std::size_t>(kh) * kw * c; }
};

// Patch matrix rows [r0, r1): one row per output pixel, (ky, kx, c) columns.
template <class T>
void im2col(const T* src, const ConvGeom& g, std::size_t r0, std::size_t r1, T* cols) {
  const std::size_t kcols = g.cols();
  const std::size_t cbytes = sizeof(T) * g.c;
  const std::size_t plane = static_cast<std::size_t>(g.h_out) * g.w_out;
  for (std::size_t r = r0; r < r1; ++r) {
    const int n = static_cast<int>(r / plane);
    const int oy = static_cast<int>((r % plane) / g.w_out);
    const int ox = static_cast<int>(r % g.w_out);
    T* row = cols + (r - r0) * kcols;
    const int ix0 = ox * g.stride - g.pad_w;
    const bool x_inside = ix0 >= 0 && ix0 + g.kw <= g.w_in;
    for (int ky = 0; ky < g.kh; ++ky) {
      const int iy = oy * g.stride - g.pad_h + ky;
      T* dst = row + static_cast<std::size_t>(ky) * g.kw * g.c;
      if (iy < 0 || iy >= g.h_in) {
        std::memset(dst, 0, cbytes * g.kw);
        continue;
      }
      const T* line = src + (static_cast<std::size_t>(n) * g.h_in + iy) * g.w_in * g.c;
      if (x_inside) {
        // The horizontal taps are contiguous in the source row.
        std::memcpy(dst, line + static_cast<std::size_t>(ix0) * g.c, cbytes * g.kw);
        continue;
      }
      for (int kx = 0; kx < g.kw; ++kx) {
        const int ix = ix0 + kx;
        if (ix < 0 || ix >= g.w_in)
          std::memset(dst + kx * g.c, 0, cbytes);
        else
          std::memcpy(dst + kx * g.c, line + static_cast<std::size_t>(ix) * g.c, cbytes);
      }
    }
  }
}

// Adjoint of im2col: scatter-adds patch rows [r0, r1) back into dst.
template <class T>
void col2im(const T* cols, const ConvGeom& g, std::size_t r0, std::size_t r1, T* dst) {
  const std::size_t kcols = g.cols();
  const std::size_t plane = static_cast<std::size_t>(g.h_out) * g.w_out;
  for (std::size_t r = r0; r < r1; ++r) {
    const int n = static_cast<int>(r / plane);
    const int oy = static_cast<int>((r % plane) / g.w_out);
    const int ox = static_cast<int>(r % g.w_out);
    const T* row = cols + (r - r0) * kcols;
    const int ix0 = ox * g.stride - g.pad_w;
    const int kx0 = std::max(0, -ix0), kx1 = std::min(g.kw, g.w_in - ix0);
    const std::size_t run = static_cast<std::size_t>(kx1 - kx0) * g.c;
    for (int ky = 0; ky < g.kh; ++ky) {
      const int iy = oy * g.stride - g.pad_h + ky;
      if (iy < 0 || iy >= g.h_in || kx1 <= kx0) continue;
      const T* s = row + (static_cast<std::size_t>(ky) * g.kw + kx0) * g.c;
      T* d = dst + ((static_cast<std::size_t>(n) * g.h_in + iy) * g.w_in + ix0 + kx0) * g.c;
      for (std::size_t i = 0; i < run; ++i) d[i] += s[i];
    }
  }
}

// Rows per im2col block, sized so a block stays cache resident.
std::size_t block_rows(std::size_t cols) { return std::max<std::size_t>(16, (std::size_t{1} << 16) / cols); }

// Geometry of an ordinary (possibly strided) convolution node.
ConvGeom conv_geom(const Graph::Node& node, const Shape& in, const Shape& out) {
  return {in.n, in.h, in.w, in.c, out.h, out.w, node.kh, node.kw, node.stride, (node.kh - 1) / 2, (node.kw - 1) / 2};
}

// A stride-2 transposed conv is the adjoint of the stride-2 conv mapping its
// output grid (2h, 2w) back to its input grid (h, w).
ConvGeom tconv_geom(const Graph::Node& node, const Shape& in, const Shape& out) {
  return {in.n, out.h, out.w, out.c, in.h, in.w, node.kh, node.kw, 2, 1, 1};
}

// Activations are large and short-lived; keep freed blocks in the heap rather
// than returning them to the OS so every layer does not page-fault afresh.
[[maybe_unused]] const bool kHeapTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();

bool dropout_active(const LayerSpec& s, Mode mode) {
  return s.dropout_rate > 0.0 && (mode == Mode::train || s.mc);
}

template <class T>
void add_bias(T* y, std::size_t rows, int cout, const T* b) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = y + r * cout;
    for (int c = 0; c < cout; ++c) row[c] += b[c];
  }
}

template <class T>
void bias_grad(const T* dy, std::size_t rows, int cout, std::vector<T>& db) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = dy + r * cout;
    for (int c = 0; c < cout; ++c) db[c] += row[c];
  }
}

}  // namespace

template <class T>
ForwardResult<T> forward(const Graph& graph, const ParamStore<T>& params, std::span<const Tensor<T>> inputs,
                         Mode mode, std::uint64_t seed) {
  const auto& in_ids = graph.inputs();
  require(inputs.size() == in_ids.size(), Errc::shape_mismatch,
          "network expects " + std::to_string(in_ids.size()) + " inputs, got " + std::to_string(inputs.size()));
  const int batch = inputs.empty() ? 0 : inputs[0].shape().n;
  require(batch > 0, Errc::shape_mismatch, "empty batch");

  ForwardResult<T> result;
  auto& cache = result.cache;
  cache.mode = mode;
  cache.seed = seed;
  cache.values.resize(graph.num_values());
  cache.nodes.resize(graph.nodes().size());

  for (std::size_t i = 0; i < in_ids.size(); ++i) {
    Shape expect = graph.value_shape(in_ids[i]);
    expect.n = batch;
    require(inputs[i].shape() == expect, Errc::shape_mismatch,
            "input '" + graph.input_names()[i] + "' has shape " + inputs[i].shape().str() + ", expected " +
                expect.str());
    cache.values[in_ids[i]] = inputs[i];
  }

  for (std::size_t ni = 0; ni < graph.nodes().size(); ++ni) {
    const auto& node = graph.nodes()[ni];
    const auto& spec = node.spec;
    auto& nc = cache.nodes[ni];
    const Tensor<T>& x = cache.values[node.inputs[0]];
    Shape out_shape = graph.value_shape(node.output);
    out_shape.n = batch;
    Tensor<T> y(out_shape);
    const std::size_t rows_out = static_cast<std::size_t>(batch) * out_shape.h * out_shape.w;

    switch (spec.kind) {
      case LayerKind::conv2d:
      case LayerKind::conv2d_stride2:
      case LayerKind::conv1d: {
        const auto g = conv_geom(node, x.shape(), out_shape);
        const auto& w = params.value(spec.name + "/w");
        const std::size_t step = block_rows(g.cols());
        std::vector<T> cols(std::min(step, g.rows()) * g.cols());
        CMapMat<T> W(w.data(), g.cols(), spec.channels_out);
        for (std::size_t r0 = 0; r0 < g.rows(); r0 += step) {
          const std::size_t r1 = std::min(g.rows(), r0 + step);
          im2col(x.data(), g, r0, r1, cols.data());
          MapMat<T>(y.data() + r0 * spec.channels_out, r1 - r0, spec.channels_out).noalias() =
              CMapMat<T>(cols.data(), r1 - r0, g.cols()) * W;
        }
        if (spec.bias) add_bias(y.data(), rows_out, spec.channels_out, params.value(spec.name + "/b").data());
        break;
      }
      case LayerKind::transposed_conv2d_stride2: {
        const auto g = tconv_geom(node, x.shape(), out_shape);
        const auto& w = params.value(spec.name + "/w");
        const std::size_t rows_in = static_cast<std::size_t>(batch) * x.shape().h * x.shape().w;
        const std::size_t step = block_rows(g.cols());
        std::vector<T> cols(std::min(step, rows_in) * g.cols());
        CMapMat<T> W(w.data(), node.channels_in, g.cols());
        for (std::size_t r0 = 0; r0 < rows_in; r0 += step) {
          const std::size_t r1 = std::min(rows_in, r0 + step);
          MapMat<T>(cols.data(), r1 - r0, g.cols()).noalias() =
              CMapMat<T>(x.data() + r0 * node.channels_in, r1 - r0, node.channels_in) * W;
          col2im(cols.data(), g, r0, r1, y.data());
        }
        if (spec.bias) add_bias(y.data(), rows_out, spec.channels_out, params.value(spec.name + "/b").data());
        break;
      }
      case LayerKind::dense: {
        const auto& w = params.value(spec.name + "/w");
        MapMat<T>(y.data(), batch, spec.channels_out).noalias() =
            CMapMat<T>(x.data(), batch, node.channels_in) * CMapMat<T>(w.data(), node.channels_in, spec.channels_out);
        if (spec.bias) add_bias(y.data(), batch, spec.channels_out, params.value(spec.name + "/b").data());
        break;
      }
      case LayerKind::batch_norm: {
        const int C = x.shape().c;
        const std::size_t R = x.size() / C;
        const auto& gamma = params.value(spec.name + "/gamma");
        const auto& beta = params.value(spec.name + "/beta");
        nc.mean.assign(C, T(0));
        nc.inv_std.assign(C, T(0));
        if (mode == Mode::train) {
          nc.used_batch_stats = true;
          std::vector<double> sum(C, 0.0), sq(C, 0.0);
          for (std::size_t r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) sum[c] += x[r * C + c];
          for (int c = 0; c < C; ++c) sum[c] /= static_cast<double>(R);
          for (std::size_t r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) {
              const double d = x[r * C + c] - sum[c];
              sq[c] += d * d;
            }
          nc.batch_var.assign(C, T(0));
          for (int c = 0; c < C; ++c) {
            const double var = sq[c] / static_cast<double>(R);
            nc.mean[c] = static_cast<T>(sum[c]);
            nc.batch_var[c] = static_cast<T>(var);
            nc.inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
          }
        } else {
          const auto& rm = params.value(spec.name + "/running_mean");
          const auto& rv = params.value(spec.name + "/running_var");
          for (int c = 0; c < C; ++c) {
            nc.mean[c] = rm[c];
            nc.inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[c]) + kBatchNormEps));
          }
        }
        for (std::size_t r = 0; r < R; ++r)
          for (int c = 0; c < C; ++c)
            y[r * C + c] = gamma[c] * (x[r * C + c] - nc.mean[c]) * nc.inv_std[c] + beta[c];
        break;
      }
      case LayerKind::relu:
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
        break;
      case LayerKind::sigmoid:
        for (std::size_t i = 0; i < x.size(); ++i) {
          const T v = x[i];
          if (v >= T(0)) {
            y[i] = T(1) / (T(1) + std::exp(-v));
          } else {
            const T e = std::exp(v);
            y[i] = e / (T(1) + e);
          }
        }
        break;
      case LayerKind::dropout:
        if (dropout_active(spec, mode)) {
          Rng rng(derive_seed(seed, {0xd50u, ni}));
          const T keep_scale = static_cast<T>(1.0 / (1.0 - spec.dropout_rate));
          nc.mask.resize(x.size());
          for (std::size_t i = 0; i < x.size(); ++i) {
            nc.mask[i] = rng.uniform() < spec.dropout_rate ? T(0) : keep_scale;
            y[i] = x[i] * nc.mask[i];
          }
        } else {
          y = x;
        }
        break;
      case LayerKind::global_max_pool_2d:
      case LayerKind::global_max_pool_1d: {
        const int C = x.shape().c;
        const int hw = x.shape().h * x.shape().w;
        nc.arg.assign(static_cast<std::size_t>(batch) * C, 0);
        for (int n = 0; n < batch; ++n) {
          const T* s = x.sample(n);
          for (int c = 0; c < C; ++c) {
            int best = 0;
            T v = s[c];
            for (int p = 1; p < hw; ++p)
              if (s[static_cast<std::size_t>(p) * C + c] > v) {
                v = s[static_cast<std::size_t>(p) * C + c];
                best = p;
              }
            y[static_cast<std::size_t>(n) * C + c] = v;
            nc.arg[static_cast<std::size_t>(n) * C + c] = best;
          }
        }
        break;
      }
      case LayerKind::concat: {
        const int C = out_shape.c;
        int offset = 0;
        for (int v : node.inputs) {
          const Tensor<T>& src = cache.values[v];
          const int c_in = src.shape().c;
          for (std::size_t r = 0; r < rows_out; ++r)
            std::memcpy(y.data() + r * C + offset, src.data() + r * c_in, sizeof(T) * c_in);
          offset += c_in;
        }
        break;
      }
    }
    cache.values[node.output] = std::move(y);
  }
  result.output = cache.values[graph.output()];
  return result;
}

template <class T>
Gradients<T> backward(const Graph& graph, const ParamStore<T>& params, const Activations<T>& cache,
                      const Tensor<T>& upstream, bool input_grads) {
  require(cache.values.size() == static_cast<std::size_t>(graph.num_values()), Errc::shape_mismatch,
          "activation cache does not belong to this network");
  require(upstream.shape() == cache.values[graph.output()].shape(), Errc::shape_mismatch,
          "upstream gradient shape " + upstream.shape().str() + " does not match output " +
              cache.values[graph.output()].shape().str());

  Gradients<T> grads;
  for (const auto& p : graph.param_specs())
    if (p.trainable) grads.params[p.name].assign(params.value(p.name).size(), T(0));

  std::vector<Tensor<T>> dvals(graph.num_values());
  dvals[graph.output()] = upstream;
  auto accumulate = [&](int value) -> Tensor<T>& {
    if (dvals[value].size() == 0) dvals[value] = Tensor<T>(cache.values[value].shape());
    return dvals[value];
  };

  std::vector<bool> is_input(graph.num_values(), false);
  for (int id : graph.inputs()) is_input[id] = true;

  const int batch = upstream.shape().n;
  for (std::size_t k = graph.nodes().size(); k-- > 0;) {
    const auto& node = graph.nodes()[k];
    const auto& spec = node.spec;
    const auto& nc = cache.nodes[k];
    const Tensor<T>& dy = dvals[node.output];
    if (dy.size() == 0) continue;
    const bool need_dx = input_grads || !is_input[node.inputs[0]];
    const Tensor<T>& x = cache.values[node.inputs[0]];
    const Tensor<T>& y = cache.values[node.output];
    const Shape out_shape = y.shape();
    const std::size_t rows_out = static_cast<std::size_t>(batch) * out_shape.h * out_shape.w;

    switch (spec.kind) {
      case LayerKind::conv2d:
      case LayerKind::conv2d_stride2:
      case LayerKind::conv1d: {
        const auto g = conv_geom(node, x.shape(), out_shape);
        const auto& w = params.value(spec.name + "/w");
        auto& dw = grads.params[spec.name + "/w"];
        const std::size_t step = block_rows(g.cols());
        std::vector<T> cols(std::min(step, g.rows()) * g.cols());
        CMapMat<T> W(w.data(), g.cols(), spec.channels_out);
        MapMat<T> dW(dw.data(), g.cols(), spec.channels_out);
        T* dx = need_dx ? accumulate(node.inputs[0]).data() : nullptr;
        for (std::size_t r0 = 0; r0 < g.rows(); r0 += step) {
          const std::size_t r1 = std::min(g.rows(), r0 + step);
          CMapMat<T> dY(dy.data() + r0 * spec.channels_out, r1 - r0, spec.channels_out);
          MapMat<T> C(cols.data(), r1 - r0, g.cols());
          im2col(x.data(), g, r0, r1, cols.data());
          dW.noalias() += C.transpose() * dY;
          if (!dx) continue;
          C.noalias() = dY * W.transpose();
          col2im(cols.data(), g, r0, r1, dx);
        }
        if (spec.bias) bias_grad(dy.data(), rows_out, spec.channels_out, grads.params[spec.name + "/b"]);
        break;
      }
      case LayerKind::transposed_conv2d_stride2: {
        const auto g = tconv_geom(node, x.shape(), out_shape);
        const auto& w = params.value(spec.name + "/w");
        auto& dw = grads.params[spec.name + "/w"];
        const std::size_t rows_in = static_cast<std::size_t>(batch) * x.shape().h * x.shape().w;
        const std::size_t step = block_rows(g.cols());
        std::vector<T> dcols(std::min(step, rows_in) * g.cols());
        CMapMat<T> W(w.data(), node.channels_in, g.cols());
        MapMat<T> dW(dw.data(), node.channels_in, g.cols());
        T* dx = need_dx ? accumulate(node.inputs[0]).data() : nullptr;
        for (std::size_t r0 = 0; r0 < rows_in; r0 += step) {
          const std::size_t r1 = std::min(rows_in, r0 + step);
          im2col(dy.data(), g, r0, r1, dcols.data());
          CMapMat<T> dC(dcols.data(), r1 - r0, g.cols());
          dW.noalias() += CMapMat<T>(x.data() + r0 * node.channels_in, r1 - r0, node.channels_in).transpose() * dC;
          if (dx) MapMat<T>(dx + r0 * node.channels_in, r1 - r0, node.channels_in).noalias() += dC * W.transpose();
        }
        if (spec.bias) bias_grad(dy.data(), rows_out, spec.channels_out, grads.params[spec.name + "/b"]);
        break;
      }
      case LayerKind::dense: {
        const auto& w = params.value(spec.name + "/w");
        auto& dw = grads.params[spec.name + "/w"];
        CMapMat<T> dY(dy.data(), batch, spec.channels_out);
        MapMat<T>(dw.data(), node.channels_in, spec.channels_out).noalias() +=
            CMapMat<T>(x.data(), batch, node.channels_in).transpose() * dY;
        if (spec.bias) bias_grad(dy.data(), batch, spec.channels_out, grads.params[spec.name + "/b"]);
        if (need_dx)
          MapMat<T>(accumulate(node.inputs[0]).data(), batch, node.channels_in).noalias() +=
              dY * CMapMat<T>(w.data(), node.channels_in, spec.channels_out).transpose();
        break;
      }
      case LayerKind::batch_norm: {
        const int C = x.shape().c;
        const std::size_t R = x.size() / C;
        const auto& gamma = params.value(spec.name + "/gamma");
        auto& dgamma = grads.params[spec.name + "/gamma"];
        auto& dbeta = grads.params[spec.name + "/beta"];
        std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
        for (std::size_t r = 0; r < R; ++r)
          for (int c = 0; c < C; ++c) {
            const double xhat = (x[r * C + c] - nc.mean[c]) * nc.inv_std[c];
            sum_dy[c] += dy[r * C + c];
            sum_dy_xhat[c] += dy[r * C + c] * xhat;
          }
        for (int c = 0; c < C; ++c) {
          dgamma[c] += static_cast<T>(sum_dy_xhat[c]);
          dbeta[c] += static_cast<T>(sum_dy[c]);
        }
        Tensor<T>& dx = accumulate(node.inputs[0]);
        if (nc.used_batch_stats) {
          const double inv_r = 1.0 / static_cast<double>(R);
          for (std::size_t r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) {
              const double xhat = (x[r * C + c] - nc.mean[c]) * nc.inv_std[c];
              const double v = gamma[c] * nc.inv_std[c] *
                               (dy[r * C + c] - sum_dy[c] * inv_r - xhat * sum_dy_xhat[c] * inv_r);
              dx[r * C + c] += static_cast<T>(v);
            }
        } else {
          for (std::size_t r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) dx[r * C + c] += dy[r * C + c] * gamma[c] * nc.inv_std[c];
        }
        break;
      }
      case LayerKind::relu: {
        Tensor<T>& dx = accumulate(node.inputs[0]);
        for (std::size_t i = 0; i < dy.size(); ++i)
          if (y[i] > T(0)) dx[i] += dy[i];
        break;
      }
      case LayerKind::sigmoid: {
        Tensor<T>& dx = accumulate(node.inputs[0]);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
        break;
      }
      case LayerKind::dropout: {
        Tensor<T>& dx = accumulate(node.inputs[0]);
        if (!nc.mask.empty())
          for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * nc.mask[i];
        else
          for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
        break;
      }
      case LayerKind::global_max_pool_2d:
      case LayerKind::global_max_pool_1d: {
        Tensor<T>& dx = accumulate(node.inputs[0]);
        const int C = x.shape().c;
        for (int n = 0; n < batch; ++n) {
          T* d = dx.sample(n);
          for (int c = 0; c < C; ++c) {
            const std::size_t o = static_cast<std::size_t>(n) * C + c;
            d[static_cast<std::size_t>(nc.arg[o]) * C + c] += dy[o];
          }
        }
        break;
      }
      case LayerKind::concat: {
        const int C = out_shape.c;
        int offset = 0;
        for (int v : node.inputs) {
          Tensor<T>& dx = accumulate(v);
          const int c_in = dx.shape().c;
          for (std::size_t r = 0; r < rows_out; ++r)
            for (int c = 0; c < c_in; ++c) dx[r * c_in + c] += dy[r * C + offset + c];
          offset += c_in;
        }
        break;
      }
    }
  }

  if (!input_grads) return grads;
  for (int id : graph.inputs()) {
    if (dvals[id].size() == 0) dvals[id] = Tensor<T>(cache.values[id].shape());
    grads.inputs.push_back(std::move(dvals[id]));
  }
  return grads;
}

template <class T>
void update_running_stats(const Graph& graph, ParamStore<T>& params, const Activations<T>& cache, double momentum) {
  for (std::size_t k = 0; k < graph.nodes().size(); ++k) {
    const auto& node = graph.nodes()[k];
    const auto& nc = cache.nodes[k];
    if (node.spec.kind != LayerKind::batch_norm || !nc.used_batch_stats) continue;
    auto& rm = params.value(node.spec.name + "/running_mean");
    auto& rv = params.value(node.spec.name + "/running_var");
    const auto& x = cache.values[node.inputs[0]];
    const double R = static_cast<double>(x.size() / x.shape().c);
    const double unbias = R > 1 ? R / (R - 1) : 1.0;
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = static_cast<T>(momentum * rm[c] + (1.0 - momentum) * nc.mean[c]);
      rv[c] = static_cast<T>(momentum * rv[c] + (1.0 - momentum) * nc.batch_var[c] * unbias);
    }
  }
}

template <class T>
std::uint64_t kink_signature(const Graph& graph, const Activations<T>& cache) {
  std::uint64_t h = 0x12345;
  for (std::size_t k = 0; k < graph.nodes().size(); ++k) {
    const auto& node = graph.nodes()[k];
    if (node.spec.kind == LayerKind::relu) {
      const auto& y = cache.values[node.output];
      for (std::size_t i = 0; i < y.size(); ++i) h = mix64(h ^ (y[i] > T(0) ? (i << 1) | 1u : i << 1));
    } else if (node.spec.kind == LayerKind::global_max_pool_2d || node.spec.kind == LayerKind::global_max_pool_1d) {
      for (auto a : cache.nodes[k].arg) h = mix64(h ^ static_cast<std::uint64_t>(a));
    }
  }
  return h;
}

#define SEVERE_INSTANTIATE(T)                                                                                  \
  template ForwardResult<T> forward<T>(const Graph&, const ParamStore<T>&, std::span<const Tensor<T>>, Mode,   \
                                       std::uint64_t);                                                         \
  template Gradients<T> backward<T>(const Graph&, const ParamStore<T>&, const Activations<T>&, const Tensor<T>&, bool); \
  template void update_running_stats<T>(const Graph&, ParamStore<T>&, const Activations<T>&, double);         \
  template std::uint64_t kink_signature<T>(const Graph&, const Activations<T>&);
SEVERE_INSTANTIATE(float)
SEVERE_INSTANTIATE(double)
#undef SEVERE_INSTANTIATE

}  // namespace severe::nn
