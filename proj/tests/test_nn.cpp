#include <cmath>
#include <numeric>

#include "doctest.h"
#include "severe/nn/grad_check.hpp"
#include "severe/nn/losses.hpp"
#include "severe/nn/network.hpp"
#include "severe/nn/optim.hpp"
#include "severe/nn/train.hpp"
#include "severe/rng.hpp"

using namespace severe;
using namespace severe::nn;

namespace {

template <class T>
Tensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

LossResult<double> mean_output(const Tensor<double>& out) {
  LossResult<double> r{0.0, Tensor<double>(out.shape())};
  for (std::size_t i = 0; i < out.size(); ++i) {
    r.loss += out[i];
    r.grad[i] = 1.0 / static_cast<double>(out.size());
  }
  r.loss /= static_cast<double>(out.size());
  return r;
}

// Weighted sum so every output element gets a distinct upstream gradient.
LossResult<double> weighted_sum(const Tensor<double>& out) {
  LossResult<double> r{0.0, Tensor<double>(out.shape())};
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double w = std::sin(0.37 * static_cast<double>(i) + 0.1);
    r.loss += w * out[i];
    r.grad[i] = w;
  }
  return r;
}

}  // namespace

TEST_CASE("global max pool over an 8x8x128 map returns per-channel maxima") {
  Graph g;
  const int x = g.add_input("x", 8, 8, 128);
  g.add(global_max_pool_2d(), x);
  CHECK(g.output_shape() == Shape{1, 1, 1, 128});
  const auto in = random_tensor<float>({2, 8, 8, 128}, 3);
  ParamStore<float> p;
  const auto out = forward<float>(g, p, in, Mode::infer, 0).output;
  REQUIRE(out.shape() == Shape{2, 1, 1, 128});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 128; ++c) {
      float m = -1e30f;
      for (int y = 0; y < 8; ++y)
        for (int xx = 0; xx < 8; ++xx) m = std::max(m, in.at(n, y, xx, c));
      CHECK(out.at(n, 0, 0, c) == m);
    }
}

TEST_CASE("dropout with rate 0 is the identity in every mode") {
  Graph g;
  const int x = g.add_input("x", 4, 4, 3);
  g.add(dropout("d", 0.0, true), x);
  ParamStore<double> p;
  const auto in = random_tensor<double>({3, 4, 4, 3}, 5);
  for (Mode m : {Mode::train, Mode::infer}) {
    const auto out = forward<double>(g, p, in, m, 77).output;
    CHECK(out.values() == in.values());
  }
}

TEST_CASE("3x3 convolution with a delta kernel reproduces its input") {
  Graph g;
  const int x = g.add_input("x", 7, 9, 4);
  g.add(conv("c", 4), x);
  auto p = init_params<double>(g, 1);
  auto& w = p.value("c/w");
  std::fill(w.begin(), w.end(), 0.0);
  // Row layout is (ky, kx, cin); centre tap is (1, 1).
  for (int c = 0; c < 4; ++c) w[static_cast<std::size_t>((4 * 4 + c) * 4 + c)] = 1.0;
  const auto in = random_tensor<double>({2, 7, 9, 4}, 9);
  const auto out = forward<double>(g, p, in, Mode::infer, 0).output;
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(out[i] == doctest::Approx(in[i]).epsilon(1e-14));
}

TEST_CASE("dense weight gradient is the outer product of input and upstream") {
  Graph g;
  const int x = g.add_input("x", 1, 1, 5);
  g.add(dense("fc", 3), x);
  auto p = init_params<double>(g, 2);
  const auto in = random_tensor<double>({1, 1, 1, 5}, 4);
  auto fwd = forward<double>(g, p, in, Mode::train, 0);
  const auto up = random_tensor<double>({1, 1, 1, 3}, 6);
  const auto grads = backward(g, p, fwd.cache, up);
  const auto& dw = grads.params.at("fc/w");
  for (int i = 0; i < 5; ++i)
    for (int o = 0; o < 3; ++o) CHECK(dw[static_cast<std::size_t>(i * 3 + o)] == doctest::Approx(in[i] * up[o]));
  const auto& db = grads.params.at("fc/b");
  for (int o = 0; o < 3; ++o) CHECK(db[o] == doctest::Approx(up[o]));
}

TEST_CASE("ReLU passes no gradient at negative pre-activations") {
  Graph g;
  const int x = g.add_input("x", 1, 1, 4);
  g.add(relu(), x);
  ParamStore<double> p;
  Tensor<double> in({1, 1, 1, 4}, std::vector<double>{-1.0, 2.0, -0.5, 3.0});
  auto fwd = forward<double>(g, p, in, Mode::train, 0);
  Tensor<double> up({1, 1, 1, 4}, 1.0);
  const auto grads = backward(g, p, fwd.cache, up);
  CHECK(grads.inputs[0].values() == std::vector<double>{0.0, 1.0, 0.0, 1.0});
}

TEST_CASE("two-layer conv net gradients match central differences") {
  Graph g;
  const int x = g.add_input("x", 8, 8, 3);
  int h = g.add(conv("c1", 6), x);
  h = g.add(relu(), h);
  g.add(conv("c2", 2), h);
  auto p = init_params<double>(g, 11);
  const auto in = random_tensor<double>({2, 8, 8, 3}, 12);
  const auto r = grad_check(g, p, std::span<const Tensor<double>>(&in, 1), weighted_sum, 1e-5, 64, 3);
  CHECK(r.checked >= 50);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradient check is essentially exact for a linear network") {
  Graph g;
  const int x = g.add_input("x", 1, 1, 6);
  int h = g.add(dense("a", 8), x);
  g.add(dense("b", 3), h);
  auto p = init_params<double>(g, 21);
  const auto in = random_tensor<double>({4, 1, 1, 6}, 22);
  const auto r = grad_check(g, p, std::span<const Tensor<double>>(&in, 1), weighted_sum, 1e-5, 60, 4);
  CHECK(r.checked >= 50);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("gradient check through a fixed dropout mask") {
  Graph g;
  const int x = g.add_input("x", 6, 6, 2);
  int h = g.add(conv("c", 4), x);
  h = g.add(dropout("d", 0.3, false), h);
  h = g.add(global_max_pool_2d(), h);
  g.add(dense("fc", 1), h);
  auto p = init_params<double>(g, 31);
  const auto in = random_tensor<double>({3, 6, 6, 2}, 32);
  // The seed is fixed inside grad_check, so every evaluation sees one mask.
  const auto r = grad_check(g, p, std::span<const Tensor<double>>(&in, 1), weighted_sum, 1e-5, 60, 5, Mode::train);
  CHECK(r.checked >= 50);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("every layer kind passes a gradient check") {
  Graph g;
  const int x = g.add_input("x", 8, 8, 3);
  const int geo = g.add_input("geo", 1, 1, 2);
  int a = g.add(conv("c1", 4), x);
  a = g.add(batch_norm("bn1"), a);
  a = g.add(relu(), a);
  int d = g.add(conv_down("down", 6), a);
  int u = g.add(conv_up("up", 4), d);
  int cat = g.add(concat(), {u, a});
  int s = g.add(conv("c2", 4), cat);
  s = g.add(global_max_pool_2d(), s);
  int v = g.add(concat(), {s, geo});
  v = g.add(dense("fc", 5), v);
  v = g.add(sigmoid(), v);
  g.add(dense("out", 1), v);
  auto p = init_params<double>(g, 41);
  std::vector<Tensor<double>> in{random_tensor<double>({3, 8, 8, 3}, 42), random_tensor<double>({3, 1, 1, 2}, 43)};
  const auto r = grad_check(g, p, in, weighted_sum, 1e-5, 80, 6);
  CHECK(r.checked >= 50);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("conv1d and 1-d max pool gradients") {
  Graph g;
  const int x = g.add_input("x", 1, 4, 5);
  int h = g.add(conv1d("k", 6, 2), x);
  h = g.add(relu(), h);
  h = g.add(global_max_pool_1d(), h);
  g.add(dense("o", 1), h);
  auto p = init_params<double>(g, 51);
  const auto in = random_tensor<double>({4, 1, 4, 5}, 52);
  const auto r = grad_check(g, p, std::span<const Tensor<double>>(&in, 1), weighted_sum, 1e-5, 60, 7);
  CHECK(r.checked >= 50);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("bias-free conv before batch norm has no bias parameter and checks out") {
  Graph g;
  const int x = g.add_input("x", 6, 6, 2);
  int h = g.add(without_bias(conv("c", 4)), x);
  h = g.add(batch_norm("c_bn"), h);
  h = g.add(relu(), h);
  g.add(without_bias(dense("o", 2)), g.add(global_max_pool_2d(), h));
  bool any_bias = false;
  for (const auto& spec : g.param_specs()) any_bias = any_bias || spec.name.ends_with("/b");
  CHECK_FALSE(any_bias);
  auto p = init_params<double>(g, 61);
  const auto in = random_tensor<double>({3, 6, 6, 2}, 62);
  const auto r = grad_check(g, p, std::span<const Tensor<double>>(&in, 1), weighted_sum, 1e-5, 60, 8, Mode::train);
  CHECK(r.checked >= 50);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("skipping input gradients leaves parameter gradients unchanged") {
  Graph g;
  const int x = g.add_input("x", 8, 8, 3);
  int h = g.add(relu(), g.add(conv("c1", 4), x));
  h = g.add(conv_up("u", 2), g.add(conv_down("d", 4), h));
  g.add(dense("o", 1), g.add(global_max_pool_2d(), h));
  const auto p = init_params<double>(g, 63);
  const auto in = random_tensor<double>({2, 8, 8, 3}, 64);
  const auto fwd = forward<double>(g, p, in, Mode::train, 1);
  const Tensor<double> up(fwd.output.shape(), 1.0);
  const auto full = backward(g, p, fwd.cache, up);
  const auto lean = backward(g, p, fwd.cache, up, false);
  CHECK(full.inputs.size() == 1);
  CHECK(lean.inputs.empty());
  CHECK(full.params == lean.params);
}

TEST_CASE("three stride-2 stages take 64x64 down to 8x8") {
  Graph g;
  int h = g.add_input("x", 64, 64, 15);
  for (int i = 0; i < 3; ++i) h = g.add(conv_down("d" + std::to_string(i), 8), h);
  CHECK(g.value_shape(h) == Shape{1, 8, 8, 8});
  Graph t;
  int u = t.add_input("x", 8, 8, 4);
  u = t.add(conv_up("u", 4), u);
  CHECK(t.value_shape(u) == Shape{1, 16, 16, 4});
}

TEST_CASE("input shape mismatch is rejected") {
  Graph g;
  const int x = g.add_input("x", 8, 8, 3);
  g.add(conv("c", 2), x);
  auto p = init_params<float>(g, 1);
  Tensor<float> bad({1, 8, 8, 4});
  try {
    forward<float>(g, p, bad, Mode::infer, 0);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::shape_mismatch);
  }
}

TEST_CASE("forward is deterministic for fixed seed") {
  Graph g;
  const int x = g.add_input("x", 8, 8, 3);
  int h = g.add(conv("c", 4), x);
  h = g.add(dropout("d", 0.5, true), h);
  g.add(global_max_pool_2d(), h);
  auto p = init_params<float>(g, 3);
  const auto in = random_tensor<float>({2, 8, 8, 3}, 4);
  const auto a = forward<float>(g, p, in, Mode::infer, 99).output;
  const auto b = forward<float>(g, p, in, Mode::infer, 99).output;
  const auto c = forward<float>(g, p, in, Mode::infer, 100).output;
  CHECK(a.values() == b.values());
  CHECK(a.values() != c.values());
}

TEST_CASE("inverted dropout preserves the expected activation") {
  Graph g;
  const int x = g.add_input("x", 1, 1, 1);
  g.add(dropout("d", 0.3, false), x);
  ParamStore<double> p;
  Tensor<double> in({1, 1, 1, 1}, 2.5);
  const int n = 10000;
  double sum = 0.0, sq = 0.0;
  for (int s = 0; s < n; ++s) {
    const double v = forward<double>(g, p, in, Mode::train, static_cast<std::uint64_t>(s)).output[0];
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - 2.5) < 3.0 * se);
}

TEST_CASE("train-mode batch norm standardizes each channel") {
  Graph g;
  const int x = g.add_input("x", 5, 5, 3);
  g.add(batch_norm("bn"), x);
  auto p = init_params<double>(g, 1);
  auto in = random_tensor<double>({6, 5, 5, 3}, 8, 2.0, 9.0);
  const auto out = forward<double>(g, p, in, Mode::train, 0).output;
  for (int c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0;
    const std::size_t cnt = out.size() / 3;
    for (std::size_t i = c; i < out.size(); i += 3) m += out[i];
    m /= static_cast<double>(cnt);
    for (std::size_t i = c; i < out.size(); i += 3) v += (out[i] - m) * (out[i] - m);
    v /= static_cast<double>(cnt);
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(v - 1.0) < 1e-5);
  }
}

TEST_CASE("infer-mode batch norm uses running statistics") {
  Graph g;
  const int x = g.add_input("x", 1, 1, 1);
  g.add(batch_norm("bn"), x);
  auto p = init_params<double>(g, 1);
  p.value("bn/running_mean")[0] = 2.0;
  p.value("bn/running_var")[0] = 4.0;
  Tensor<double> in({1, 1, 1, 1}, 6.0);
  const auto out = forward<double>(g, p, in, Mode::infer, 0).output;
  CHECK(out[0] == doctest::Approx(4.0 / std::sqrt(4.0 + kBatchNormEps)));
}

TEST_CASE("adam leaves parameters unchanged under zero gradient") {
  ParamStore<double> p;
  p.set("w", {3}, {1.0, -2.0, 0.5});
  Gradients<double> g;
  g.params["w"] = {0.0, 0.0, 0.0};
  adam_step(p, g, AdamConfig{});
  CHECK(p.value("w") == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("adam on a scalar quadratic follows the hand-iterated recurrence") {
  ParamStore<double> p;
  p.set("t", {1}, {1.0});
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  double theta = 1.0, m = 0.0, v = 0.0;
  for (int k = 1; k <= 3; ++k) {
    Gradients<double> g;
    g.params["t"] = {2.0 * p.value("t")[0]};
    adam_step(p, g, cfg);
    const double gr = 2.0 * theta;
    m = 0.9 * m + 0.1 * gr;
    v = 0.999 * v + 0.001 * gr * gr;
    const double mh = m / (1.0 - std::pow(0.9, k));
    const double vh = v / (1.0 - std::pow(0.999, k));
    theta -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(p.value("t")[0] == doctest::Approx(theta).epsilon(1e-14));
  }
  CHECK(p.entry("t").step == 3);
}

TEST_CASE("first adam step moves each parameter by about lr in the gradient's direction") {
  ParamStore<double> p;
  p.set("w", {3}, {0.0, 0.0, 0.0});
  Gradients<double> g;
  g.params["w"] = {3.0, -0.01, 250.0};
  adam_step(p, g, AdamConfig{});
  CHECK(p.value("w")[0] == doctest::Approx(-1e-4).epsilon(1e-6));
  CHECK(p.value("w")[1] == doctest::Approx(1e-4).epsilon(1e-5));
  CHECK(p.value("w")[2] == doctest::Approx(-1e-4).epsilon(1e-6));
}

TEST_CASE("binary cross-entropy") {
  Tensor<double> p({4, 1, 1, 1}, std::vector<double>{1.0, 0.0, 1.0, 0.0});
  std::vector<double> y{1.0, 0.0, 1.0, 0.0};
  CHECK(binary_cross_entropy<double>(p, y).loss <= 1e-6);

  Tensor<double> half({3, 1, 1, 1}, 0.5);
  std::vector<double> y2{1.0, 0.0, 1.0};
  CHECK(binary_cross_entropy<double>(half, y2).loss == doctest::Approx(std::log(2.0)));

  Rng rng(5);
  Tensor<double> q({257, 1, 1, 1});
  std::vector<double> t(257);
  for (std::size_t i = 0; i < 257; ++i) {
    q[i] = rng.uniform(0.001, 0.999);
    t[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
  }
  double ref = 0.0;
  for (std::size_t i = 0; i < 257; ++i) ref -= t[i] * std::log(q[i]) + (1 - t[i]) * std::log(1 - q[i]);
  ref /= 257.0;
  const auto r = binary_cross_entropy<double>(q, t);
  CHECK(r.loss == doctest::Approx(ref).epsilon(1e-12));
  for (std::size_t i = 0; i < 257; ++i) {
    const double gi = (-(t[i] / q[i]) + (1 - t[i]) / (1 - q[i])) / 257.0;
    CHECK(r.grad[i] == doctest::Approx(gi).epsilon(1e-12));
  }
}

TEST_CASE("L1 loss") {
  const auto a = random_tensor<double>({2, 3, 3, 2}, 1);
  CHECK(l1_loss<double>(a, a).loss == 0.0);
  auto b = a;
  for (auto& v : b.values()) v -= 0.75;
  CHECK(l1_loss<double>(a, b).loss == doctest::Approx(0.75));
  const auto c = random_tensor<double>({2, 3, 3, 2}, 2);
  double ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ref += std::abs(a[i] - c[i]);
  CHECK(l1_loss<double>(a, c).loss == doctest::Approx(ref / static_cast<double>(a.size())).epsilon(1e-14));
  Tensor<double> d({1, 1, 1, 3});
  try {
    l1_loss<double>(a, d);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::shape_mismatch);
  }
}

TEST_CASE("parameters round-trip through the array container") {
  Graph g;
  const int x = g.add_input("x", 4, 4, 2);
  int h = g.add(conv("c", 3), x);
  h = g.add(batch_norm("bn"), h);
  g.add(global_max_pool_2d(), h);
  auto p = init_params<float>(g, 9);
  Gradients<float> gr;
  gr.params["c/w"] = std::vector<float>(p.value("c/w").size(), 0.5f);
  adam_step(p, gr, AdamConfig{});
  ArrayStore store;
  save_params(store, "net/", p, true);
  const auto path = std::filesystem::temp_directory_path() / "severe_params_roundtrip.sev";
  store.save(path);
  const auto back = load_params<float>(ArrayStore::load(path), "net/");
  std::filesystem::remove(path);
  check_params(g, back);
  for (const auto& [name, e] : p.entries()) {
    CHECK(back.entry(name).value == e.value);
    CHECK(back.entry(name).trainable == e.trainable);
    CHECK(back.entry(name).step == e.step);
  }
  CHECK(back.entry("c/w").m == p.entry("c/w").m);
}

TEST_CASE("rebalanced epochs keep every positive and cap negatives") {
  std::vector<std::uint8_t> labels(500, 0);
  for (int i = 0; i < 500; i += 37) labels[static_cast<std::size_t>(i)] = 1;
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  Rng rng(1);
  for (double ratio : {1.0, 10.0}) {
    const auto idx = rebalanced_epoch(labels, ratio, rng);
    std::size_t p = 0, n = 0;
    for (auto i : idx) (labels[i] ? p : n)++;
    CHECK(p == static_cast<std::size_t>(pos));
    CHECK(static_cast<double>(n) <= ratio * static_cast<double>(p) + 1.0);
    CHECK(std::abs(static_cast<double>(n) - ratio * static_cast<double>(p)) <= 1.0);
    std::vector<std::size_t> sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  }
}

TEST_CASE("fit_binary restores the best validation weights") {
  Graph g;
  const int x = g.add_input("x", 1, 1, 4);
  int h = g.add(dense("h", 8), x);
  h = g.add(relu(), h);
  h = g.add(dense("o", 1), h);
  g.add(sigmoid(), h);
  Rng rng(3);
  const int n = 400;
  std::vector<float> feats(n * 4);
  std::vector<std::uint8_t> labels(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) {
      feats[static_cast<std::size_t>(i * 4 + j)] = static_cast<float>(rng.normal());
      s += feats[static_cast<std::size_t>(i * 4 + j)];
    }
    labels[static_cast<std::size_t>(i)] = rng.bernoulli(1.0 / (1.0 + std::exp(-(2.0 * s - 3.0)))) ? 1 : 0;
  }
  auto batch = [&](std::span<const std::size_t> idx) {
    Tensor<float> t({static_cast<int>(idx.size()), 1, 1, 4});
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (int j = 0; j < 4; ++j) t[k * 4 + j] = feats[idx[k] * 4 + j];
    return std::vector<Tensor<float>>{t};
  };
  BinaryFitOptions opt;
  opt.train.learning_rate = 1e-2;
  opt.train.max_epochs = 15;
  opt.train.seed = 4;
  opt.negatives_per_positive = 1.0;
  opt.output_bias = "o/b";
  const auto r = fit_binary(g, init_params<float>(g, 5), batch, labels, batch, labels, opt);
  const double best = *std::min_element(r.val_loss.begin(), r.val_loss.end());
  CHECK(best <= r.val_loss.front());
  CHECK(r.val_loss.back() >= best);
  CHECK(r.prior_shift < 0.0);
  const double at_returned = evaluate_bce(g, r.params, batch, labels, derive_seed(4, {0x7a1u}));
  CHECK(at_returned == doctest::Approx(best).epsilon(1e-6));
}
