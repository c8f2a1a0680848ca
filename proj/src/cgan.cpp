#include "severe/cgan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "severe/error.hpp"
#include "severe/log.hpp"
#include "severe/nn/losses.hpp"
#include "severe/nn/network.hpp"
#include "severe/nn/optim.hpp"
#include "severe/rng.hpp"

namespace severe {

using nn::Graph;
using nn::Mode;
using nn::ParamStore;
using nn::Tensor;

namespace {

int conv_bn_relu(Graph& g, nn::LayerSpec conv, int x) {
  const std::string name = conv.name;
  x = g.add(nn::without_bias(std::move(conv)), x);
  x = g.add(nn::batch_norm(name + "_bn"), x);
  return g.add(nn::relu(), x);
}

bool clamped_at_zero(PredictorId id) {
  return id == PredictorId::cape || id == PredictorId::cin || id == PredictorId::cref;
}

template <class T>
void check_finite(double v, const char* what) {
  require(std::isfinite(v), Errc::non_finite_loss, std::string(what) + " is not finite");
}

template <class T>
void accumulate(nn::Gradients<T>& into, const nn::Gradients<T>& g) {
  for (const auto& [name, v] : g.params) {
    auto it = into.params.find(name);
    if (it == into.params.end()) {
      into.params.emplace(name, v);
      continue;
    }
    for (std::size_t i = 0; i < v.size(); ++i) it->second[i] += v[i];
  }
}

template <class T>
std::vector<T> labels_of(std::size_t n, T value) {
  return std::vector<T>(n, value);
}

template <class T>
nn::ForwardResult<T> run_generator(const Graph& g, const ParamStore<T>& p, const Tensor<T>& z, const Tensor<T>& m,
                                   Mode mode) {
  const std::vector<Tensor<T>> in{m, z};
  return nn::forward<T>(g, p, in, mode, 0);
}

template <class T>
nn::ForwardResult<T> run_discriminator(const Graph& d, const ParamStore<T>& p, const Tensor<T>& c,
                                       const Tensor<T>& m, Mode mode) {
  const std::vector<Tensor<T>> in{c, m};
  return nn::forward<T>(d, p, in, mode, 0);
}

// Generator loss terms given the discriminator's score of the fake batch.
template <class T>
nn::LossResult<T> adversarial_term(const Tensor<T>& d_fake, const CganConfig& cfg) {
  const auto n = d_fake.size();
  if (!cfg.adversarial) return {0.0, Tensor<T>(d_fake.shape())};
  if (cfg.non_saturating) return nn::binary_cross_entropy<T>(d_fake, labels_of<T>(n, T(1)));
  auto r = nn::binary_cross_entropy<T>(d_fake, labels_of<T>(n, T(0)));
  r.loss = -r.loss;  // mean ln(1 - D)
  for (auto& v : r.grad.values()) v = -v;
  return r;
}

}  // namespace

const char* group_name(CganGroup g) { return g == CganGroup::a ? "A" : "B"; }

CganGroup parse_group(const std::string& s) {
  if (s == "A" || s == "a") return CganGroup::a;
  if (s == "B" || s == "b") return CganGroup::b;
  fail(Errc::config_error, "unknown CGAN group '" + s + "'");
}

const std::array<PredictorId, 5>& conditional_predictors() {
  static const std::array<PredictorId, 5> ids{PredictorId::uh_2_5km, PredictorId::uh_0_2km, PredictorId::apcp,
                                              PredictorId::graupel, PredictorId::wind_10m};
  return ids;
}

const std::vector<PredictorId>& group_predictors(CganGroup g) {
  static const std::vector<PredictorId> a{PredictorId::cape, PredictorId::cin, PredictorId::cref};
  static const std::vector<PredictorId> b{PredictorId::mslp,          PredictorId::temp_2m,
                                          PredictorId::dewpoint_2m,   PredictorId::srh_0_1km,
                                          PredictorId::srh_0_3km,     PredictorId::shear_u_0_6km,
                                          PredictorId::shear_v_0_6km};
  return g == CganGroup::a ? a : b;
}

Graph build_generator(const UnetSpec& spec, int group_channels, int height, int width) {
  const int levels = static_cast<int>(spec.widths.size());
  require(levels >= 1 && height % (1 << levels) == 0 && width % (1 << levels) == 0, Errc::shape_mismatch,
          "generator input " + std::to_string(height) + "x" + std::to_string(width) + " does not divide by 2^" +
              std::to_string(levels));
  Graph g;
  const int m = g.add_input("condition", height, width, 5);
  const int z = g.add_input("state", height, width, group_channels);
  int x = g.add(nn::concat(), {m, z});
  std::vector<int> skips;
  for (int i = 0; i < levels; ++i) {
    const std::string p = "g_enc" + std::to_string(i);
    x = conv_bn_relu(g, nn::conv(p + "a", spec.widths[i]), x);
    skips.push_back(x);
    x = conv_bn_relu(g, nn::conv_down(p + "d", spec.widths[i]), x);
  }
  x = conv_bn_relu(g, nn::conv("g_mid", spec.bottleneck), x);
  for (int i = levels - 1; i >= 0; --i) {
    const std::string p = "g_dec" + std::to_string(i);
    x = conv_bn_relu(g, nn::conv_up(p + "u", spec.widths[i]), x);
    x = g.add(nn::concat(), {x, skips[i]});
    x = conv_bn_relu(g, nn::conv(p + "c", spec.widths[i]), x);
  }
  g.set_output(g.add(nn::conv("g_out", group_channels, 1), x));
  return g;
}

Graph build_discriminator(const DiscriminatorSpec& spec, int group_channels, int height, int width) {
  require(!spec.widths.empty(), Errc::config_error, "discriminator needs at least one level");
  Graph g;
  const int c = g.add_input("candidate", height, width, group_channels);
  const int m = g.add_input("condition", height, width, 5);
  int x = g.add(nn::concat(), {c, m});
  for (std::size_t i = 0; i < spec.widths.size(); ++i) {
    const std::string name = "d_conv" + std::to_string(i);
    if (i == 0) {
      x = g.add(nn::relu(), g.add(nn::conv_down(name, spec.widths[i]), x));
    } else {
      x = conv_bn_relu(g, nn::conv_down(name, spec.widths[i]), x);
    }
  }
  x = g.add(nn::global_max_pool_2d(), x);
  x = g.add(nn::dense("d_out", 1), x);
  g.set_output(g.add(nn::sigmoid(), x));
  return g;
}

Tensor<float> make_initial_state(const Tensor<float>& x, CganGroup group, double sigma, std::uint64_t seed) {
  const auto& ids = group_predictors(group);
  require(x.shape().c == static_cast<int>(ids.size()), Errc::shape_mismatch,
          "initial state for group " + std::string(group_name(group)) + " needs " + std::to_string(ids.size()) +
              " channels, got " + x.shape().str());
  Rng rng(seed);
  Tensor<float> z(x.shape());
  const int c = x.shape().c;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = x[i] + sigma * rng.normal();
    if (clamped_at_zero(ids[i % c])) v = std::max(v, 0.0);
    z[i] = static_cast<float>(v);
  }
  return z;
}

Tensor<float> select_channels(const Tensor<float>& stack, std::span<const PredictorId> ids) {
  const auto& s = stack.shape();
  require(s.c == kNumDiagnostics, Errc::shape_mismatch, "expected a 15-channel stack, got " + s.str());
  Tensor<float> out({s.n, s.h, s.w, static_cast<int>(ids.size())});
  const std::size_t pixels = static_cast<std::size_t>(s.n) * s.h * s.w;
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t k = 0; k < ids.size(); ++k) out[p * ids.size() + k] = stack[p * s.c + channel(ids[k])];
  return out;
}

Tensor<float> condition_channels(const Tensor<float>& stack) {
  return select_channels(stack, conditional_predictors());
}

Tensor<float> group_channels(const Tensor<float>& stack, CganGroup group) {
  return select_channels(stack, group_predictors(group));
}

CganModel make_cgan(const CganConfig& cfg, CganGroup group, int height, int width) {
  CganModel model;
  model.group = group;
  const int gc = static_cast<int>(group_predictors(group).size());
  model.generator = build_generator(cfg.generator, gc, height, width);
  model.discriminator = build_discriminator(cfg.discriminator, gc, height, width);
  const auto tag = static_cast<std::uint64_t>(group);
  model.g_params = nn::init_params<float>(model.generator, derive_seed(cfg.seed, {0x6e0u, tag}));
  model.d_params = nn::init_params<float>(model.discriminator, derive_seed(cfg.seed, {0xd15u, tag}));
  return model;
}

template <class T>
Tensor<T> generator_forward(const Graph& g, const ParamStore<T>& params, const Tensor<T>& z, const Tensor<T>& m,
                            bool train_mode) {
  return run_generator(g, params, z, m, train_mode ? Mode::train : Mode::infer).output;
}

template <class T>
Tensor<T> discriminator_forward(const Graph& d, const ParamStore<T>& params, const Tensor<T>& candidate,
                                const Tensor<T>& m, bool train_mode) {
  return run_discriminator(d, params, candidate, m, train_mode ? Mode::train : Mode::infer).output;
}

template <class T>
CganLosses cgan_losses(const Graph& g, const ParamStore<T>& g_params, const Graph& d, const ParamStore<T>& d_params,
                       const Tensor<T>& x, const Tensor<T>& m, const Tensor<T>& z) {
  const auto fake = generator_forward(g, g_params, z, m, true);
  const auto d_real = discriminator_forward(d, d_params, x, m, true);
  const auto d_fake = discriminator_forward(d, d_params, fake, m, true);
  CganLosses l;
  l.adversarial = -nn::binary_cross_entropy<T>(d_real, labels_of<T>(d_real.size(), T(1))).loss -
                  nn::binary_cross_entropy<T>(d_fake, labels_of<T>(d_fake.size(), T(0))).loss;
  l.reconstruction = nn::l1_loss<T>(fake, x).loss;
  return l;
}

template <class T>
double generator_objective(const Graph& g, const ParamStore<T>& g_params, const Graph& d,
                           const ParamStore<T>& d_params, const Tensor<T>& x, const Tensor<T>& m, const Tensor<T>& z,
                           const CganConfig& cfg, nn::Gradients<T>* grads) {
  auto gen = run_generator(g, g_params, z, m, Mode::train);
  auto rec = nn::l1_loss<T>(gen.output, x);
  double objective = cfg.lambda * rec.loss;
  Tensor<T> upstream(gen.output.shape());
  for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] = static_cast<T>(cfg.lambda) * rec.grad[i];
  if (cfg.adversarial) {
    auto disc = run_discriminator(d, d_params, gen.output, m, Mode::train);
    const auto adv = adversarial_term(disc.output, cfg);
    objective += adv.loss;
    if (grads) {
      const auto dg = nn::backward(d, d_params, disc.cache, adv.grad);
      for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] += dg.inputs[0][i];
    }
  }
  if (grads) *grads = nn::backward(g, g_params, gen.cache, upstream, false);
  return objective;
}

template <class T>
double discriminator_objective(const Graph& g, const ParamStore<T>& g_params, const Graph& d,
                               const ParamStore<T>& d_params, const Tensor<T>& x, const Tensor<T>& m,
                               const Tensor<T>& z, nn::Gradients<T>* grads) {
  const auto fake = generator_forward(g, g_params, z, m, true);
  auto real = run_discriminator(d, d_params, x, m, Mode::train);
  auto faked = run_discriminator(d, d_params, fake, m, Mode::train);
  const auto lr = nn::binary_cross_entropy<T>(real.output, labels_of<T>(real.output.size(), T(1)));
  const auto lf = nn::binary_cross_entropy<T>(faked.output, labels_of<T>(faked.output.size(), T(0)));
  if (grads) {
    *grads = nn::backward(d, d_params, real.cache, lr.grad, false);
    accumulate(*grads, nn::backward(d, d_params, faked.cache, lf.grad, false));
  }
  return lr.loss + lf.loss;
}

CganStepResult train_cgan_step(CganModel& model, const Tensor<float>& x, const Tensor<float>& m, const CganConfig& cfg,
                               double learning_rate, std::uint64_t seed) {
  const auto z = make_initial_state(x, model.group, cfg.noise_sigma, derive_seed(seed, {0x2u}));
  nn::AdamConfig adam;
  adam.learning_rate = learning_rate;
  CganStepResult r;

  auto gen = run_generator(model.generator, model.g_params, z, m, Mode::train);
  r.before.reconstruction = nn::l1_loss<float>(gen.output, x).loss;

  if (cfg.adversarial) {
    auto real = run_discriminator(model.discriminator, model.d_params, x, m, Mode::train);
    auto faked = run_discriminator(model.discriminator, model.d_params, gen.output, m, Mode::train);
    const auto lr = nn::binary_cross_entropy<float>(real.output, labels_of<float>(real.output.size(), 1.0f));
    const auto lf = nn::binary_cross_entropy<float>(faked.output, labels_of<float>(faked.output.size(), 0.0f));
    r.d_objective = lr.loss + lf.loss;
    r.before.adversarial = -r.d_objective;
    check_finite<float>(r.d_objective, "discriminator loss");
    auto dg = nn::backward(model.discriminator, model.d_params, real.cache, lr.grad, false);
    accumulate(dg, nn::backward(model.discriminator, model.d_params, faked.cache, lf.grad, false));
    nn::adam_step(model.d_params, dg, adam);
    nn::update_running_stats(model.discriminator, model.d_params, real.cache);
  }

  auto rec = nn::l1_loss<float>(gen.output, x);
  Tensor<float> upstream(gen.output.shape());
  for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] = static_cast<float>(cfg.lambda) * rec.grad[i];
  r.g_objective = cfg.lambda * rec.loss;
  if (cfg.adversarial) {
    auto disc = run_discriminator(model.discriminator, model.d_params, gen.output, m, Mode::train);
    const auto adv = adversarial_term(disc.output, cfg);
    r.g_objective += adv.loss;
    const auto dg = nn::backward(model.discriminator, model.d_params, disc.cache, adv.grad);
    for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] += dg.inputs[0][i];
  }
  check_finite<float>(r.g_objective, "generator loss");
  const auto gg = nn::backward(model.generator, model.g_params, gen.cache, upstream, false);
  nn::adam_step(model.g_params, gg, adam);
  nn::update_running_stats(model.generator, model.g_params, gen.cache);
  return r;
}

CganTrainLog train_cgan(CganModel& model, const StackBatchFn& batch, std::size_t n_samples, const CganConfig& cfg) {
  require(n_samples > 0, Errc::empty_input, "no CGAN training samples");
  CganTrainLog log;
  std::vector<std::size_t> order(n_samples);
  const auto tag = static_cast<std::uint64_t>(model.group);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto e = static_cast<std::uint64_t>(epoch);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, {0xc6a0u, tag, e}));
    rng.shuffle(order.begin(), order.end());
    const double lr = cfg.learning_rate * std::pow(cfg.decay, epoch);
    double adv = 0.0, rec = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < n_samples; start += cfg.batch_size) {
      const std::size_t stop = std::min(n_samples, start + cfg.batch_size);
      const auto stack = batch(std::span<const std::size_t>(order.data() + start, stop - start));
      const auto x = group_channels(stack, model.group);
      const auto m = condition_channels(stack);
      const auto r = train_cgan_step(model, x, m, cfg, lr, derive_seed(cfg.seed, {0xc6a1u, tag, e, start}));
      adv += r.before.adversarial;
      rec += r.before.reconstruction;
      ++steps;
    }
    log.adversarial.push_back(adv / steps);
    log.reconstruction.push_back(rec / steps);
    log_info("cgan ", group_name(model.group), " epoch ", epoch + 1, "/", cfg.epochs, " L_A ", log.adversarial.back(),
             " L_R ", log.reconstruction.back());
  }
  return log;
}

std::vector<Tensor<float>> generate_members(const CganModel& a, const CganModel& b, const CganConfig& cfg,
                                            const Tensor<float>& stack, int k, std::uint64_t seed) {
  require(k >= 1, Errc::config_error, "member count must be positive");
  const auto& s = stack.shape();
  require(s.c == kNumDiagnostics, Errc::shape_mismatch, "expected a 15-channel stack, got " + s.str());
  const auto m = condition_channels(stack);
  std::vector<Tensor<float>> members;
  for (const CganModel* model : {&a, &b}) {
    const auto& ids = group_predictors(model->group);
    const Graph g = build_generator(cfg.generator, static_cast<int>(ids.size()), s.h, s.w);
    const auto x = group_channels(stack, model->group);
    for (int member = 0; member < k; ++member) {
      if (members.size() < static_cast<std::size_t>(k)) members.push_back(stack);
      const auto z = make_initial_state(
          x, model->group, cfg.noise_sigma,
          derive_seed(seed, {static_cast<std::uint64_t>(member), static_cast<std::uint64_t>(model->group)}));
      const auto out = generator_forward(g, model->g_params, z, m, false);
      auto& dst = members[member];
      const std::size_t pixels = static_cast<std::size_t>(s.n) * s.h * s.w;
      for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t c = 0; c < ids.size(); ++c) dst[p * s.c + channel(ids[c])] = out[p * ids.size() + c];
    }
  }
  return members;
}

namespace {

std::string spec_text(const CganConfig& cfg) {
  std::string s = "g:";
  for (int w : cfg.generator.widths) s += std::to_string(w) + ",";
  s += std::to_string(cfg.generator.bottleneck) + ";d:";
  for (int w : cfg.discriminator.widths) s += std::to_string(w) + ",";
  return s;
}

}  // namespace

void save_cgan(ArrayStore& store, const CganConfig& cfg, const CganModel& a, const CganModel& b) {
  store.set_attr("cgan/architecture", spec_text(cfg));
  for (const CganModel* model : {&a, &b}) {
    const std::string p = std::string("cgan_") + (model->group == CganGroup::a ? "a" : "b") + "/";
    nn::save_params(store, p + "g/", model->g_params);
    nn::save_params(store, p + "d/", model->d_params);
  }
}

void load_cgan(const ArrayStore& store, const CganConfig& cfg, CganModel& a, CganModel& b) {
  require(store.attr("cgan/architecture") == spec_text(cfg), Errc::checkpoint_mismatch,
          "CGAN checkpoint architecture " + store.attr("cgan/architecture") + " differs from config " +
              spec_text(cfg));
  a = make_cgan(cfg, CganGroup::a);
  b = make_cgan(cfg, CganGroup::b);
  for (CganModel* model : {&a, &b}) {
    const std::string p = std::string("cgan_") + (model->group == CganGroup::a ? "a" : "b") + "/";
    model->g_params = nn::load_params<float>(store, p + "g/");
    model->d_params = nn::load_params<float>(store, p + "d/");
    nn::check_params(model->generator, model->g_params);
    nn::check_params(model->discriminator, model->d_params);
  }
}

#define SEVERE_CGAN_INSTANTIATE(T)                                                                                   \
  template Tensor<T> generator_forward<T>(const Graph&, const ParamStore<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                          bool);                                                                     \
  template Tensor<T> discriminator_forward<T>(const Graph&, const ParamStore<T>&, const Tensor<T>&,                  \
                                              const Tensor<T>&, bool);                                               \
  template CganLosses cgan_losses<T>(const Graph&, const ParamStore<T>&, const Graph&, const ParamStore<T>&,         \
                                     const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
  template double generator_objective<T>(const Graph&, const ParamStore<T>&, const Graph&, const ParamStore<T>&,     \
                                         const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const CganConfig&,    \
                                         nn::Gradients<T>*);                                                         \
  template double discriminator_objective<T>(const Graph&, const ParamStore<T>&, const Graph&, const ParamStore<T>&, \
                                             const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                   \
                                             nn::Gradients<T>*);

SEVERE_CGAN_INSTANTIATE(float)
SEVERE_CGAN_INSTANTIATE(double)

}  // namespace severe
