#include "severe/severe_models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "severe/error.hpp"
#include "severe/griddata.hpp"
#include "severe/nn/network.hpp"
#include "severe/normalize.hpp"
#include "severe/rng.hpp"

namespace severe {

using nn::Graph;
using nn::Tensor;

namespace {

constexpr int kEncodeChunk = 32;

void require_arity(int arity) {
  require(arity >= 2 && arity <= 4, Errc::wrong_window_arity,
          "a lead window needs 2, 3 or 4 feature hours, got " + std::to_string(arity));
}

int encoder_body(Graph& g, const EncoderSpec& spec) {
  require(!spec.widths.empty() && spec.channels > 0 && spec.patch > 0, Errc::config_error, "invalid encoder spec");
  int x = g.add_input("patch", spec.patch, spec.patch, spec.channels);
  for (std::size_t i = 0; i < spec.widths.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    x = g.add(nn::relu(), g.add(nn::conv(p + "a", spec.widths[i]), x));
    x = g.add(nn::relu(), g.add(nn::conv(p + "b", spec.widths[i]), x));
    x = g.add(nn::relu(), g.add(nn::conv_down(p + "d", spec.widths[i]), x));
  }
  return g.add(nn::global_max_pool_2d(), x);
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string encoder_text(const EncoderSpec& s) {
  return "widths=" + join(s.widths) + " channels=" + std::to_string(s.channels) + " patch=" + std::to_string(s.patch);
}

std::string classifier_text(const ClassifierSpec& s, int feature_size) {
  std::ostringstream os;
  os << "kernels=" << s.conv_kernels << " length=" << s.kernel_length << " hidden=" << s.hidden
     << " dropout=" << s.dropout << " features=" << feature_size;
  return os.str();
}

std::string mlp_text(const MlpSpec& s, int n_features) {
  std::ostringstream os;
  os << "hidden=" << s.hidden1 << "," << s.hidden2 << " dropout=" << s.dropout << " features=" << n_features;
  return os.str();
}

void check_attr(const ArrayStore& store, const std::string& key, const std::string& expected) {
  require(store.has_attr(key), Errc::checkpoint_mismatch, "checkpoint lacks '" + key + "'");
  require(store.attr(key) == expected, Errc::checkpoint_mismatch,
          "checkpoint " + key + " '" + store.attr(key) + "' differs from config '" + expected + "'");
}

std::vector<float> single_output(const Tensor<float>& out) { return out.values(); }

}  // namespace

std::vector<int> window_feature_hours(int start) {
  require(start >= 0 && start < kHoursPerDay, Errc::out_of_domain, "window start " + std::to_string(start));
  std::vector<int> out;
  for (int h = start - 2; h <= start + 1; ++h)
    if (h >= 0 && h < kHoursPerDay) out.push_back(h);
  return out;
}

Graph build_encoder(const EncoderSpec& spec) {
  Graph g;
  g.set_output(encoder_body(g, spec));
  return g;
}

Graph build_encoder_pretrainer(const EncoderSpec& spec) {
  Graph g;
  const int f = encoder_body(g, spec);
  g.set_output(g.add(nn::sigmoid(), g.add(nn::dense("enc_aux", 1), f)));
  return g;
}

Graph build_classifier(const ClassifierSpec& spec, int feature_size, int arity) {
  require_arity(arity);
  Graph g;
  const int f = g.add_input("features", 1, arity, feature_size);
  const int geo = g.add_input("geo", 1, 1, 3);
  int x = g.add(nn::relu(), g.add(nn::conv1d("cls_conv", spec.conv_kernels, spec.kernel_length), f));
  x = g.add(nn::global_max_pool_1d(), x);
  x = g.add(nn::concat(), {x, geo});
  x = g.add(nn::dropout("cls_drop1", spec.dropout, true), x);
  x = g.add(nn::relu(), g.add(nn::dense("cls_hidden", spec.hidden), x));
  x = g.add(nn::dropout("cls_drop2", spec.dropout, true), x);
  g.set_output(g.add(nn::sigmoid(), g.add(nn::dense("cls_out", 1), x)));
  return g;
}

Graph build_mlp(const MlpSpec& spec, int n_features) {
  Graph g;
  int x = g.add_input("features", 1, 1, n_features);
  int level = 1;
  for (int units : {spec.hidden1, spec.hidden2}) {
    const std::string p = "mlp_h" + std::to_string(level++);
    x = g.add(nn::without_bias(nn::dense(p, units)), x);
    x = g.add(nn::relu(), g.add(nn::batch_norm(p + "_bn"), x));
    x = g.add(nn::dropout(p + "_drop", spec.dropout, true), x);
  }
  g.set_output(g.add(nn::sigmoid(), g.add(nn::dense("mlp_out", 1), x)));
  return g;
}

EncoderModel make_encoder(const EncoderSpec& spec, std::uint64_t seed) {
  return {spec, nn::init_params<float>(build_encoder(spec), seed)};
}

ClassifierModel make_classifier(const ClassifierSpec& spec, int feature_size, std::uint64_t seed) {
  return {spec, feature_size, nn::init_params<float>(build_classifier(spec, feature_size, 4), seed)};
}

MlpModel make_mlp(const MlpSpec& spec, std::uint64_t seed) {
  MlpModel m;
  m.spec = spec;
  m.params = nn::init_params<float>(build_mlp(spec, m.n_features), seed);
  return m;
}

Tensor<float> encode_patches(const EncoderModel& enc, const Tensor<float>& patches) {
  const auto& s = patches.shape();
  require(s.h == enc.spec.patch && s.w == enc.spec.patch && s.c == enc.spec.channels, Errc::shape_mismatch,
          "encoder expects (n," + std::to_string(enc.spec.patch) + "," + std::to_string(enc.spec.patch) + "," +
              std::to_string(enc.spec.channels) + ") patches, got " + s.str());
  const Graph g = build_encoder(enc.spec);
  const int f = enc.spec.feature_size();
  Tensor<float> out({s.n, 1, 1, f});
  for (int n0 = 0; n0 < s.n; n0 += kEncodeChunk) {
    const int n1 = std::min(s.n, n0 + kEncodeChunk);
    Tensor<float> chunk({n1 - n0, s.h, s.w, s.c},
                        std::vector<float>(patches.sample(n0), patches.sample(n0) + (n1 - n0) * s.per_sample()));
    const auto r = nn::forward<float>(g, enc.params, chunk, nn::Mode::infer, 0);
    std::copy(r.output.values().begin(), r.output.values().end(), out.sample(n0));
  }
  return out;
}

std::vector<float> encode_patch(const EncoderModel& enc, const Tensor<float>& patch) {
  require(patch.shape().n == 1, Errc::shape_mismatch, "encode_patch takes one patch, got " + patch.shape().str());
  return encode_patches(enc, patch).values();
}

PretrainResult pretrain_encoder(const EncoderSpec& spec, const nn::BatchFn& train_batch,
                                std::span<const std::uint8_t> train_labels, const nn::BatchFn& val_batch,
                                std::span<const std::uint8_t> val_labels, const nn::TrainConfig& cfg,
                                double negatives_per_positive) {
  const Graph g = build_encoder_pretrainer(spec);
  nn::BinaryFitOptions opt;
  opt.train = cfg;
  opt.negatives_per_positive = negatives_per_positive;
  opt.label = "encoder";
  PretrainResult r;
  r.fit = nn::fit_binary(g, nn::init_params<float>(g, derive_seed(cfg.seed, {0xe1c})), train_batch, train_labels,
                         val_batch, val_labels, opt);
  r.encoder.spec = spec;
  r.encoder.params = nn::init_params<float>(build_encoder(spec), 0);
  r.encoder.params.copy_values_from(r.fit.params);
  return r;
}

std::vector<float> classify(const ClassifierModel& cls, const Tensor<float>& features, const Tensor<float>& geo,
                            std::uint64_t mc_seed) {
  const auto& s = features.shape();
  require(s.h == 1, Errc::shape_mismatch, "classifier features must be (n, 1, arity, F), got " + s.str());
  require_arity(s.w);
  require(s.c == cls.feature_size, Errc::shape_mismatch,
          "classifier expects " + std::to_string(cls.feature_size) + " features, got " + s.str());
  const Graph g = build_classifier(cls.spec, cls.feature_size, s.w);
  const std::vector<Tensor<float>> in{features, geo};
  return single_output(nn::forward<float>(g, cls.params, in, nn::Mode::infer, mc_seed).output);
}

ClassifierFit train_classifier(const ClassifierSpec& spec, int feature_size, int arity, const nn::BatchFn& train_batch,
                               std::span<const std::uint8_t> train_labels, const nn::BatchFn& val_batch,
                               std::span<const std::uint8_t> val_labels, const nn::TrainConfig& cfg,
                               double negatives_per_positive) {
  const Graph g = build_classifier(spec, feature_size, arity);
  nn::BinaryFitOptions opt;
  opt.train = cfg;
  opt.negatives_per_positive = negatives_per_positive;
  opt.output_bias = "cls_out/b";
  opt.label = "classifier(arity " + std::to_string(arity) + ")";
  ClassifierFit r;
  r.fit = nn::fit_binary(g, nn::init_params<float>(g, derive_seed(cfg.seed, {0xc1a})), train_batch, train_labels,
                         val_batch, val_labels, opt);
  r.model = {spec, feature_size, r.fit.params};
  return r;
}

std::vector<float> patch_summary(const float* patch, int channels, int pixels) {
  require(channels > 0 && pixels > 0, Errc::shape_mismatch, "empty patch");
  std::vector<double> sum(channels, 0.0);
  std::vector<float> out(2 * static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) out[channels + c] = patch[c];
  for (int i = 0; i < pixels; ++i) {
    const float* px = patch + static_cast<std::size_t>(i) * channels;
    for (int c = 0; c < channels; ++c) {
      sum[c] += px[c];
      out[channels + c] = std::max(out[channels + c], px[c]);
    }
  }
  for (int c = 0; c < channels; ++c) out[c] = static_cast<float>(sum[c] / pixels);
  return out;
}

std::vector<float> mlp_features_from_summaries(std::span<const std::vector<float>> summaries,
                                               const std::array<float, 3>& geo) {
  require_arity(static_cast<int>(summaries.size()));
  const std::size_t c = summaries[0].size() / 2;
  require(c == static_cast<std::size_t>(kNumDiagnostics), Errc::shape_mismatch, "summaries must cover 15 channels");
  for (const auto& s : summaries) require(s.size() == 2 * c, Errc::shape_mismatch, "summary sizes differ");
  std::vector<float> out;
  out.reserve(4 * c + 3);
  const double t = static_cast<double>(summaries.size());
  for (std::size_t p = 0; p < c; ++p) {
    for (std::size_t reduce : {std::size_t{0}, c}) {
      double mean = 0.0;
      float mx = summaries[0][reduce + p];
      for (const auto& s : summaries) {
        mean += s[reduce + p];
        mx = std::max(mx, s[reduce + p]);
      }
      out.push_back(static_cast<float>(mean / t));
      out.push_back(mx);
    }
  }
  out.insert(out.end(), geo.begin(), geo.end());
  return out;
}

std::vector<float> mlp_features(const Tensor<float>& patches, const std::array<float, 3>& geo) {
  const auto& s = patches.shape();
  require_arity(s.n);
  require(s.c == kNumDiagnostics, Errc::shape_mismatch, "MLP features need 15-channel patches, got " + s.str());
  std::vector<std::vector<float>> summaries;
  for (int k = 0; k < s.n; ++k) summaries.push_back(patch_summary(patches.sample(k), s.c, s.h * s.w));
  return mlp_features_from_summaries(summaries, geo);
}

std::vector<std::string> mlp_feature_names() {
  std::vector<std::string> out;
  for (int p = 0; p < kNumDiagnostics; ++p)
    for (const char* space : {"space_mean", "space_max"})
      for (const char* time : {"time_mean", "time_max"})
        out.push_back(std::string(predictor_name(static_cast<PredictorId>(p))) + "/" + space + "/" + time);
  for (int k = 0; k < 3; ++k) out.push_back(predictor_name(static_cast<PredictorId>(kNumDiagnostics + k)));
  return out;
}

std::vector<float> mlp_forward(const MlpModel& mlp, const Tensor<float>& features, std::uint64_t mc_seed) {
  require(features.shape().per_sample() == static_cast<std::size_t>(mlp.n_features), Errc::shape_mismatch,
          "MLP expects " + std::to_string(mlp.n_features) + " features, got " + features.shape().str());
  const Graph g = build_mlp(mlp.spec, mlp.n_features);
  return single_output(nn::forward<float>(g, mlp.params, features, nn::Mode::infer, mc_seed).output);
}

MlpFit train_mlp(const MlpSpec& spec, const nn::BatchFn& train_batch, std::span<const std::uint8_t> train_labels,
                 const nn::BatchFn& val_batch, std::span<const std::uint8_t> val_labels, const nn::TrainConfig& cfg,
                 double negatives_per_positive) {
  const Graph g = build_mlp(spec, MlpModel::kMlpFeatures);
  nn::BinaryFitOptions opt;
  opt.train = cfg;
  opt.negatives_per_positive = negatives_per_positive;
  opt.output_bias = "mlp_out/b";
  opt.label = "mlp";
  MlpFit r;
  r.fit = nn::fit_binary(g, nn::init_params<float>(g, derive_seed(cfg.seed, {0x31f})), train_batch, train_labels,
                         val_batch, val_labels, opt);
  r.model.spec = spec;
  r.model.params = r.fit.params;
  return r;
}

void save_encoder(ArrayStore& store, const EncoderModel& enc) {
  store.set_attr("encoder/architecture", encoder_text(enc.spec));
  nn::save_params(store, "encoder/", enc.params);
}

EncoderModel load_encoder(const ArrayStore& store, const EncoderSpec& spec) {
  check_attr(store, "encoder/architecture", encoder_text(spec));
  EncoderModel m{spec, nn::load_params<float>(store, "encoder/")};
  nn::check_params(build_encoder(spec), m.params);
  return m;
}

void save_classifier(ArrayStore& store, int window, const ClassifierModel& cls) {
  require(window >= 0 && window < kHoursPerDay, Errc::out_of_domain, "window start outside 0..23");
  const auto arch = classifier_text(cls.spec, cls.feature_size);
  require(!store.has_attr("classifier/architecture") || store.attr("classifier/architecture") == arch,
          Errc::checkpoint_mismatch, "classifier architecture differs from the stored windows");
  store.set_attr("classifier/architecture", arch);
  nn::save_params(store, "classifier/" + std::to_string(window) + "/", cls.params);
}

ClassifierModel load_classifier(const ArrayStore& store, int window, const ClassifierSpec& spec, int feature_size) {
  require(window >= 0 && window < kHoursPerDay, Errc::out_of_domain, "window start outside 0..23");
  check_attr(store, "classifier/architecture", classifier_text(spec, feature_size));
  const std::string prefix = "classifier/" + std::to_string(window) + "/";
  const auto names = store.names();
  require(std::any_of(names.begin(), names.end(), [&](const std::string& n) { return n.rfind(prefix, 0) == 0; }),
          Errc::checkpoint_mismatch, "no classifier stored for window " + std::to_string(window));
  ClassifierModel m{spec, feature_size, nn::load_params<float>(store, prefix)};
  nn::check_params(build_classifier(spec, feature_size, 4), m.params);
  return m;
}

void save_classifiers(ArrayStore& store, const std::vector<ClassifierModel>& classifiers) {
  require(classifiers.size() == static_cast<std::size_t>(kHoursPerDay), Errc::shape_mismatch,
          "one classifier per window start is required");
  for (std::size_t s = 0; s < classifiers.size(); ++s) save_classifier(store, static_cast<int>(s), classifiers[s]);
}

std::vector<ClassifierModel> load_classifiers(const ArrayStore& store, const ClassifierSpec& spec, int feature_size) {
  std::vector<ClassifierModel> out;
  for (int s = 0; s < kHoursPerDay; ++s) out.push_back(load_classifier(store, s, spec, feature_size));
  return out;
}

void save_mlp(ArrayStore& store, const MlpModel& mlp) {
  store.set_attr("mlp/architecture", mlp_text(mlp.spec, mlp.n_features));
  std::string names;
  for (const auto& n : mlp_feature_names()) names += (names.empty() ? "" : ";") + n;
  store.set_attr("mlp/feature_manifest", names);
  nn::save_params(store, "mlp/", mlp.params);
}

MlpModel load_mlp(const ArrayStore& store, const MlpSpec& spec) {
  check_attr(store, "mlp/architecture", mlp_text(spec, MlpModel::kMlpFeatures));
  MlpModel m;
  m.spec = spec;
  m.params = nn::load_params<float>(store, "mlp/");
  nn::check_params(build_mlp(spec, m.n_features), m.params);
  return m;
}

void save_models(ArrayStore& store, const SevereModels& models) {
  store.set_attr("normalizer_digest", models.normalizer_digest);
  save_encoder(store, models.encoder);
  save_classifiers(store, models.classifiers);
  save_mlp(store, models.mlp);
}

SevereModels load_models(const ArrayStore& store, const EncoderSpec& enc, const ClassifierSpec& cls,
                         const MlpSpec& mlp) {
  SevereModels m;
  m.normalizer_digest = store.attr("normalizer_digest");
  m.encoder = load_encoder(store, enc);
  m.classifiers = load_classifiers(store, cls, enc.feature_size());
  m.mlp = load_mlp(store, mlp);
  return m;
}

}  // namespace severe
