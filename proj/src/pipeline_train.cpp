#include <algorithm>
#include <cstring>
#include <set>

#include "pipeline_internal.hpp"
#include "severe/error.hpp"
#include "severe/log.hpp"
#include "severe/parallel.hpp"
#include "severe/rng.hpp"

namespace severe::detail {

namespace fs = std::filesystem;
using nn::Tensor;

namespace {

constexpr int kSummarySize = 2 * kNumDiagnostics;

bool sample_less(const PatchSample& a, const PatchSample& b) {
  return std::tie(a.day, a.hour, a.cell) < std::tie(b.day, b.hour, b.cell);
}

Tensor<float> gather(const Tensor<float>& bank, std::span<const std::size_t> idx) {
  auto shape = bank.shape();
  shape.n = static_cast<int>(idx.size());
  Tensor<float> out(shape);
  const std::size_t len = shape.per_sample();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::memcpy(out.sample(static_cast<int>(i)), bank.sample(static_cast<int>(idx[i])), len * sizeof(float));
  return out;
}

struct Grids {
  FineGridSpec fine;
  CoarseGridSpec coarse;
  PatchIndexMap index;

  explicit Grids(const SynthConfig& synth)
      : fine(synth.fine_grid()), coarse(synth.coarse_grid()), index(build_patch_index(fine, coarse)) {}
  int n_cells() const { return coarse.n_cells(); }
};

// Positive and negative (day, hour, cell) samples of the given days labeled
// by the window starting at that hour, subsampled to the requested counts.
std::pair<std::vector<PatchSample>, std::vector<std::uint8_t>> labeled_bank(const SynthArchive& archive,
                                                                            const std::vector<int>& days,
                                                                            int n_cells, int n_pos, int n_neg,
                                                                            std::uint64_t seed) {
  std::vector<PatchSample> pos, neg;
  for (int d : days)
    for (int h = 0; h < kHoursPerDay; ++h)
      for (int c = 0; c < n_cells; ++c) (archive.labels.at(d, h, c) ? pos : neg).push_back({d, h, c});
  Rng rng(seed);
  rng.shuffle(pos.begin(), pos.end());
  rng.shuffle(neg.begin(), neg.end());
  pos.resize(std::min<std::size_t>(pos.size(), n_pos));
  neg.resize(std::min<std::size_t>(neg.size(), n_neg));
  std::vector<std::pair<PatchSample, std::uint8_t>> all;
  for (const auto& s : pos) all.push_back({s, 1});
  for (const auto& s : neg) all.push_back({s, 0});
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return sample_less(a.first, b.first); });
  std::pair<std::vector<PatchSample>, std::vector<std::uint8_t>> out;
  for (const auto& [s, y] : all) {
    out.first.push_back(s);
    out.second.push_back(y);
  }
  return out;
}

void write_fit_log(const fs::path& path, const nn::BinaryFitResult& fit) {
  CsvWriter log(path, "epoch,train_loss,val_loss");
  for (std::size_t e = 0; e < fit.val_loss.size(); ++e)
    log.row(static_cast<int>(e), e == 0 ? std::string("") : fmt(fit.train_loss.at(e - 1)), fit.val_loss[e]);
  log.close();
}

std::set<int> as_set(const std::vector<int>& v) { return {v.begin(), v.end()}; }

// Encoder features and patch summaries of every training and validation day.
struct FeatureBank {
  std::vector<int> days;  // archive day indices
  int n_cells = 0;
  int feature_size = 0;
  std::vector<float> features;   // (day, hour, cell, F)
  std::vector<float> summaries;  // (day, hour, cell, 30)

  const float* feature(int d, int h, int c) const {
    return features.data() + ((static_cast<std::size_t>(d) * kHoursPerDay + h) * n_cells + c) * feature_size;
  }
  const float* summary(int d, int h, int c) const {
    return summaries.data() + ((static_cast<std::size_t>(d) * kHoursPerDay + h) * n_cells + c) * kSummarySize;
  }
};

FeatureBank load_feature_bank(const RunPaths& paths, const std::string& digest) {
  require(fs::exists(paths.features()), Errc::io_error, "no feature bank in the run directory; run train-encoder first");
  const auto store = ArrayStore::load(paths.features());
  require_digest(store, "feature bank", digest);
  FeatureBank fb;
  const auto days = store.get<std::int32_t>("days");
  fb.days.assign(days.begin(), days.end());
  const auto shape = store.shape("features");
  fb.n_cells = static_cast<int>(shape.at(2));
  fb.feature_size = static_cast<int>(shape.at(3));
  fb.features = store.get<float>("features");
  fb.summaries = store.get<float>("summaries");
  return fb;
}

// Positions in the feature bank of the days in `split`.
std::vector<int> bank_rows(const FeatureBank& fb, const std::vector<int>& split) {
  const auto wanted = as_set(split);
  std::vector<int> rows;
  for (std::size_t i = 0; i < fb.days.size(); ++i)
    if (wanted.count(fb.days[i])) rows.push_back(static_cast<int>(i));
  return rows;
}

}  // namespace

void run_train_cgan(const ExperimentConfig& cfg, const RunPaths& paths) {
  fs::create_directories(paths / "models");
  const auto archive = load_run_archive(cfg, paths);
  const auto norms = load_run_normalizers(paths);
  const Grids grids(archive.cfg);
  const auto seed = cfg.stage_seed("train-cgan");

  // Half of the bank shows a storm so the conditioning has something to say.
  std::vector<PatchSample> storm, calm;
  for (int d : archive.train)
    for (int h = 0; h < kHoursPerDay; ++h)
      for (int c = 0; c < grids.n_cells(); ++c)
        (storm_in_footprint(archive.storms[d], grids.index.origins[c], h) ? storm : calm).push_back({d, h, c});
  Rng rng(derive_seed(seed, {1}));
  rng.shuffle(storm.begin(), storm.end());
  rng.shuffle(calm.begin(), calm.end());
  const std::size_t bank = static_cast<std::size_t>(cfg.cgan_bank);
  const std::size_t n_storm = std::min(bank / 2, storm.size());
  std::vector<PatchSample> samples(storm.begin(), storm.begin() + n_storm);
  samples.insert(samples.end(), calm.begin(), calm.begin() + std::min(bank - n_storm, calm.size()));
  std::sort(samples.begin(), samples.end(), sample_less);
  log_info("cgan bank: ", samples.size(), " patches (", n_storm, " with storms)");
  const auto patches = materialize_patches(archive, norms, grids.index, samples);
  const StackBatchFn batch = [&](std::span<const std::size_t> idx) { return gather(patches, idx); };

  CganConfig c = cfg.cgan;
  c.seed = seed;
  auto a = make_cgan(c, CganGroup::a);
  auto b = make_cgan(c, CganGroup::b);
  CsvWriter log(paths / "models/cgan_log.csv", "group,epoch,adversarial,reconstruction");
  for (CganModel* model : {&a, &b}) {
    const auto hist = train_cgan(*model, batch, samples.size(), c);
    for (std::size_t e = 0; e < hist.reconstruction.size(); ++e)
      log.row(group_name(model->group), static_cast<int>(e + 1), hist.adversarial[e], hist.reconstruction[e]);
    log_info("cgan ", group_name(model->group), " trained");
  }
  log.close();
  ArrayStore store;
  save_cgan(store, c, a, b);
  store.set_attr("normalizer_digest", normalizer_digest(norms));
  store.save(paths.cgan());
}

void run_train_encoder(const ExperimentConfig& cfg, const RunPaths& paths) {
  fs::create_directories(paths / "models");
  const auto archive = load_run_archive(cfg, paths);
  const auto norms = load_run_normalizers(paths);
  const auto digest = normalizer_digest(norms);
  const Grids grids(archive.cfg);
  const auto seed = cfg.stage_seed("train-encoder");

  EncoderModel encoder;
  {
    const auto [train_s, train_y] = labeled_bank(archive, archive.train, grids.n_cells(), cfg.encoder_positives,
                                                 cfg.encoder_negatives, derive_seed(seed, {1}));
    const auto [val_s, val_y] = labeled_bank(archive, archive.val, grids.n_cells(),
                                             std::max(1, cfg.encoder_positives / 4),
                                             std::max(1, cfg.encoder_negatives / 4), derive_seed(seed, {2}));
    log_info("encoder bank: ", train_s.size(), " training and ", val_s.size(), " validation patches");
    const auto train_x = materialize_patches(archive, norms, grids.index, train_s);
    const auto val_x = materialize_patches(archive, norms, grids.index, val_s);
    const nn::BatchFn tb = [&](std::span<const std::size_t> idx) { return std::vector{gather(train_x, idx)}; };
    const nn::BatchFn vb = [&](std::span<const std::size_t> idx) { return std::vector{gather(val_x, idx)}; };
    auto t = cfg.encoder_train;
    t.seed = derive_seed(seed, {3});
    auto res = pretrain_encoder(cfg.encoder, tb, train_y, vb, val_y, t, cfg.encoder_ratio);
    write_fit_log(paths / "models/encoder_log.csv", res.fit);
    encoder = std::move(res.encoder);
    ArrayStore store;
    save_encoder(store, encoder);
    store.set_attr("normalizer_digest", digest);
    store.save(paths.encoder());
  }

  // Shared feature pass over training and validation days.
  FeatureBank fb;
  fb.days = archive.train;
  fb.days.insert(fb.days.end(), archive.val.begin(), archive.val.end());
  std::sort(fb.days.begin(), fb.days.end());
  fb.n_cells = grids.n_cells();
  fb.feature_size = encoder.spec.feature_size();
  const std::size_t per_day = static_cast<std::size_t>(kHoursPerDay) * fb.n_cells;
  fb.features.resize(fb.days.size() * per_day * fb.feature_size);
  fb.summaries.resize(fb.days.size() * per_day * kSummarySize);
  std::vector<int> cells(fb.n_cells);
  for (int c = 0; c < fb.n_cells; ++c) cells[c] = c;
  parallel_for(fb.days.size(), [&](std::size_t i) {
    const auto stacks = day_stacks(archive.cfg, norms, archive.days[fb.days[i]]);
    for (int h = 0; h < kHoursPerDay; ++h) {
      const auto patches = stack_patches(stacks[h], grids.index, cells);
      const auto enc = encode_patches(encoder, patches);
      std::copy(enc.data(), enc.data() + enc.size(), fb.features.data() + (i * kHoursPerDay + h) * fb.n_cells * fb.feature_size);
      const auto& s = patches.shape();
      for (int c = 0; c < fb.n_cells; ++c) {
        const auto sum = patch_summary(patches.sample(c), s.c, s.h * s.w);
        std::copy(sum.begin(), sum.end(), fb.summaries.data() + ((i * kHoursPerDay + h) * fb.n_cells + c) * kSummarySize);
      }
    }
  });
  const auto nd = static_cast<std::int64_t>(fb.days.size());
  ArrayStore store;
  store.put<std::int32_t>("days", {nd}, std::vector<std::int32_t>(fb.days.begin(), fb.days.end()));
  store.put<float>("features", {nd, kHoursPerDay, fb.n_cells, fb.feature_size}, fb.features);
  store.put<float>("summaries", {nd, kHoursPerDay, fb.n_cells, kSummarySize}, fb.summaries);
  store.set_attr("normalizer_digest", digest);
  store.save(paths.features());
}

void run_train_classifier(const ExperimentConfig& cfg, const RunPaths& paths, std::optional<int> window) {
  fs::create_directories(paths / "models");
  const auto archive = load_run_archive(cfg, paths);
  const auto norms = load_run_normalizers(paths);
  const auto digest = normalizer_digest(norms);
  const auto fb = load_feature_bank(paths, digest);
  const Grids grids(archive.cfg);
  const auto geo = cell_geography(archive.cfg, norms, grids.index);
  const auto seed = cfg.stage_seed("train-classifier");
  const auto train_rows = bank_rows(fb, archive.train);
  const auto val_rows = bank_rows(fb, archive.val);

  std::vector<int> windows;
  if (window) {
    require(*window >= 0 && *window < kHoursPerDay, Errc::config_error, "--window must lie in 0..23");
    windows = {*window};
  } else {
    for (int s = 0; s < kHoursPerDay; ++s) windows.push_back(s);
  }

  std::vector<ClassifierFit> fits(windows.size());
  parallel_for(windows.size(), [&](std::size_t i) {
    const int s = windows[i];
    const auto hours = window_feature_hours(s);
    const int arity = static_cast<int>(hours.size());
    const int F = fb.feature_size;
    // Sample j of a split is (rows[j / cells], cell j % cells).
    auto labels_of = [&](const std::vector<int>& rows) {
      std::vector<std::uint8_t> y;
      for (int r : rows)
        for (int c = 0; c < fb.n_cells; ++c) y.push_back(archive.labels.at(fb.days[r], s, c));
      return y;
    };
    auto batch_of = [&](const std::vector<int>& rows) {
      return nn::BatchFn([&, rows](std::span<const std::size_t> idx) {
        const int n = static_cast<int>(idx.size());
        Tensor<float> x({n, 1, arity, F}), g({n, 1, 1, 3});
        for (int j = 0; j < n; ++j) {
          const int r = rows[idx[j] / fb.n_cells], c = static_cast<int>(idx[j] % fb.n_cells);
          for (int t = 0; t < arity; ++t) std::copy_n(fb.feature(r, hours[t], c), F, &x.at(j, 0, t, 0));
          std::copy(geo[c].begin(), geo[c].end(), g.sample(j));
        }
        return std::vector{std::move(x), std::move(g)};
      });
    };
    auto t = cfg.classifier_train;
    t.seed = derive_seed(seed, {static_cast<std::uint64_t>(s)});
    fits[i] = train_classifier(cfg.classifier, F, arity, batch_of(train_rows), labels_of(train_rows),
                               batch_of(val_rows), labels_of(val_rows), t, cfg.classifier_ratio);
  });

  ArrayStore store;
  if (window && fs::exists(paths.classifiers())) {
    store = ArrayStore::load(paths.classifiers());
    require_digest(store, "stored classifiers", digest);
  }
  for (std::size_t i = 0; i < windows.size(); ++i) {
    save_classifier(store, windows[i], fits[i].model);
    char name[48];
    std::snprintf(name, sizeof name, "models/classifier_log_w%02d.csv", windows[i]);
    write_fit_log(paths / name, fits[i].fit);
  }
  store.set_attr("normalizer_digest", digest);
  store.save(paths.classifiers());
}

void run_train_mlp(const ExperimentConfig& cfg, const RunPaths& paths) {
  fs::create_directories(paths / "models");
  const auto archive = load_run_archive(cfg, paths);
  const auto norms = load_run_normalizers(paths);
  const auto digest = normalizer_digest(norms);
  const auto fb = load_feature_bank(paths, digest);
  const Grids grids(archive.cfg);
  const auto geo = cell_geography(archive.cfg, norms, grids.index);
  constexpr int kF = MlpModel::kMlpFeatures;

  // Rows (bank day, window, cell) of a split with their features and labels.
  auto build = [&](const std::vector<int>& split, std::vector<float>& x, std::vector<std::uint8_t>& y) {
    for (int r : bank_rows(fb, split))
      for (int s = 0; s < kHoursPerDay; ++s)
        for (int c = 0; c < fb.n_cells; ++c) {
          std::vector<std::vector<float>> per_hour;
          for (int h : window_feature_hours(s))
            per_hour.emplace_back(fb.summary(r, h, c), fb.summary(r, h, c) + kSummarySize);
          const auto f = mlp_features_from_summaries(per_hour, geo[c]);
          x.insert(x.end(), f.begin(), f.end());
          y.push_back(archive.labels.at(fb.days[r], s, c));
        }
  };
  std::vector<float> train_x, val_x;
  std::vector<std::uint8_t> train_y, val_y;
  build(archive.train, train_x, train_y);
  build(archive.val, val_x, val_y);
  auto batch_of = [](const std::vector<float>& x) {
    return nn::BatchFn([&x](std::span<const std::size_t> idx) {
      Tensor<float> out({static_cast<int>(idx.size()), 1, 1, kF});
      for (std::size_t j = 0; j < idx.size(); ++j)
        std::copy_n(x.data() + idx[j] * kF, kF, out.sample(static_cast<int>(j)));
      return std::vector{std::move(out)};
    });
  };
  auto t = cfg.mlp_train;
  t.seed = cfg.stage_seed("train-mlp");
  const auto fit = train_mlp(cfg.mlp, batch_of(train_x), train_y, batch_of(val_x), val_y, t, cfg.mlp_ratio);
  write_fit_log(paths / "models/mlp_log.csv", fit.fit);
  ArrayStore store;
  save_mlp(store, fit.model);
  store.set_attr("normalizer_digest", digest);
  store.save(paths.mlp());
}

}  // namespace severe::detail
