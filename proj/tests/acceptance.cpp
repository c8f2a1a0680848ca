// Acceptance run: one PASS/FAIL line per criterion. Criteria 4, 5, 6 and 8
// share one desk-scale experiment, which is run here unless --desk-run points
// at a finished run directory made from the same config.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "severe/array_store.hpp"
#include "severe/cgan.hpp"
#include "severe/config.hpp"
#include "severe/ensembles.hpp"
#include "severe/error.hpp"
#include "severe/nn/grad_check.hpp"
#include "severe/nn/losses.hpp"
#include "severe/nn/network.hpp"
#include "severe/pipeline.hpp"
#include "severe/rng.hpp"
#include "severe/severe_models.hpp"
#include "severe/stacks.hpp"
#include "severe/stormgen.hpp"
#include "severe/verification.hpp"

#ifndef SEVERE_CONFIG_DIR
#error "SEVERE_CONFIG_DIR must point at tools/configs"
#endif

using namespace severe;
namespace fs = std::filesystem;
using nn::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExperimentConfig config_named(const std::string& name) {
  return ExperimentConfig::load(fs::path(SEVERE_CONFIG_DIR) / (name + ".ini"));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, sep)) out.push_back(cell);
  return out;
}

std::map<std::string, std::map<std::string, std::string>> read_keyed_csv(const fs::path& p) {
  const auto lines = split(read_file(p), '\n');
  require(!lines.empty(), Errc::missing_metric, p.string() + " is empty");
  const auto header = split(lines[0], ',');
  std::map<std::string, std::map<std::string, std::string>> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split(lines[i], ',');
    for (std::size_t j = 0; j < header.size() && j < cells.size(); ++j) out[cells[0]][header[j]] = cells[j];
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class T>
Tensor<T> random_tensor(nn::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// ---------------------------------------------------------------------------
// 1. Metric identities

Outcome metric_identities() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kRows = 100000;
  constexpr int kBins = 20;
  Rng rng(101);
  std::vector<double> p(kRows), o(kRows), c(kRows), q(kRows);
  for (int i = 0; i < kRows; ++i) {
    const int bin = static_cast<int>(rng.uniform() * kBins);
    p[i] = (bin + 0.5) / kBins;
    o[i] = rng.bernoulli(p[i]) ? 1.0 : 0.0;
    c[i] = rng.uniform(0.01, 0.99);
    q[i] = rng.uniform();
  }
  double worst = 0.0;
  std::string why;
  auto track = [&](double err, const char* what) {
    if (err > worst) {
      worst = err;
      why = what;
    }
  };

  const auto terms = murphy_decompose(p, o, kBins);
  long double bs_ref = 0.0L;
  for (int i = 0; i < kRows; ++i) bs_ref += static_cast<long double>(p[i] - o[i]) * (p[i] - o[i]);
  bs_ref /= kRows;
  track(std::abs(terms.rel - terms.res + terms.unc - terms.bs), "murphy identity");
  track(std::abs(terms.bs - static_cast<double>(bs_ref)), "murphy bs");

  track(std::abs(brier_skill_score(c, o, c)), "BSS(climatology)");
  track(std::abs(brier_skill_score(o, o, c) - 1.0), "BSS(perfect)");

  long double brier = 0.0L;
  for (int i = 0; i < kRows; ++i) brier += static_cast<long double>(q[i] - o[i]) * (q[i] - o[i]);
  track(std::abs(brier_score(q, o) - static_cast<double>(brier / kRows)), "brier");

  const Tensor<double> qa({kRows, 1, 1, 1}, q);
  const Tensor<double> ca({kRows, 1, 1, 1}, c);
  long double l1 = 0.0L;
  for (int i = 0; i < kRows; ++i) l1 += std::abs(static_cast<long double>(q[i]) - c[i]);
  const auto l1_result = nn::l1_loss<double>(qa, ca);
  track(std::abs(l1_result.loss - static_cast<double>(l1 / kRows)), "L1");
  for (int i = 0; i < kRows; ++i) {
    const double expect = q[i] > c[i] ? 1.0 / kRows : q[i] < c[i] ? -1.0 / kRows : 0.0;
    track(std::abs(l1_result.grad[i] - expect) * kRows, "L1 gradient");
  }

  long double bce = 0.0L;
  for (int i = 0; i < kRows; ++i) {
    const long double pi = std::clamp(q[i], nn::kProbClamp, 1.0 - nn::kProbClamp);
    bce -= o[i] * std::log(pi) + (1.0L - o[i]) * std::log(1.0L - pi);
  }
  track(std::abs(nn::binary_cross_entropy<double>(qa, o).loss - static_cast<double>(bce / kRows)), "BCE");

  const double elapsed = seconds_since(t0);
  return {worst <= 1e-12 && elapsed < 10.0,
          "max deviation " + num(worst) + (why.empty() ? "" : " (" + why + ")") + ", " + num(elapsed, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Gradient correctness

nn::LossResult<double> weighted_sum(const Tensor<double>& out) {
  nn::LossResult<double> r{0.0, Tensor<double>(out.shape())};
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double w = 0.5 + 0.37 * static_cast<double>(i % 7);
    r.loss += w * out[i];
    r.grad[i] = w;
  }
  return r;
}

nn::LossFn mean_bce(int n) {
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) y[i] = i % 2;
  return [y](const Tensor<double>& out) { return nn::binary_cross_entropy<double>(out, y); };
}

std::uint64_t composite_signature(const nn::Graph& g, const nn::ParamStore<double>& gp, const nn::Graph& d,
                                  const nn::ParamStore<double>& dp, const Tensor<double>& x, const Tensor<double>& m,
                                  const Tensor<double>& z) {
  const std::vector<Tensor<double>> gin{m, z};
  const auto gen = nn::forward<double>(g, gp, gin, nn::Mode::train, 0);
  const std::vector<Tensor<double>> fin{gen.output, m};
  const std::vector<Tensor<double>> rin{x, m};
  const auto fake = nn::forward<double>(d, dp, fin, nn::Mode::train, 0);
  const auto real = nn::forward<double>(d, dp, rin, nn::Mode::train, 0);
  std::uint64_t h = 0;
  for (std::size_t i = 0; i < x.size(); ++i) h = mix64(h ^ (gen.output[i] > x[i] ? 1u : 2u));
  return mix64(nn::kink_signature(g, gen.cache) ^
               mix64(nn::kink_signature(d, fake.cache) ^ nn::kink_signature(d, real.cache)) ^ h);
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Check {
    std::string name;
    nn::GradCheckResult r;
  };
  std::vector<Check> checks;
  constexpr int kCoords = 64;

  CganConfig cg;
  cg.generator.widths = {3, 4};
  cg.generator.bottleneck = 5;
  cg.discriminator.widths = {3, 4};
  const auto g = build_generator(cg.generator, 3, 8, 8);
  const auto d = build_discriminator(cg.discriminator, 3, 8, 8);
  auto gp = nn::init_params<double>(g, 11);
  auto dp = nn::init_params<double>(d, 12);
  const auto z = random_tensor<double>({2, 8, 8, 3}, 13);
  const auto m = random_tensor<double>({2, 8, 8, 5}, 14);
  const auto x = random_tensor<double>({2, 8, 8, 3}, 15);
  const std::vector<Tensor<double>> gin{m, z};
  checks.push_back({"generator", nn::grad_check(g, gp, gin, weighted_sum, 1e-5, kCoords, 1)});
  const std::vector<Tensor<double>> din{x, m};
  checks.push_back({"discriminator", nn::grad_check(d, dp, din, weighted_sum, 1e-5, kCoords, 2)});

  for (bool non_saturating : {false, true}) {
    auto cfg = cg;
    cfg.non_saturating = non_saturating;
    cfg.lambda = 0.7;
    nn::Objective obj = [&](const nn::ParamStore<double>& p, bool with_grads) {
      nn::ObjectiveValue v;
      v.loss = generator_objective(g, p, d, dp, x, m, z, cfg, with_grads ? &v.grads : nullptr);
      v.signature = composite_signature(g, p, d, dp, x, m, z);
      return v;
    };
    checks.push_back({non_saturating ? "generator composite (non-saturating)" : "generator composite",
                      nn::grad_check(gp, obj, 1e-5, kCoords, 3)});
  }
  nn::Objective dobj = [&](const nn::ParamStore<double>& p, bool with_grads) {
    nn::ObjectiveValue v;
    v.loss = discriminator_objective(g, gp, d, p, x, m, z, with_grads ? &v.grads : nullptr);
    v.signature = composite_signature(g, gp, d, p, x, m, z);
    return v;
  };
  checks.push_back({"discriminator objective", nn::grad_check(dp, dobj, 1e-5, kCoords, 4)});

  EncoderSpec es;
  es.widths = {3, 4};
  es.channels = 2;
  es.patch = 8;
  const auto enc = build_encoder_pretrainer(es);
  auto ep = nn::init_params<double>(enc, 70);
  const auto ein = random_tensor<double>({4, 8, 8, 2}, 71);
  checks.push_back({"encoder", nn::grad_check(enc, ep, std::span<const Tensor<double>>(&ein, 1), mean_bce(4), 1e-5,
                                              kCoords, 72)});

  ClassifierSpec cs;
  cs.conv_kernels = 6;
  cs.hidden = 5;
  for (int arity : {2, 3, 4}) {
    const auto cls = build_classifier(cs, 7, arity);
    auto cp = nn::init_params<double>(cls, 73);
    std::vector<Tensor<double>> in{random_tensor<double>({6, 1, arity, 7}, 74),
                                   random_tensor<double>({6, 1, 1, 3}, 75)};
    checks.push_back({"classifier arity " + std::to_string(arity),
                      nn::grad_check(cls, cp, in, mean_bce(6), 1e-5, kCoords, 76, nn::Mode::train)});
  }

  MlpSpec ms;
  ms.hidden1 = 6;
  ms.hidden2 = 5;
  const auto mlp = build_mlp(ms, MlpModel::kMlpFeatures);
  auto mp = nn::init_params<double>(mlp, 77);
  const auto min = random_tensor<double>({8, 1, 1, MlpModel::kMlpFeatures}, 78);
  checks.push_back({"mlp", nn::grad_check(mlp, mp, std::span<const Tensor<double>>(&min, 1), mean_bce(8), 1e-5, kCoords,
                                          79, nn::Mode::train)});

  bool ok = true;
  double worst = 0.0;
  int fewest = 1 << 30;
  std::string failed;
  for (const auto& c : checks) {
    const bool good = c.r.checked >= 50 && c.r.max_rel_error < 1e-4;
    if (!good) failed += " " + c.name;
    ok = ok && good;
    worst = std::max(worst, c.r.max_rel_error);
    fewest = std::min(fewest, c.r.checked);
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 120.0;
  return {ok, std::to_string(checks.size()) + " objectives, max rel error " + num(worst) + ", min coords " +
                  std::to_string(fewest) + ", " + num(elapsed, 3) + " s" + (failed.empty() ? "" : "; failing:" + failed)};
}

// ---------------------------------------------------------------------------
// 3. CGAN contracts

Outcome cgan_contracts() {
  float lowest = 1.0f;
  for (int draw = 0; draw < 1000; ++draw) {
    const auto x = random_tensor<float>({1, 8, 8, 3}, 500 + draw, -2.0, 1.0);
    const auto z = make_initial_state(x, CganGroup::a, 0.5, 9000 + draw);
    for (float v : z.values()) lowest = std::min(lowest, v);
  }

  constexpr int kDraws = 100000;
  const Tensor<float> xs({kDraws, 1, 1, 7});
  const auto zs = make_initial_state(xs, CganGroup::b, 0.5, 17);
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const double v = zs.at(i, 0, 0, 0) - xs.at(i, 0, 0, 0);
    s += v;
    ss += v * v;
  }
  const double sd = std::sqrt(ss / kDraws - (s / kDraws) * (s / kDraws));

  auto cfg = config_named("desk").cgan;
  cfg.seed = 31;
  const auto a = make_cgan(cfg, CganGroup::a);
  const auto b = make_cgan(cfg, CganGroup::b);
  const auto stack = random_tensor<float>({2, 64, 64, kNumDiagnostics}, 32, -2.0, 2.0);
  const auto members = generate_members(a, b, cfg, stack, 3, 33);
  bool shapes = members.size() == 3;
  bool explicit_equal = true;
  for (const auto& mem : members) {
    shapes = shapes && mem.shape() == nn::Shape{2, 64, 64, kNumDiagnostics};
    if (!shapes) break;
    for (PredictorId id : conditional_predictors()) {
      const int ch = static_cast<int>(id);
      for (int n = 0; n < 2; ++n)
        for (int y = 0; y < 64; ++y)
          for (int x = 0; x < 64; ++x) explicit_equal = explicit_equal && mem.at(n, y, x, ch) == stack.at(n, y, x, ch);
    }
  }
  const bool ok = lowest >= 0.0f && std::abs(sd - 0.5) <= 0.005 && shapes && explicit_equal;
  return {ok, "min clamped value " + num(lowest) + ", noise sd " + num(sd, 6) + ", member shapes " +
                  (shapes ? "64x64x15" : "wrong") + ", explicit channels " + (explicit_equal ? "bit-equal" : "differ")};
}

// ---------------------------------------------------------------------------
// Desk experiment shared by criteria 4, 5, 6 and 8.

struct DeskRun {
  ExperimentConfig cfg;
  fs::path dir;
  double seconds = 0.0;  // run time, 0 when reused
  std::string error;
};

bool storm_visible(const std::vector<StormObject>& storms, const PatchOrigin& o, int hour) {
  return std::any_of(storms.begin(), storms.end(), [&](const StormObject& s) {
    return s.hour == hour && s.row >= o.row0 + 4 && s.row < o.row0 + 60 && s.col >= o.col0 + 4 && s.col < o.col0 + 60;
  });
}

NormalizerSet run_normalizers(const fs::path& dir) {
  return NormalizerSet::from_text(read_file(RunPaths{dir}.normalizers()));
}

SynthArchive run_archive(const DeskRun& run) {
  return load_archive(ArrayStore::load(RunPaths{run.dir}.archive()), run.cfg.synth_config());
}

std::vector<float> channel(const Tensor<float>& t, PredictorId id) {
  const auto s = t.shape();
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(s.h) * s.w);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) out.push_back(t.at(0, y, x, static_cast<int>(id)));
  return out;
}

// 4. Pure L1 regression on a fixed batch of 32 storm patches from training days.
Outcome l1_regression(const DeskRun& run) {
  if (!run.error.empty()) return {false, "desk run failed: " + run.error};
  const auto archive = run_archive(run);
  const auto norms = run_normalizers(run.dir);
  const auto index = build_patch_index(run.cfg.synth.fine_grid(), run.cfg.synth.coarse_grid());
  constexpr int kBatch = 32;
  Tensor<float> batch({kBatch, 64, 64, kNumDiagnostics});
  int filled = 0;
  for (int d : archive.train) {
    for (int h = 0; h < kHoursPerDay && filled < kBatch; ++h) {
      std::vector<int> cells;
      for (int c = 0; c < static_cast<int>(index.origins.size()) && filled + static_cast<int>(cells.size()) < kBatch; ++c)
        if (storm_visible(archive.storms[d], index.origins[c], h)) cells.push_back(c);
      if (cells.empty()) continue;
      const auto stack = normalized_stack(synth_hour(archive.cfg, archive.days[d], h, archive.storms[d]), norms);
      const auto patches = stack_patches(stack, index, cells);
      for (std::size_t k = 0; k < cells.size(); ++k)
        std::copy(patches.sample(static_cast<int>(k)), patches.sample(static_cast<int>(k)) + patches.shape().per_sample(),
                  batch.sample(filled++));
    }
    if (filled == kBatch) break;
  }
  if (filled < kBatch) return {false, "only " + std::to_string(filled) + " storm patches in the training days"};

  CganConfig cfg = run.cfg.cgan;
  cfg.adversarial = false;
  cfg.seed = 41;
  const auto m = condition_channels(batch);
  std::string detail;
  bool ok = true;
  for (auto group : {CganGroup::a, CganGroup::b}) {
    auto model = make_cgan(cfg, group);
    const auto x = group_channels(batch, group);
    const auto z = make_initial_state(x, group, cfg.noise_sigma, 42);
    auto l_r = [&] { return nn::l1_loss<float>(generator_forward(model.generator, model.g_params, z, m, true), x).loss; };
    const double before = l_r();
    for (int step = 0; step < 200; ++step) train_cgan_step(model, x, m, cfg, cfg.learning_rate, 4300 + step);
    const double after = l_r();
    ok = ok && after < 0.5 * before;
    detail += std::string(detail.empty() ? "" : ", ") + "group " + group_name(group) + " L_R " + num(before) + " -> " +
              num(after) + " (" + num(100.0 * after / before, 3) + "%)";
  }
  return {ok, detail + ", lr " + num(cfg.learning_rate)};
}

// 5. Ensemble-mean BSS recomputed from the stored forecasts, labels and
// climatology, checked against the run's own summary table.
Outcome closed_loop_skill(const DeskRun& run) {
  if (!run.error.empty()) return {false, "desk run failed: " + run.error};
  const RunPaths paths{run.dir};
  const auto archive = run_archive(run);
  const auto clim = load_climatology(ArrayStore::load(paths.climatology()), "climatology/");
  std::map<int, int> day_index;
  for (std::size_t i = 0; i < archive.days.size(); ++i) day_index[archive.days[i].serial] = static_cast<int>(i);
  const auto summary = read_keyed_csv(paths.metrics() / "bss_summary.csv");

  bool ok = static_cast<int>(archive.verify.size()) >= 20 && run.cfg.ensemble.cgan_members == 10 &&
            run.cfg.ensemble.dropout_members == 10;
  std::string detail;
  for (auto method : {EnsembleMethod::cgan, EnsembleMethod::cnn, EnsembleMethod::mlp}) {
    const auto fc = load_forecast(ArrayStore::load(paths.forecast_store(method)), "forecast/");
    long double se = 0.0L, se_clim = 0.0L;
    std::vector<long double> se_member(fc.n_members, 0.0L);
    for (std::size_t r = 0; r < fc.rows(); ++r) {
      const auto& key = fc.keys[r];
      const int di = day_index.at(key.day.serial);
      const double o = archive.labels.at(di, key.window, key.cell);
      const double c = climatology_lookup(clim, key.cell, key.day.day_of_year(), key.window);
      const auto members = fc.row_members(r);
      double mean = 0.0;
      for (int k = 0; k < fc.n_members; ++k) {
        mean += members[k];
        se_member[k] += (members[k] - o) * (members[k] - o);
      }
      mean /= fc.n_members;
      se += (mean - o) * (mean - o);
      se_clim += (c - o) * (c - o);
    }
    const double bss = static_cast<double>(1.0L - se / se_clim);
    std::vector<double> member_bss;
    for (auto v : se_member) member_bss.push_back(static_cast<double>(1.0L - v / se_clim));
    const double med = median(member_bss);
    const std::string name = method_name(method);
    const double reported = std::stod(summary.at(name).at("bss"));
    const bool agrees = std::abs(reported - bss) <= 1e-8;
    const bool good = bss > 0.0 && bss >= med && agrees && fc.n_members == 10;
    ok = ok && good;
    detail += std::string(detail.empty() ? "" : ", ") + name + " BSS " + num(bss) + " (member median " + num(med) + ")" +
              (agrees ? "" : " [summary says " + num(reported) + "]");
  }
  if (run.seconds > 0.0) {
    ok = ok && run.seconds < 1800.0;
    detail += ", run " + num(run.seconds / 60.0, 3) + " min";
  } else {
    detail += ", reused run";
  }
  return {ok, std::to_string(archive.verify.size()) + " verification days, " + detail};
}

// 6. Correlations of generated fields on storm patches of the verification days.
Outcome conditioning_fidelity(const DeskRun& run) {
  if (!run.error.empty()) return {false, "desk run failed: " + run.error};
  const auto archive = run_archive(run);
  const auto trained = load_trained_run(run.cfg, run.dir);
  const auto index = build_patch_index(run.cfg.synth.fine_grid(), run.cfg.synth.coarse_grid());
  const int k = run.cfg.ensemble.cgan_members;
  std::size_t rows = 0, uh_positive = 0, sign_match = 0;
  for (int d : archive.verify) {
    std::vector<std::pair<int, int>> candidates;
    for (int h = 0; h < kHoursPerDay; ++h)
      for (int c = 0; c < static_cast<int>(index.origins.size()); ++c)
        if (storm_visible(archive.storms[d], index.origins[c], h)) candidates.push_back({h, c});
    Rng rng(derive_seed(606, {static_cast<std::uint64_t>(d)}));
    rng.shuffle(candidates.begin(), candidates.end());
    candidates.resize(std::min<std::size_t>(candidates.size(), 8));
    for (const auto& [h, c] : candidates) {
      const auto stack = normalized_stack(synth_hour(archive.cfg, archive.days[d], h, archive.storms[d]), trained.norms);
      const std::vector<int> cell{c};
      const auto real = stack_patches(stack, index, cell);
      const auto real_cape = channel(real, PredictorId::cape), real_cin = channel(real, PredictorId::cin);
      const double real_r = pattern_correlation(std::span<const float>(real_cape), std::span<const float>(real_cin));
      const auto members = generate_members(trained.cgan.a, trained.cgan.b, trained.cgan.cfg, real, k,
                                            derive_seed(607, {static_cast<std::uint64_t>(d),
                                                              static_cast<std::uint64_t>(h),
                                                              static_cast<std::uint64_t>(c)}));
      const auto uh = channel(real, PredictorId::uh_2_5km);
      for (const auto& mem : members) {
        ++rows;
        const auto cref = channel(mem, PredictorId::cref);
        const auto cape = channel(mem, PredictorId::cape), cin = channel(mem, PredictorId::cin);
        try {
          uh_positive += pattern_correlation(std::span<const float>(cref), std::span<const float>(uh)) > 0.0;
        } catch (const Error&) {
        }
        try {
          const double g = pattern_correlation(std::span<const float>(cape), std::span<const float>(cin));
          sign_match += std::signbit(g) == std::signbit(real_r);
        } catch (const Error&) {
        }
      }
    }
  }
  if (rows == 0) return {false, "no storm patches in the verification days"};
  const double f_uh = static_cast<double>(uh_positive) / rows, f_sign = static_cast<double>(sign_match) / rows;
  return {f_uh >= 0.8 && f_sign >= 0.8, std::to_string(rows) + " generated patches: CREF~UH positive " + num(f_uh) +
                                           ", CAPE/CIN sign match " + num(f_sign)};
}

// ---------------------------------------------------------------------------
// 7. Uncertainty metrics

Outcome uncertainty_metrics() {
  // Discard test: spread ranks equal error ranks.
  constexpr int kN = 2000;
  std::vector<double> mean(kN), spread(kN), o(kN, 0.0);
  for (int i = 0; i < kN; ++i) {
    mean[i] = 0.01 + 0.9 * i / kN;
    spread[i] = mean[i];
  }
  const auto fractions = default_discard_fractions();
  const double mf = discard_test(mean, spread, o, fractions).mf;

  // Spread equal to RMSE in every bin: two members at mean -/+ s with the
  // mean exactly s away from the observation.
  VerificationTable table;
  table.grid_rows = 1;
  table.grid_cols = 1;
  for (int level = 0; level < 10; ++level) {
    const double s = 0.02 * (level + 1);
    for (int i = 0; i < 1000; ++i) {
      VerificationRow row;
      row.obs = static_cast<std::uint8_t>(i % 2);
      row.members = row.obs ? std::vector<double>{1.0 - 2.0 * s, 1.0} : std::vector<double>{0.0, 2.0 * s};
      row.mean = 0.5 * (row.members[0] + row.members[1]);
      row.clim = 0.5;
      row.window = i % 24;
      table.rows.push_back(row);
    }
  }
  const double ssrel = spread_skill(table, 10).ssrel;

  // Calibrated forecasts: observed frequencies should cover the forecast mean.
  Rng rng(707);
  constexpr int kRows = 100000;
  std::vector<double> p(kRows), y(kRows);
  for (int i = 0; i < kRows; ++i) {
    p[i] = rng.uniform();
    y[i] = rng.bernoulli(p[i]) ? 1.0 : 0.0;
  }
  const auto rel = reliability_curve(p, y, 20, 100, 708);
  int occupied = 0, covered = 0;
  for (const auto& b : rel.bins) {
    if (b.count == 0) continue;
    ++occupied;
    covered += b.mean_forecast >= b.ci_low && b.mean_forecast <= b.ci_high;
  }
  const double coverage = occupied ? static_cast<double>(covered) / occupied : 0.0;
  return {mf == 1.0 && ssrel < 1e-12 && coverage >= 0.9,
          "MF " + num(mf, 6) + ", SSREL " + num(ssrel) + ", reliability coverage " + std::to_string(covered) + "/" +
              std::to_string(occupied) + " bins"};
}

// ---------------------------------------------------------------------------
// 8. Permutation importance on the desk run's MLP and verification inputs.

std::vector<int> mlp_columns(PredictorId id) {
  const int p = static_cast<int>(id);
  if (p < kNumDiagnostics) return {4 * p, 4 * p + 1, 4 * p + 2, 4 * p + 3};
  return {4 * kNumDiagnostics + (p - kNumDiagnostics)};
}

Outcome permutation_check(const DeskRun& run) {
  if (!run.error.empty()) return {false, "desk run failed: " + run.error};
  const RunPaths paths{run.dir};
  const auto trained = load_trained_run(run.cfg, run.dir);
  const auto archive = run_archive(run);
  constexpr int kF = MlpModel::kMlpFeatures;
  const auto features = ArrayStore::load(paths.verify_inputs()).get<float>("mlp_features");
  const auto fc = load_forecast(ArrayStore::load(paths.forecast_store(EnsembleMethod::mlp)), "forecast/");
  const std::size_t n = features.size() / kF;
  if (n != fc.rows()) return {false, "verification inputs do not match the MLP forecast rows"};
  std::map<int, int> day_index;
  for (std::size_t i = 0; i < archive.days.size(); ++i) day_index[archive.days[i].serial] = static_cast<int>(i);
  std::vector<double> obs(n);
  for (std::size_t r = 0; r < n; ++r)
    obs[r] = archive.labels.at(day_index.at(fc.keys[r].day.serial), fc.keys[r].window, fc.keys[r].cell);

  const int members = run.cfg.ensemble.dropout_members;
  auto predictor_for = [&](const std::vector<float>& x) -> PermutedPredict {
    return [&, x](PredictorId id, std::span<const int> perm) {
      Tensor<float> t({static_cast<int>(n), 1, 1, kF}, x);
      for (int col : mlp_columns(id))
        for (std::size_t i = 0; i < n; ++i) t[i * kF + col] = x[static_cast<std::size_t>(perm[i]) * kF + col];
      std::vector<double> mean(n, 0.0);
      for (int k = 0; k < members; ++k) {
        const auto p = mlp_forward(trained.models.mlp, t, derive_seed(808, {static_cast<std::uint64_t>(k)}));
        for (std::size_t i = 0; i < n; ++i) mean[i] += p[i];
      }
      for (auto& v : mean) v /= members;
      return mean;
    };
  };

  const auto driving = permutation_importance(predictor_for(features), obs, PredictorId::uh_2_5km, 20, 809);
  const int positive = static_cast<int>(std::count_if(driving.deltas.begin(), driving.deltas.end(), [](double d) { return d > 0.0; }));

  auto constant = features;
  for (int col : mlp_columns(PredictorId::mslp))
    for (std::size_t i = 0; i < n; ++i) constant[i * kF + col] = 0.25f;
  const auto flat = permutation_importance(predictor_for(constant), obs, PredictorId::mslp, 20, 810);
  double largest = 0.0;
  for (double d : flat.deltas) largest = std::max(largest, std::abs(d));

  return {positive >= 19 && largest <= 1e-12,
          "UH 2-5 km: " + std::to_string(positive) + "/20 shuffles with positive delta BS (mean " +
              num(driving.mean_delta) + "), constant channel max |delta BS| " + num(largest)};
}

// ---------------------------------------------------------------------------
// 9. Reproducibility of the tiny run in single-threaded mode.

Outcome reproducibility(const fs::path& work) {
  unsetenv("SEVERE_WORKERS");
  const auto cfg = config_named("tiny");
  std::vector<fs::path> dirs{work / "tiny_a", work / "tiny_b"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    fs::create_directories(d);
    run_experiment(cfg, d);
  }
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dirs[0] / "metrics")) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  std::size_t other = 0;
  for (const auto& e : fs::directory_iterator(dirs[1] / "metrics")) other += e.is_regular_file();
  int differing = 0;
  for (const auto& name : names)
    differing += read_file(dirs[0] / "metrics" / name) != read_file(dirs[1] / "metrics" / name);
  return {differing == 0 && other == names.size() && !names.empty(),
          std::to_string(names.size()) + " metric files, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string desk_run;
  std::string work = (fs::temp_directory_path() / "severe_acceptance").string();
  app.add_option("--desk-run", desk_run, "Reuse a finished desk run instead of running one");
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  std::vector<int> only;
  app.add_option("--only", only, "Criterion numbers to run (all by default)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  DeskRun desk;
  bool desk_ready = false;
  auto ensure_desk = [&]() -> const DeskRun& {
    if (desk_ready) return desk;
    desk_ready = true;
    desk.cfg = config_named("desk");
    try {
      if (!desk_run.empty()) {
        desk.dir = desk_run;
        const auto m = RunManifest::load(RunPaths{desk.dir}.manifest());
        require(m.config_digest == desk.cfg.digest(), Errc::config_error, "desk run was made from another config");
        require(m.completed.size() == all_stages().size(), Errc::config_error, "desk run is incomplete");
      } else {
        desk.dir = fs::path(work) / "desk";
        fs::remove_all(desk.dir);
        fs::create_directories(desk.dir);
        std::cerr << "running the desk experiment in " << desk.dir.string() << "\n";
        const auto t0 = std::chrono::steady_clock::now();
        run_experiment(desk.cfg, desk.dir);
        desk.seconds = seconds_since(t0);
      }
    } catch (const std::exception& e) {
      desk.error = e.what();
    }
    return desk;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric identities", metric_identities},
      {"gradient correctness", gradient_correctness},
      {"CGAN contracts", cgan_contracts},
      {"L1-only regression", [&] { return l1_regression(ensure_desk()); }},
      {"closed-loop skill", [&] { return closed_loop_skill(ensure_desk()); }},
      {"conditioning fidelity", [&] { return conditioning_fidelity(ensure_desk()); }},
      {"uncertainty metrics", uncertainty_metrics},
      {"permutation importance", [&] { return permutation_check(ensure_desk()); }},
      {"reproducibility", [&] { return reproducibility(work); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && std::find(only.begin(), only.end(), static_cast<int>(i + 1)) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    failures += !r.pass;
    std::cout << "criterion " << i + 1 << " " << (r.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": "
              << r.detail << " [" << num(seconds_since(t0), 3) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
