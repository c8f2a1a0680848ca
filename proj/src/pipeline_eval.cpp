#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "pipeline_internal.hpp"
#include "severe/error.hpp"
#include "severe/log.hpp"
#include "severe/parallel.hpp"
#include "severe/rng.hpp"
#include "severe/verification.hpp"

namespace severe::detail {

namespace fs = std::filesystem;
using nn::Tensor;

namespace {

constexpr std::array<EnsembleMethod, 3> kMethods{EnsembleMethod::cgan, EnsembleMethod::cnn, EnsembleMethod::mlp};

void save_forecast_files(const RunPaths& paths, const EnsembleForecast& fc) {
  write_forecast_csv(paths.forecast_csv(fc.method), fc);
  ArrayStore store;
  save_forecast(store, "forecast/", fc);
  store.save(paths.forecast_store(fc.method));
}

EnsembleForecast load_forecast_file(const RunPaths& paths, EnsembleMethod m) {
  const auto path = paths.forecast_store(m);
  require(fs::exists(path), Errc::io_error, "no " + std::string(method_name(m)) + " forecast; run predict first");
  return load_forecast(ArrayStore::load(path), "forecast/");
}

struct VerifyContext {
  SynthArchive archive;
  Climatology clim;
  CoarseGridSpec coarse;
  std::map<int, int> day_index;     // date serial -> archive day index
  std::map<int, int> verify_index;  // archive day index -> position in the verification block
};

VerificationTable make_table(const VerifyContext& vc, const EnsembleForecast& fc) {
  VerificationTable t;
  t.grid_rows = vc.coarse.n_rows;
  t.grid_cols = vc.coarse.n_cols;
  t.rows.reserve(fc.rows());
  for (std::size_t r = 0; r < fc.rows(); ++r) {
    const auto& key = fc.keys[r];
    const auto it = vc.day_index.find(key.day.serial);
    require(it != vc.day_index.end() && vc.verify_index.count(it->second), Errc::key_out_of_range,
            "forecast day " + key.day.iso() + " is not a verification day");
    VerificationRow row;
    row.day = vc.verify_index.at(it->second);
    row.window = key.window;
    row.cell = key.cell;
    const auto m = fc.row_members(r);
    row.members.assign(m.begin(), m.end());
    row.mean = fc.mean[r];
    row.obs = vc.archive.labels.at(it->second, key.window, key.cell);
    row.clim = climatology_lookup(vc.clim, key.cell, key.day.day_of_year(), key.window);
    t.rows.push_back(std::move(row));
  }
  return t;
}

VerificationTable window_subset(const VerificationTable& t, int window) {
  VerificationTable out{t.grid_rows, t.grid_cols, {}};
  for (const auto& r : t.rows)
    if (r.window == window) out.rows.push_back(r);
  return out;
}

double member_bss(const VerificationTable& t, int k, int window) {
  std::vector<double> p, o, c;
  for (const auto& r : t.rows)
    if (window < 0 || r.window == window) {
      p.push_back(r.members[k]);
      o.push_back(r.obs);
      c.push_back(r.clim);
    }
  return brier_skill_score(p, o, c);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Category combination of the reports behind each positive (day, window, cell).
std::map<std::tuple<int, int, int>, std::uint8_t> report_categories(const VerifyContext& vc) {
  std::map<std::tuple<int, int, int>, std::uint8_t> out;
  for (const auto& rep : vc.archive.reports) {
    const auto it = vc.day_index.find(rep.day.serial);
    if (it == vc.day_index.end() || !vc.verify_index.count(it->second)) continue;
    const int cell = nearest_cell(vc.coarse, {rep.lat, rep.lon});
    if (cell < 0) continue;
    for (int s : report_window_starts(rep.hour))
      out[{it->second, s, cell}] |= static_cast<std::uint8_t>(1u << static_cast<int>(rep.category));
  }
  return out;
}

std::string category_label(std::uint8_t mask) {
  std::string s;
  for (auto c : {ReportCategory::tornado, ReportCategory::hail, ReportCategory::wind})
    if (mask & (1u << static_cast<int>(c))) s += (s.empty() ? "" : "+") + std::string(category_name(c));
  return s.empty() ? "unattributed" : s;
}

std::vector<int> mlp_columns(PredictorId id) {
  const int p = static_cast<int>(id);
  if (p < kNumDiagnostics) return {4 * p, 4 * p + 1, 4 * p + 2, 4 * p + 3};
  return {4 * kNumDiagnostics + (p - kNumDiagnostics)};
}

double safe_correlation(std::span<const float> a, std::span<const float> b) {
  try {
    return pattern_correlation(a, b);
  } catch (const Error& e) {
    if (e.code() == Errc::zero_variance) return std::numeric_limits<double>::quiet_NaN();
    throw;
  }
}

std::vector<float> channel_of(const Tensor<float>& t, PredictorId id) {
  const auto& s = t.shape();
  std::vector<float> out(static_cast<std::size_t>(s.h) * s.w);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t[i * s.c + channel(id)];
  return out;
}

void write_fidelity(const ExperimentConfig& cfg, const RunPaths& paths, const VerifyContext& vc,
                    const TrainedRun& run) {
  const auto index = build_patch_index(vc.archive.cfg.fine_grid(), vc.coarse);
  const auto seed = cfg.stage_seed("verify");
  struct Pair {
    PredictorId a, b;
  };
  const std::array<std::pair<const char*, Pair>, 4> pairs{{{"cape_cin", {PredictorId::cape, PredictorId::cin}},
                                                          {"cref_uh", {PredictorId::cref, PredictorId::uh_2_5km}},
                                                          {"cref_dewpoint", {PredictorId::cref, PredictorId::dewpoint_2m}},
                                                          {"srh", {PredictorId::srh_0_1km, PredictorId::srh_0_3km}}}};
  const auto& days = vc.archive.verify;
  std::vector<std::vector<std::string>> lines(days.size());
  parallel_for(days.size(), [&](std::size_t i) {
    const int d = days[i];
    std::vector<std::pair<int, int>> candidates;  // (hour, cell)
    for (int h = 0; h < kHoursPerDay; ++h)
      for (int c = 0; c < vc.coarse.n_cells(); ++c)
        if (storm_in_footprint(vc.archive.storms[d], index.origins[c], h)) candidates.push_back({h, c});
    Rng rng(derive_seed(seed, {0xf1d, static_cast<std::uint64_t>(d)}));
    rng.shuffle(candidates.begin(), candidates.end());
    candidates.resize(std::min<std::size_t>(candidates.size(), cfg.verify.fidelity_patches_per_day));
    std::sort(candidates.begin(), candidates.end());
    int last_hour = -1;
    Tensor<float> stack;
    for (const auto& [h, c] : candidates) {
      if (h != last_hour) {
        stack = normalized_stack(synth_hour(vc.archive.cfg, vc.archive.days[d], h, vc.archive.storms[d]), run.norms);
        last_hour = h;
      }
      const std::vector<int> cell{c};
      const auto real = stack_patches(stack, index, cell);
      const auto members = generate_members(run.cgan.a, run.cgan.b, run.cgan.cfg, real, cfg.ensemble.cgan_members,
                                            derive_seed(seed, {0xf1e, static_cast<std::uint64_t>(d),
                                                               static_cast<std::uint64_t>(h),
                                                               static_cast<std::uint64_t>(c)}));
      std::vector<double> real_r;
      for (const auto& [name, p] : pairs) real_r.push_back(safe_correlation(channel_of(real, p.a), channel_of(real, p.b)));
      for (std::size_t k = 0; k < members.size(); ++k) {
        std::string line = vc.archive.days[d].iso() + "," + std::to_string(h) + "," + std::to_string(c) + "," +
                           std::to_string(k);
        for (std::size_t j = 0; j < pairs.size(); ++j) {
          const auto& p = pairs[j].second;
          const double g = safe_correlation(channel_of(members[k], p.a), channel_of(members[k], p.b));
          line += "," + fmt(real_r[j]) + "," + fmt(g);
        }
        lines[i].push_back(line);
      }
    }
  });
  std::string header = "day,hour,cell,member";
  for (const auto& [name, p] : pairs) header += std::string(",real_") + name + ",gen_" + name;
  CsvWriter out(paths.metrics() / "cgan_fidelity.csv", header);
  for (const auto& day_lines : lines)
    for (const auto& l : day_lines) out.row(l);
  out.close();
}

void write_importance(const ExperimentConfig& cfg, const RunPaths& paths, const TrainedRun& run,
                      const VerificationTable& mlp_table) {
  const auto store = ArrayStore::load(paths.verify_inputs());
  const auto x = store.get<float>("mlp_features");
  constexpr int kF = MlpModel::kMlpFeatures;
  const std::size_t n = x.size() / kF;
  require(n == mlp_table.rows.size(), Errc::shape_mismatch, "verification inputs do not match the MLP forecast");
  const auto obs = mlp_table.obs();
  const auto seed = cfg.stage_seed("verify");
  const int members = cfg.ensemble.dropout_members;

  const PermutedPredict predict = [&](PredictorId id, std::span<const int> perm) {
    Tensor<float> t({static_cast<int>(n), 1, 1, kF}, x);
    const auto cols = mlp_columns(id);
    for (std::size_t i = 0; i < n; ++i)
      for (int col : cols) t[i * kF + col] = x[static_cast<std::size_t>(perm[i]) * kF + col];
    std::vector<double> mean(n, 0.0);
    for (int k = 0; k < members; ++k) {
      const auto p = mlp_forward(run.models.mlp, t, derive_seed(seed, {0x1a9, static_cast<std::uint64_t>(k)}));
      for (std::size_t i = 0; i < n; ++i) mean[i] += p[i];
    }
    for (auto& v : mean) v /= members;
    return mean;
  };

  CsvWriter out(paths.metrics() / "permutation_importance.csv",
                "predictor,baseline_bs,mean_delta,min_delta,max_delta,positive_shuffles");
  for (int p = 0; p < kNumPredictors; ++p) {
    const auto id = static_cast<PredictorId>(p);
    const auto imp = permutation_importance(predict, obs, id, cfg.verify.importance_shuffles,
                                            derive_seed(seed, {0x1aa, static_cast<std::uint64_t>(p)}));
    const auto [lo, hi] = std::minmax_element(imp.deltas.begin(), imp.deltas.end());
    const auto positive = static_cast<int>(std::count_if(imp.deltas.begin(), imp.deltas.end(), [](double d) { return d > 0.0; }));
    out.row(predictor_name(id), imp.baseline_bs, imp.mean_delta, *lo, *hi, positive);
  }
  out.close();
}

}  // namespace

void run_predict(const ExperimentConfig& cfg, const RunPaths& paths) {
  fs::create_directories(paths / "forecasts");
  const auto run = load_trained_run(cfg, paths.root);
  const auto archive = load_run_archive(cfg, paths);
  const auto seed = cfg.stage_seed("predict");
  CganEnsembleOptions opt;
  opt.members = cfg.ensemble.cgan_members;
  opt.cross_product = cfg.ensemble.cross_product;
  opt.dropout_draws = cfg.ensemble.cross_draws;

  EnsembleForecast cgan, cnn, mlp;
  std::vector<float> inputs;
  for (int d : archive.verify) {
    const auto input = make_day_input(run.synth, run.norms, archive.days[d]);
    cgan.append(cgan_ensemble_predict(run.cgan, run.models, input, opt, seed));
    cnn.append(cnn_ensemble_predict(run.models, input, cfg.ensemble.dropout_members, seed));
    mlp.append(mlp_ensemble_predict(run.models, input, cfg.ensemble.dropout_members, seed));
    const auto f = day_mlp_features(input);
    inputs.insert(inputs.end(), f.begin(), f.end());
    log_info("predicted ", archive.days[d].iso());
  }
  for (const auto* fc : {&cgan, &cnn, &mlp}) save_forecast_files(paths, *fc);
  ArrayStore store;
  store.put<float>("mlp_features",
                   {static_cast<std::int64_t>(mlp.rows()), static_cast<std::int64_t>(MlpModel::kMlpFeatures)}, inputs);
  store.save(paths.verify_inputs());
}

void run_verify(const ExperimentConfig& cfg, const RunPaths& paths) {
  fs::create_directories(paths.metrics());
  VerifyContext vc;
  vc.archive = load_run_archive(cfg, paths);
  {
    require(fs::exists(paths.climatology()), Errc::io_error, "no climatology; run synth-data first");
    vc.clim = load_climatology(ArrayStore::load(paths.climatology()), "climatology/");
  }
  vc.coarse = vc.archive.cfg.coarse_grid();
  for (std::size_t i = 0; i < vc.archive.days.size(); ++i) vc.day_index[vc.archive.days[i].serial] = static_cast<int>(i);
  for (std::size_t i = 0; i < vc.archive.verify.size(); ++i) vc.verify_index[vc.archive.verify[i]] = static_cast<int>(i);

  const auto seed = cfg.stage_seed("verify");
  const auto& vo = cfg.verify;
  std::map<EnsembleMethod, VerificationTable> tables;
  for (auto m : kMethods) tables[m] = make_table(vc, load_forecast_file(paths, m));

  // Ensemble-mean BSS by lead window.
  {
    std::map<EnsembleMethod, std::map<int, double>> by_window;
    for (auto m : kMethods) by_window[m] = aggregate_bss(tables[m], GroupBy::window);
    CsvWriter out(paths.metrics() / "bss_by_window.csv", "window,cgan,cnn,mlp");
    for (int s = 0; s < kHoursPerDay; ++s)
      out.row(s, by_window[EnsembleMethod::cgan].at(s), by_window[EnsembleMethod::cnn].at(s),
              by_window[EnsembleMethod::mlp].at(s));
    out.close();
  }

  CsvWriter members_out(paths.metrics() / "member_bss.csv", "method,window,member,bss");
  CsvWriter summary(paths.metrics() / "bss_summary.csv",
                    "method,members,rows,bs,bs_clim,bss,member_bss_median,member_bss_min,member_bss_max,"
                    "members_below_mean,rel,res,unc,ssrel,mf");
  CsvWriter reliability(paths.metrics() / "reliability.csv",
                        "method,bin,lower,upper,count,mean_forecast,observed,ci_low,ci_high");
  CsvWriter spread(paths.metrics() / "spread_skill.csv", "method,bin,spread_lower,count,mean_spread,rmse");
  CsvWriter discard(paths.metrics() / "discard.csv", "method,fraction,error");
  CsvWriter neighborhood(paths.metrics() / "neighborhood.csv", "method,cell_row,cell_col,bss,reports,masked,threshold");
  CsvWriter top(paths.metrics() / "top_decile.csv", "method,category,hits,events,fraction");
  const auto categories = report_categories(vc);

  for (auto m : kMethods) {
    const auto& t = tables[m];
    const std::string name = method_name(m);
    const int k_members = static_cast<int>(t.rows.front().members.size());
    const auto p = t.means(), o = t.obs(), c = t.clims();
    const double bss = aggregate_bss(t, GroupBy::all).at(-1);

    std::vector<double> overall(k_members);
    for (int k = 0; k < k_members; ++k) {
      overall[k] = member_bss(t, k, -1);
      members_out.row(name, "all", k, overall[k]);
    }
    for (int s = 0; s < kHoursPerDay; ++s)
      for (int k = 0; k < k_members; ++k) members_out.row(name, std::to_string(s), k, member_bss(t, k, s));

    const auto rel = reliability_curve(p, o, vo.reliability_bins, vo.bootstrap, derive_seed(seed, {0x7e1, static_cast<std::uint64_t>(m)}));
    for (std::size_t b = 0; b < rel.bins.size(); ++b) {
      const auto& bin = rel.bins[b];
      reliability.row(name, static_cast<int>(b), bin.lower, bin.upper, bin.count, bin.mean_forecast, bin.observed,
                      bin.ci_low, bin.ci_high);
    }

    double ssrel = std::numeric_limits<double>::quiet_NaN();
    if (k_members > 1) {
      const auto ss = spread_skill(t, vo.spread_bins);
      ssrel = ss.ssrel;
      for (std::size_t b = 0; b < ss.bins.size(); ++b)
        spread.row(name, static_cast<int>(b), ss.bins[b].spread_lower, ss.bins[b].count, ss.bins[b].mean_spread,
                   ss.bins[b].rmse);
    }
    const auto dc = discard_test(t, default_discard_fractions());
    for (std::size_t i = 0; i < dc.fractions.size(); ++i) discard.row(name, dc.fractions[i], dc.errors[i]);

    const double threshold = scaled_mask_threshold(vo.mask_threshold, vo.mask_reference_samples,
                                                   static_cast<double>(t.rows.size()));
    const auto nb = neighborhood_bss_map(t, threshold);
    for (std::size_t cell = 0; cell < nb.bss.size(); ++cell)
      neighborhood.row(name, static_cast<int>(cell) / t.grid_cols, static_cast<int>(cell) % t.grid_cols, nb.bss[cell],
                       nb.reports[cell], static_cast<int>(nb.masked[cell]), threshold);

    std::vector<EventRecord> events;
    for (const auto& r : t.rows)
      if (r.obs) {
        const auto it = categories.find({vc.archive.verify[r.day], r.window, r.cell});
        events.push_back({r.window, r.mean, category_label(it == categories.end() ? 0 : it->second)});
      }
    if (!events.empty())
      for (const auto& [cat, counts] : top_success_by_category(events, vo.top_fraction))
        top.row(name, cat, counts.first, counts.second,
                static_cast<double>(counts.first) / static_cast<double>(counts.second));

    const auto [lo, hi] = std::minmax_element(overall.begin(), overall.end());
    const auto below = std::count_if(overall.begin(), overall.end(), [&](double b) { return b < bss; });
    summary.row(name, k_members, t.rows.size(), brier_score(p, o), brier_score(c, o), bss, median(overall), *lo, *hi,
                static_cast<int>(below), rel.terms.rel, rel.terms.res, rel.terms.unc, ssrel, dc.mf);
  }
  for (auto* w : {&members_out, &summary, &reliability, &spread, &discard, &neighborhood, &top}) w->close();

  // Paired day-bootstrap of CGAN minus each baseline, overall and per window.
  {
    CsvWriter out(paths.metrics() / "significance.csv", "comparison,window,observed,ci_low,ci_high,fraction_positive");
    for (auto base : {EnsembleMethod::cnn, EnsembleMethod::mlp}) {
      const std::string label = std::string("cgan-") + method_name(base);
      const auto& a = tables[base];
      const auto& b = tables[EnsembleMethod::cgan];
      const auto bs = derive_seed(seed, {0x5197, static_cast<std::uint64_t>(base)});
      auto emit = [&](const std::string& window, const BssDifference& d) {
        out.row(label, window, d.observed, d.ci_low, d.ci_high, d.fraction_positive);
      };
      emit("all", bootstrap_bss_difference(a, b, vo.bootstrap, bs));
      for (int s = 0; s < kHoursPerDay; ++s)
        emit(std::to_string(s), bootstrap_bss_difference(window_subset(a, s), window_subset(b, s), vo.bootstrap,
                                                         derive_seed(bs, {static_cast<std::uint64_t>(s)})));
    }
    out.close();
  }

  const auto run = load_trained_run(cfg, paths.root);
  write_importance(cfg, paths, run, tables[EnsembleMethod::mlp]);
  if (vo.fidelity_patches_per_day > 0) write_fidelity(cfg, paths, vc, run);
}

}  // namespace severe::detail
