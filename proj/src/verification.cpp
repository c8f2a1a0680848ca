#include "severe/verification.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "severe/error.hpp"
#include "severe/rng.hpp"

namespace severe {
namespace {

void check_aligned(std::size_t a, std::size_t b, const char* what) {
  require(a == b, Errc::length_mismatch,
          std::string(what) + ": lengths " + std::to_string(a) + " and " + std::to_string(b) + " differ");
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double clamped_bce(double p, double o) {
  const double q = std::clamp(p, 1e-7, 1.0 - 1e-7);
  return -(o * std::log(q) + (1.0 - o) * std::log(1.0 - q));
}

double bss_from_sums(double se, double se_clim) {
  require(se_clim > 0.0, Errc::zero_climatology_variance, "climatology Brier score is zero");
  return 1.0 - se / se_clim;
}

}  // namespace

std::vector<double> VerificationTable::means() const {
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r.mean);
  return v;
}

std::vector<double> VerificationTable::obs() const {
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r.obs);
  return v;
}

std::vector<double> VerificationTable::clims() const {
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r.clim);
  return v;
}

double brier_score(std::span<const double> p, std::span<const double> o) {
  check_aligned(p.size(), o.size(), "brier_score");
  require(!p.empty(), Errc::empty_input, "brier_score of an empty sample");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - o[i]) * (p[i] - o[i]);
  return s / static_cast<double>(p.size());
}

double brier_skill_score(std::span<const double> p, std::span<const double> o, std::span<const double> c) {
  check_aligned(p.size(), c.size(), "brier_skill_score");
  return bss_from_sums(brier_score(p, o), brier_score(c, o));
}

std::map<int, double> aggregate_bss(const VerificationTable& table, GroupBy group_by) {
  require(!table.rows.empty(), Errc::empty_input, "aggregate_bss of an empty table");
  struct Acc {
    double se = 0.0, se_clim = 0.0;
    std::size_t n = 0;
  };
  std::map<int, Acc> acc;
  for (const auto& r : table.rows) {
    const int key = group_by == GroupBy::window ? r.window : group_by == GroupBy::cell ? r.cell : -1;
    auto& a = acc[key];
    a.se += (r.mean - r.obs) * (r.mean - r.obs);
    a.se_clim += (r.clim - r.obs) * (r.clim - r.obs);
    ++a.n;
  }
  std::map<int, double> out;
  for (const auto& [k, a] : acc) out[k] = bss_from_sums(a.se / static_cast<double>(a.n), a.se_clim / static_cast<double>(a.n));
  return out;
}

int probability_bin(double p, int n_bins) {
  return std::clamp(static_cast<int>(std::floor(p * n_bins)), 0, n_bins - 1);
}

MurphyTerms murphy_decompose(std::span<const double> p, std::span<const double> o, int n_bins) {
  check_aligned(p.size(), o.size(), "murphy_decompose");
  require(!p.empty(), Errc::empty_input, "murphy_decompose of an empty sample");
  std::vector<double> sum_p(n_bins, 0.0), sum_o(n_bins, 0.0);
  std::vector<std::size_t> cnt(n_bins, 0);
  double obar = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const int b = probability_bin(p[i], n_bins);
    sum_p[b] += p[i];
    sum_o[b] += o[i];
    ++cnt[b];
    obar += o[i];
  }
  const double N = static_cast<double>(p.size());
  obar /= N;
  MurphyTerms t;
  for (int b = 0; b < n_bins; ++b) {
    if (cnt[b] == 0) continue;
    const double nk = static_cast<double>(cnt[b]);
    const double pk = sum_p[b] / nk, ok = sum_o[b] / nk;
    t.rel += nk * (pk - ok) * (pk - ok);
    t.res += nk * (ok - obar) * (ok - obar);
  }
  t.rel /= N;
  t.res /= N;
  t.unc = obar * (1.0 - obar);
  t.bs = brier_score(p, o);
  return t;
}

ReliabilitySummary reliability_curve(std::span<const double> p, std::span<const double> o, int n_bins, int n_boot,
                                     std::uint64_t seed) {
  check_aligned(p.size(), o.size(), "reliability_curve");
  require(!p.empty(), Errc::empty_input, "reliability_curve of an empty sample");
  ReliabilitySummary s;
  s.terms = murphy_decompose(p, o, n_bins);
  std::vector<int> bin(p.size());
  s.bins.resize(n_bins);
  for (int b = 0; b < n_bins; ++b) {
    s.bins[b].lower = static_cast<double>(b) / n_bins;
    s.bins[b].upper = static_cast<double>(b + 1) / n_bins;
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    bin[i] = probability_bin(p[i], n_bins);
    auto& rb = s.bins[bin[i]];
    ++rb.count;
    rb.mean_forecast += p[i];
    rb.observed += o[i];
  }
  for (auto& rb : s.bins)
    if (rb.count) {
      rb.mean_forecast /= static_cast<double>(rb.count);
      rb.observed /= static_cast<double>(rb.count);
    }

  std::vector<std::vector<double>> reps(n_bins);
  std::vector<double> hits(n_bins);
  std::vector<std::size_t> cnt(n_bins);
  for (int k = 0; k < n_boot; ++k) {
    Rng rng(derive_seed(seed, {0xb007u, static_cast<std::uint64_t>(k)}));
    std::fill(hits.begin(), hits.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), 0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto j = rng.below(p.size());
      hits[bin[j]] += o[j];
      ++cnt[bin[j]];
    }
    for (int b = 0; b < n_bins; ++b)
      if (cnt[b]) reps[b].push_back(hits[b] / static_cast<double>(cnt[b]));
  }
  for (int b = 0; b < n_bins; ++b) {
    auto& rb = s.bins[b];
    if (rb.count == 0 || reps[b].empty()) {
      rb.ci_low = rb.ci_high = rb.observed;
      continue;
    }
    rb.ci_low = percentile(reps[b], 0.025);
    rb.ci_high = percentile(reps[b], 0.975);
  }
  return s;
}

double ensemble_spread(std::span<const double> m) {
  if (m.empty()) return 0.0;
  const double mean = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
  double s = 0.0;
  for (double v : m) s += (v - mean) * (v - mean);
  return std::sqrt(s / static_cast<double>(m.size()));
}

SpreadSkill spread_skill(const VerificationTable& table, int n_bins) {
  require(!table.rows.empty(), Errc::empty_input, "spread_skill of an empty table");
  const std::size_t N = table.rows.size();
  std::vector<double> spread(N);
  for (std::size_t i = 0; i < N; ++i) {
    require(table.rows[i].members.size() >= 2, Errc::single_member_ensemble,
            "spread-skill needs at least two members per row");
    spread[i] = ensemble_spread(table.rows[i].members);
  }
  std::vector<double> sorted = spread;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;  // lower edges of bins 1..n-1
  for (int k = 1; k < n_bins; ++k) {
    const double e = sorted[static_cast<std::size_t>(k) * N / n_bins];
    if (e > sorted.front() && (edges.empty() || e > edges.back())) edges.push_back(e);
  }
  const std::size_t nb = edges.size() + 1;
  SpreadSkill out;
  out.bins.resize(nb);
  std::vector<double> se(nb, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), spread[i]) - edges.begin());
    auto& sb = out.bins[b];
    ++sb.count;
    sb.mean_spread += spread[i];
    const double err = table.rows[i].mean - table.rows[i].obs;
    se[b] += err * err;
  }
  out.bins[0].spread_lower = sorted.front();
  for (std::size_t b = 1; b < nb; ++b) out.bins[b].spread_lower = edges[b - 1];
  for (std::size_t b = 0; b < nb; ++b) {
    auto& sb = out.bins[b];
    if (sb.count == 0) continue;
    sb.mean_spread /= static_cast<double>(sb.count);
    sb.rmse = std::sqrt(se[b] / static_cast<double>(sb.count));
    out.ssrel += static_cast<double>(sb.count) * std::abs(sb.mean_spread - sb.rmse);
  }
  out.ssrel /= static_cast<double>(N);
  return out;
}

std::vector<double> default_discard_fractions() {
  std::vector<double> f;
  for (int k = 0; k <= 10; ++k) f.push_back(0.05 * k);
  return f;
}

DiscardCurve discard_test(std::span<const double> mean, std::span<const double> spread, std::span<const double> o,
                          std::span<const double> fractions) {
  check_aligned(mean.size(), spread.size(), "discard_test");
  check_aligned(mean.size(), o.size(), "discard_test");
  require(!fractions.empty(), Errc::empty_input, "discard_test needs at least one fraction");
  const std::size_t N = mean.size();
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return spread[a] > spread[b]; });
  DiscardCurve c;
  for (double f : fractions) {
    const auto drop = static_cast<std::size_t>(std::floor(f * static_cast<double>(N) + 1e-9));
    require(drop < N, Errc::empty_after_discard, "discarding " + std::to_string(f) + " leaves no rows");
    double s = 0.0;
    for (std::size_t k = drop; k < N; ++k) s += clamped_bce(mean[order[k]], o[order[k]]);
    c.fractions.push_back(f);
    c.errors.push_back(s / static_cast<double>(N - drop));
  }
  if (c.errors.size() > 1) {
    std::size_t dec = 0;
    for (std::size_t k = 1; k < c.errors.size(); ++k)
      // Rounding-level differences between equal errors are not decreases.
      if (c.errors[k] < c.errors[k - 1] - 1e-12 * std::abs(c.errors[k - 1])) ++dec;
    c.mf = static_cast<double>(dec) / static_cast<double>(c.errors.size() - 1);
  }
  return c;
}

DiscardCurve discard_test(const VerificationTable& table, std::span<const double> fractions) {
  std::vector<double> spread;
  for (const auto& r : table.rows) spread.push_back(ensemble_spread(r.members));
  return discard_test(table.means(), spread, table.obs(), fractions);
}

double pattern_correlation(std::span<const double> a, std::span<const double> b) {
  check_aligned(a.size(), b.size(), "pattern_correlation");
  require(!a.empty(), Errc::empty_input, "pattern_correlation of empty fields");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  require(saa > 0.0 && sbb > 0.0, Errc::zero_variance, "pattern_correlation of a constant field");
  return sab / std::sqrt(saa * sbb);
}

double pattern_correlation(std::span<const float> a, std::span<const float> b) {
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  return pattern_correlation(std::span<const double>(x), std::span<const double>(y));
}

PermutationImportance permutation_importance(const PermutedPredict& predict, std::span<const double> o,
                                             PredictorId id, int n_shuffles, std::uint64_t seed) {
  const int raw = static_cast<int>(id);
  require(raw >= 0 && raw < kNumPredictors, Errc::unknown_predictor, "predictor id " + std::to_string(raw));
  std::vector<int> perm(o.size());
  std::iota(perm.begin(), perm.end(), 0);
  PermutationImportance r;
  r.id = id;
  r.baseline_bs = brier_score(predict(id, perm), o);
  for (int k = 0; k < n_shuffles; ++k) {
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, {0x9e4u, static_cast<std::uint64_t>(raw), static_cast<std::uint64_t>(k)}));
    rng.shuffle(perm.begin(), perm.end());
    r.deltas.push_back(brier_score(predict(id, perm), o) - r.baseline_bs);
  }
  if (!r.deltas.empty())
    r.mean_delta = std::accumulate(r.deltas.begin(), r.deltas.end(), 0.0) / static_cast<double>(r.deltas.size());
  return r;
}

NeighborhoodMap neighborhood_bss_map(const VerificationTable& table, double mask_threshold) {
  const int R = table.grid_rows, C = table.grid_cols;
  require(R > 0 && C > 0, Errc::shape_mismatch, "verification table lacks grid dimensions");
  const std::size_t n = static_cast<std::size_t>(R) * C;
  std::vector<double> se(n, 0.0), se_clim(n, 0.0), cnt(n, 0.0);
  std::vector<std::size_t> pos(n, 0);
  for (const auto& r : table.rows) {
    require(r.cell >= 0 && static_cast<std::size_t>(r.cell) < n, Errc::key_out_of_range, "cell outside the grid");
    se[r.cell] += (r.mean - r.obs) * (r.mean - r.obs);
    se_clim[r.cell] += (r.clim - r.obs) * (r.clim - r.obs);
    cnt[r.cell] += 1.0;
    pos[r.cell] += r.obs;
  }
  NeighborhoodMap m;
  m.threshold = mask_threshold;
  m.bss.assign(n, 0.0);
  m.reports.assign(n, 0);
  m.masked.assign(n, 0);
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) {
      double a = 0.0, b = 0.0, k = 0.0;
      std::size_t reports = 0;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const int ii = i + di, jj = j + dj;
          if (ii < 0 || ii >= R || jj < 0 || jj >= C) continue;
          const auto c = static_cast<std::size_t>(ii) * C + jj;
          a += se[c];
          b += se_clim[c];
          k += cnt[c];
          reports += pos[c];
        }
      const auto c = static_cast<std::size_t>(i) * C + j;
      m.bss[c] = k > 0 ? bss_from_sums(a / k, b / k) : 0.0;
      m.reports[c] = reports;
      m.masked[c] = static_cast<double>(reports) < mask_threshold ? 1 : 0;
    }
  return m;
}

double scaled_mask_threshold(double reference_threshold, double reference_samples, double samples) {
  return reference_threshold * samples / reference_samples;
}

BssDifference bootstrap_bss_difference(const VerificationTable& a, const VerificationTable& b, int n_boot,
                                       std::uint64_t seed) {
  check_aligned(a.rows.size(), b.rows.size(), "bootstrap_bss_difference");
  require(!a.rows.empty(), Errc::empty_input, "bootstrap_bss_difference of empty tables");
  std::map<int, std::array<double, 3>> per_day;  // squared errors of a, b, clim
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& ra = a.rows[i];
    const auto& rb = b.rows[i];
    require(ra.day == rb.day && ra.window == rb.window && ra.cell == rb.cell, Errc::shape_mismatch,
            "tables are not aligned row by row");
    auto& d = per_day[ra.day];
    d[0] += (ra.mean - ra.obs) * (ra.mean - ra.obs);
    d[1] += (rb.mean - rb.obs) * (rb.mean - rb.obs);
    d[2] += (ra.clim - ra.obs) * (ra.clim - ra.obs);
  }
  std::vector<std::array<double, 3>> days;
  for (const auto& [k, v] : per_day) days.push_back(v);
  auto diff = [](const std::array<double, 3>& s) { return (s[0] - s[1]) / s[2]; };
  std::array<double, 3> total{};
  for (const auto& d : days)
    for (int k = 0; k < 3; ++k) total[k] += d[k];
  BssDifference out;
  out.observed = diff(total);
  std::vector<double> reps;
  Rng rng(derive_seed(seed, {0xd1ffu}));
  for (int r = 0; r < n_boot; ++r) {
    std::array<double, 3> s{};
    for (std::size_t i = 0; i < days.size(); ++i) {
      const auto& d = days[rng.below(days.size())];
      for (int k = 0; k < 3; ++k) s[k] += d[k];
    }
    if (s[2] > 0.0) reps.push_back(diff(s));
  }
  if (!reps.empty()) {
    out.ci_low = percentile(reps, 0.025);
    out.ci_high = percentile(reps, 0.975);
    out.fraction_positive =
        static_cast<double>(std::count_if(reps.begin(), reps.end(), [](double v) { return v > 0.0; })) /
        static_cast<double>(reps.size());
  }
  return out;
}

std::map<std::string, std::pair<std::size_t, std::size_t>> top_success_by_category(std::span<const EventRecord> events,
                                                                                  double top_fraction) {
  std::map<int, std::vector<std::size_t>> by_window;
  for (std::size_t i = 0; i < events.size(); ++i) by_window[events[i].window].push_back(i);
  std::map<std::string, std::pair<std::size_t, std::size_t>> out;  // category -> (selected, total)
  for (const auto& e : events) ++out[e.category].second;
  for (auto& [w, idx] : by_window) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return (1.0 - events[a].prob) * (1.0 - events[a].prob) < (1.0 - events[b].prob) * (1.0 - events[b].prob);
    });
    const auto take = static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < take && k < idx.size(); ++k) ++out[events[idx[k]].category].first;
  }
  return out;
}

}  // namespace severe
