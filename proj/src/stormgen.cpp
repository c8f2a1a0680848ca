#include "severe/stormgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "severe/rng.hpp"

namespace severe {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Stream tags for derive_seed.
enum : std::uint64_t {
  kTagStorms = 0x5701,
  kTagInstability = 0x1257,
  kTagField = 0xf1e1,
  kTagNoise = 0x7015,
  kTagReport = 0x4e90,
  kTagSplit = 0x5b17,
  kTagElevation = 0xe1e7,
};

using Field = std::vector<double>;

// Sum of random plane waves with wavelengths in [lmin, lmax] km, standardized
// to zero mean and unit variance over the grid. Each mode is evaluated in
// separable form cos(a + b) = cos a cos b - sin a sin b.
Field smooth_field(std::uint64_t seed, int rows, int cols, double spacing_km, double lmin, double lmax,
                   int modes = 8) {
  Rng rng(seed);
  Field f(static_cast<std::size_t>(rows) * cols, 0.0);
  std::vector<double> cr(rows), sr(rows), cc(cols), sc(cols);
  for (int m = 0; m < modes; ++m) {
    const double wavelength = lmin * std::pow(lmax / lmin, rng.uniform());
    const double k = kTwoPi * spacing_km / wavelength;  // radians per cell
    const double theta = rng.uniform(0.0, kTwoPi);
    const double kr = k * std::sin(theta), kc = k * std::cos(theta);
    const double phase = rng.uniform(0.0, kTwoPi);
    const double amp = 0.5 + rng.uniform();
    for (int r = 0; r < rows; ++r) {
      cr[r] = std::cos(kr * r + phase);
      sr[r] = std::sin(kr * r + phase);
    }
    for (int c = 0; c < cols; ++c) {
      cc[c] = amp * std::cos(kc * c);
      sc[c] = amp * std::sin(kc * c);
    }
    for (int r = 0; r < rows; ++r) {
      double* row = f.data() + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) row[c] += cr[r] * cc[c] - sr[r] * sc[c];
    }
  }
  return f;
}

void standardize(Field& f) {
  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  double var = 0.0;
  for (double v : f) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(f.size()));
  for (double& v : f) v = sd > 0.0 ? (v - mean) / sd : 0.0;
}

// rho * a + sqrt(1 - rho^2) * (n orthogonalized against a); for standardized
// a the result is standardized with domain correlation exactly rho.
Field blend(const Field& a, Field n, double rho) {
  standardize(n);
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * n[i];
  dot /= static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) n[i] -= dot * a[i];
  standardize(n);
  const double s = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  Field out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = rho * a[i] + s * n[i];
  return out;
}

// Day-level instability: mesoscale waves plus a south-west to north-east
// gradient. Storms prefer high values and CAPE follows it.
Field instability(const SynthConfig& cfg, Date day) {
  Field f = smooth_field(derive_seed(cfg.seed, {kTagInstability, static_cast<std::uint64_t>(day.serial)}),
                         cfg.fine_rows, cfg.fine_cols, cfg.spacing_km, 200.0, 600.0, 6);
  standardize(f);
  for (int r = 0; r < cfg.fine_rows; ++r)
    for (int c = 0; c < cfg.fine_cols; ++c)
      f[static_cast<std::size_t>(r) * cfg.fine_cols + c] +=
          0.8 * (static_cast<double>(c) / cfg.fine_cols - static_cast<double>(r) / cfg.fine_rows);
  standardize(f);
  return f;
}

// Seasonal storm-rate factor with mean 1 over the year, peaking in early June.
double season(Date day) {
  const double doy = day.day_of_year();
  return 0.3 + 0.7 * (1.0 + std::cos(kTwoPi * (doy - 160.0) / 365.0));
}

// Diurnal weights of storm hours, peaking in the late afternoon (22 UTC).
std::array<double, kHoursPerDay> diurnal_weights() {
  std::array<double, kHoursPerDay> w{};
  for (int h = 0; h < kHoursPerDay; ++h) {
    double d = std::abs(h - 22.0);
    d = std::min(d, 24.0 - d);
    w[h] = 0.15 + std::exp(-0.5 * d * d / 16.0);
  }
  return w;
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

struct StormShape {
  PredictorId id;
  double amplitude;
  double radius_scale;
  bool uses_rotation;
};

constexpr StormShape kShapes[] = {
    {PredictorId::cref, 28.0, 1.0, false},    {PredictorId::uh_2_5km, 80.0, 0.7, true},
    {PredictorId::uh_0_2km, 40.0, 0.5, true}, {PredictorId::apcp, 12.0, 1.2, false},
    {PredictorId::wind_10m, 12.0, 1.5, false}, {PredictorId::graupel, 10.0, 0.8, false},
};

}  // namespace

void SynthConfig::validate() const {
  require(fine_rows >= kPatchSize && fine_cols >= kPatchSize, Errc::config_error, "fine grid below 64x64");
  require(coarse_rows >= 1 && coarse_cols >= 1, Errc::config_error, "coarse grid is empty");
  require(storms_per_day >= 0.0, Errc::config_error, "storms_per_day must be nonnegative");
  for (double r : {corr_cape_cin, corr_cref_dewpoint, corr_srh})
    require(r > -1.0 && r < 1.0, Errc::config_error, "target correlations must lie in (-1, 1)");
  require(noise_floor > 0.0, Errc::config_error, "noise_floor must be positive");
}

FineGridSpec SynthConfig::fine_grid() const {
  FineGridSpec g;
  g.n_rows = fine_rows;
  g.n_cols = fine_cols;
  g.spacing_km = spacing_km;
  g.origin = origin;
  g.elevation = static_fields(*this)[2];
  return g;
}

CoarseGridSpec SynthConfig::coarse_grid() const {
  FineGridSpec g;
  g.n_rows = fine_rows;
  g.n_cols = fine_cols;
  g.spacing_km = spacing_km;
  g.origin = origin;
  return make_coarse_grid(g, coarse_rows, coarse_cols);
}

std::array<std::vector<double>, 3> static_fields(const SynthConfig& cfg) {
  FineGridSpec g;
  g.n_rows = cfg.fine_rows;
  g.n_cols = cfg.fine_cols;
  g.spacing_km = cfg.spacing_km;
  g.origin = cfg.origin;
  const std::size_t n = static_cast<std::size_t>(cfg.fine_rows) * cfg.fine_cols;
  std::array<std::vector<double>, 3> out{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  Field hills = smooth_field(derive_seed(cfg.seed, {kTagElevation}), cfg.fine_rows, cfg.fine_cols, cfg.spacing_km,
                             80.0, 300.0, 6);
  standardize(hills);
  for (int r = 0; r < cfg.fine_rows; ++r)
    for (int c = 0; c < cfg.fine_cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cfg.fine_cols + c;
      const auto p = g.latlon(r, c);
      out[0][i] = p.lat;
      out[1][i] = p.lon;
      // Terrain rising westward, as over the Great Plains.
      out[2][i] = std::max(0.0, 300.0 + 900.0 * (1.0 - static_cast<double>(c) / cfg.fine_cols) + 120.0 * hills[i]);
    }
  return out;
}

std::vector<StormObject> synth_storms(const SynthConfig& cfg, Date day) {
  Rng rng(derive_seed(cfg.seed, {kTagStorms, static_cast<std::uint64_t>(day.serial)}));
  const auto count = rng.poisson(cfg.storms_per_day * season(day));
  std::vector<StormObject> storms;
  if (count == 0) return storms;
  const Field inst = instability(cfg, day);
  const double top = *std::max_element(inst.begin(), inst.end());
  const auto w = diurnal_weights();
  double wsum = 0.0;
  for (double v : w) wsum += v;
  for (std::uint64_t k = 0; k < count; ++k) {
    StormObject s;
    s.id = static_cast<int>(k);
    // Location by rejection sampling against the instability field.
    for (;;) {
      const double r = rng.uniform(0.0, cfg.fine_rows - 1.0);
      const double c = rng.uniform(0.0, cfg.fine_cols - 1.0);
      const double v = inst[static_cast<std::size_t>(std::lround(r)) * cfg.fine_cols + std::lround(c)];
      if (rng.uniform() < std::exp(1.5 * (v - top))) {
        s.row = r;
        s.col = c;
        break;
      }
    }
    double u = rng.uniform() * wsum;
    s.hour = kHoursPerDay - 1;
    for (int h = 0; h < kHoursPerDay; ++h) {
      if (u < w[h]) {
        s.hour = h;
        break;
      }
      u -= w[h];
    }
    s.radius = rng.uniform(3.0, 7.0);
    s.intensity = 2.0 - rng.uniform(0.0, 1.9);  // (0.1, 2]
    s.rotation = rng.uniform();
    storms.push_back(s);
  }
  return storms;
}

HourFields synth_hour(const SynthConfig& cfg, Date day, int hour, const std::vector<StormObject>& storms) {
  require(hour >= 0 && hour < kHoursPerDay, Errc::key_out_of_range, "hour out of range");
  const int R = cfg.fine_rows, C = cfg.fine_cols;
  const std::size_t n = static_cast<std::size_t>(R) * C;
  HourFields out;
  out.rows = R;
  out.cols = C;
  out.values.assign(n * kNumDiagnostics, 0.0f);
  const auto d = static_cast<std::uint64_t>(day.serial);
  const auto h = static_cast<std::uint64_t>(hour);

  // Explicit predictors: maximum over visible storm bumps plus a small
  // nonnegative noise floor.
  for (const auto& s : storms) {
    const int lag = std::abs(s.hour - hour);
    if (lag > 1) continue;
    const double vis = lag == 0 ? 1.0 : 0.5;
    for (const auto& shape : kShapes) {
      const double rad = s.radius * shape.radius_scale;
      const double amp = shape.amplitude * s.intensity * vis * (shape.uses_rotation ? s.rotation : 1.0);
      const int reach = static_cast<int>(std::ceil(4.0 * rad));
      auto ch = out.channel(channel(shape.id));
      const int r0 = std::max(0, static_cast<int>(s.row) - reach), r1 = std::min(R - 1, static_cast<int>(s.row) + reach);
      const int c0 = std::max(0, static_cast<int>(s.col) - reach), c1 = std::min(C - 1, static_cast<int>(s.col) + reach);
      for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) {
          const double dr = r - s.row, dc = c - s.col;
          const auto v = static_cast<float>(amp * std::exp(-0.5 * (dr * dr + dc * dc) / (rad * rad)));
          float& dst = ch[static_cast<std::size_t>(r) * C + c];
          dst = std::max(dst, v);
        }
    }
  }
  Rng noise(derive_seed(cfg.seed, {kTagNoise, d, h}));
  for (const auto& shape : kShapes)
    for (auto& v : out.channel(channel(shape.id))) v += static_cast<float>(noise.uniform() * cfg.noise_floor);

  auto field = [&](std::uint64_t tag, double lmin, double lmax) {
    Field f = smooth_field(derive_seed(cfg.seed, {kTagField, d, h, tag}), R, C, cfg.spacing_km, lmin, lmax);
    standardize(f);
    return f;
  };
  auto put = [&](PredictorId id, const Field& f, double offset, double scale, double lo, double hi) {
    auto ch = out.channel(channel(id));
    for (std::size_t i = 0; i < n; ++i) ch[i] = static_cast<float>(std::clamp(offset + scale * f[i], lo, hi));
  };
  constexpr double inf = 1e30;

  // CAPE follows the day's instability; CIN (signed, <= 0) and CAPE have
  // the configured domain correlation.
  Field cape = instability(cfg, day);
  {
    const Field wobble = field(1, 100.0, 300.0);
    for (std::size_t i = 0; i < n; ++i) cape[i] += 0.5 * wobble[i];
    standardize(cape);
  }
  const Field cin = blend(cape, field(2, 60.0, 150.0), cfg.corr_cape_cin);
  put(PredictorId::cape, cape, 1000.0, 450.0, 0.0, inf);
  put(PredictorId::cin, cin, -60.0, 22.0, -inf, 0.0);

  Field cref(n);
  {
    const auto ch = out.channel(channel(PredictorId::cref));
    for (std::size_t i = 0; i < n; ++i) cref[i] = ch[i];
    standardize(cref);
  }
  put(PredictorId::dewpoint_2m, blend(cref, field(3, 60.0, 200.0), cfg.corr_cref_dewpoint), 290.0, 3.0, -inf, inf);

  const Field srh1 = field(4, 80.0, 300.0);
  put(PredictorId::srh_0_1km, srh1, 120.0, 60.0, -inf, inf);
  put(PredictorId::srh_0_3km, blend(srh1, field(5, 80.0, 300.0), cfg.corr_srh), 200.0, 90.0, -inf, inf);

  put(PredictorId::mslp, field(6, 300.0, 900.0), 1010.0, 5.0, -inf, inf);
  put(PredictorId::temp_2m, field(7, 200.0, 700.0), 298.0, 4.0, -inf, inf);
  put(PredictorId::shear_u_0_6km, field(8, 200.0, 700.0), 12.0, 6.0, -inf, inf);
  put(PredictorId::shear_v_0_6km, field(9, 200.0, 700.0), 5.0, 6.0, -inf, inf);
  return out;
}

SynthDay synth_day(const SynthConfig& cfg, Date day) {
  SynthDay out;
  out.day = day;
  out.storms = synth_storms(cfg, day);
  for (int h = 0; h < kHoursPerDay; ++h) out.hours.push_back(synth_hour(cfg, day, h, out.storms));
  return out;
}

double report_probability(const SynthConfig& cfg, const StormObject& s) {
  return sigmoid(cfg.a_uh * s.rotation * s.intensity + cfg.a_cref * s.intensity - cfg.bias);
}

std::vector<ReportRecord> synth_labels(const SynthConfig& cfg, Date day, const std::vector<StormObject>& storms) {
  FineGridSpec g;
  g.n_rows = cfg.fine_rows;
  g.n_cols = cfg.fine_cols;
  g.spacing_km = cfg.spacing_km;
  g.origin = cfg.origin;
  std::vector<ReportRecord> out;
  for (const auto& s : storms) {
    Rng rng(derive_seed(cfg.seed, {kTagReport, static_cast<std::uint64_t>(day.serial), static_cast<std::uint64_t>(s.id)}));
    if (!(rng.uniform() < report_probability(cfg, s))) continue;
    const double u = rng.uniform();
    ReportRecord r;
    r.category = u < 0.5 ? ReportCategory::hail : u < 0.85 ? ReportCategory::wind : ReportCategory::tornado;
    const auto p = g.latlon(s.row, s.col);
    r.lat = p.lat;
    r.lon = p.lon;
    r.hour = s.hour;
    r.day = day;
    out.push_back(r);
  }
  return out;
}

std::vector<double> bayes_probabilities(const SynthConfig& cfg, const std::vector<StormObject>& storms,
                                        const CoarseGridSpec& coarse) {
  FineGridSpec g;
  g.n_rows = cfg.fine_rows;
  g.n_cols = cfg.fine_cols;
  g.spacing_km = cfg.spacing_km;
  g.origin = cfg.origin;
  std::vector<double> miss(static_cast<std::size_t>(kHoursPerDay) * coarse.n_cells(), 1.0);
  for (const auto& s : storms) {
    const int cell = nearest_cell(coarse, g.latlon(s.row, s.col));
    if (cell < 0) continue;
    const double p = report_probability(cfg, s);
    for (int w : report_window_starts(s.hour)) miss[static_cast<std::size_t>(w) * coarse.n_cells() + cell] *= 1.0 - p;
  }
  for (auto& v : miss) v = 1.0 - v;
  return miss;
}

SynthArchive make_archive(const SynthConfig& cfg, int n_days, int verify_days) {
  cfg.validate();
  require(n_days >= 10, Errc::config_error, "archive needs at least 10 days");
  require(verify_days >= 1 && verify_days < n_days, Errc::config_error, "verification block must be inside the archive");
  SynthArchive a;
  a.cfg = cfg;
  const auto coarse = cfg.coarse_grid();
  for (int i = 0; i < n_days; ++i) {
    const Date d = cfg.start + i;
    a.days.push_back(d);
    a.storms.push_back(synth_storms(cfg, d));
    const auto reps = synth_labels(cfg, d, a.storms.back());
    a.reports.insert(a.reports.end(), reps.begin(), reps.end());
  }
  a.labels = grid_reports(a.reports, coarse, cfg.start, n_days).grid;

  const int pool = n_days - verify_days;
  for (int i = pool; i < n_days; ++i) a.verify.push_back(i);
  std::vector<int> idx(pool);
  for (int i = 0; i < pool; ++i) idx[i] = i;
  Rng rng(derive_seed(cfg.seed, {kTagSplit}));
  rng.shuffle(idx.begin(), idx.end());
  const auto n_val = static_cast<int>(std::llround(0.1 * pool));
  a.val.assign(idx.begin(), idx.begin() + n_val);
  a.train.assign(idx.begin() + n_val, idx.end());
  std::sort(a.val.begin(), a.val.end());
  std::sort(a.train.begin(), a.train.end());
  return a;
}

LabelGrid climatology_archive(const SynthConfig& cfg, int years) {
  require(years >= 1, Errc::config_error, "climatology needs at least one year");
  const int y0 = static_cast<int>(cfg.start.ymd().year());
  const Date first = Date::from_ymd(y0 - years, 1, 1);
  const int n_days = cfg.start.serial - first.serial;
  const auto coarse = cfg.coarse_grid();
  std::vector<ReportRecord> reports;
  for (int i = 0; i < n_days; ++i) {
    const Date d = first + i;
    const auto reps = synth_labels(cfg, d, synth_storms(cfg, d));
    reports.insert(reports.end(), reps.begin(), reps.end());
  }
  return grid_reports(reports, coarse, first, n_days).grid;
}

void save_archive(ArrayStore& store, const SynthArchive& a) {
  save_label_grid(store, "labels/", a.labels);
  auto put_idx = [&](const std::string& name, const std::vector<int>& v) {
    std::vector<std::int32_t> x(v.begin(), v.end());
    store.put<std::int32_t>(name, {static_cast<std::int64_t>(x.size())}, x);
  };
  put_idx("split/train", a.train);
  put_idx("split/val", a.val);
  put_idx("split/verify", a.verify);
  std::vector<double> rows;
  std::vector<std::int32_t> meta;
  for (std::size_t d = 0; d < a.storms.size(); ++d)
    for (const auto& s : a.storms[d]) {
      rows.insert(rows.end(), {s.row, s.col, s.radius, s.intensity, s.rotation});
      meta.insert(meta.end(), {static_cast<std::int32_t>(d), s.hour, s.id});
    }
  const auto ns = static_cast<std::int64_t>(meta.size() / 3);
  store.put<double>("storms/geometry", {ns, 5}, rows);
  store.put<std::int32_t>("storms/meta", {ns, 3}, meta);
  std::vector<double> rep;
  std::vector<std::int32_t> rep_meta;
  for (const auto& r : a.reports) {
    rep.insert(rep.end(), {r.lat, r.lon});
    rep_meta.insert(rep_meta.end(), {r.day.serial, r.hour, static_cast<std::int32_t>(r.category)});
  }
  const auto nr = static_cast<std::int64_t>(a.reports.size());
  store.put<double>("reports/latlon", {nr, 2}, rep);
  store.put<std::int32_t>("reports/meta", {nr, 3}, rep_meta);
}

SynthArchive load_archive(const ArrayStore& store, const SynthConfig& cfg) {
  SynthArchive a;
  a.cfg = cfg;
  a.labels = load_label_grid(store, "labels/");
  a.days = a.labels.days;
  auto get_idx = [&](const std::string& name) {
    const auto x = store.get<std::int32_t>(name);
    return std::vector<int>(x.begin(), x.end());
  };
  a.train = get_idx("split/train");
  a.val = get_idx("split/val");
  a.verify = get_idx("split/verify");
  a.storms.resize(a.days.size());
  const auto rows = store.get<double>("storms/geometry");
  const auto meta = store.get<std::int32_t>("storms/meta");
  for (std::size_t k = 0; k < meta.size() / 3; ++k) {
    StormObject s{rows[5 * k], rows[5 * k + 1], rows[5 * k + 2], rows[5 * k + 3], rows[5 * k + 4], meta[3 * k + 1],
                  meta[3 * k + 2]};
    require(meta[3 * k] >= 0 && meta[3 * k] < static_cast<int>(a.days.size()), Errc::format_error,
            "storm day index out of range");
    a.storms[meta[3 * k]].push_back(s);
  }
  const auto rep = store.get<double>("reports/latlon");
  const auto rep_meta = store.get<std::int32_t>("reports/meta");
  for (std::size_t k = 0; k < rep_meta.size() / 3; ++k) {
    ReportRecord r;
    r.lat = rep[2 * k];
    r.lon = rep[2 * k + 1];
    r.day = Date{rep_meta[3 * k]};
    r.hour = rep_meta[3 * k + 1];
    r.category = static_cast<ReportCategory>(rep_meta[3 * k + 2]);
    a.reports.push_back(r);
  }
  return a;
}

}  // namespace severe
