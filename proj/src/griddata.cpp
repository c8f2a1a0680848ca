#include "severe/griddata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace severe {
namespace {

constexpr double kKmPerDegree = kEarthRadiusKm * std::numbers::pi / 180.0;

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

// Weights of a circular Gaussian kernel, index = offset + reach.
std::vector<double> gaussian_weights(double sigma, int& reach) {
  if (sigma <= 0.0) {
    reach = 0;
    return {1.0};
  }
  reach = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> w(2 * reach + 1);
  for (int d = -reach; d <= reach; ++d) w[d + reach] = std::exp(-0.5 * d * d / (sigma * sigma));
  return w;
}

// Circular convolution of a (n_a x n_b) row-major table along both axes.
std::vector<double> smooth_2d(const std::vector<double>& t, int n_a, int n_b, double sigma_a, double sigma_b) {
  int ra = 0, rb = 0;
  const auto wa = gaussian_weights(sigma_a, ra);
  const auto wb = gaussian_weights(sigma_b, rb);
  std::vector<double> tmp(t.size(), 0.0), out(t.size(), 0.0);
  for (int a = 0; a < n_a; ++a)
    for (int b = 0; b < n_b; ++b) {
      double s = 0.0;
      for (int d = -rb; d <= rb; ++d) s += wb[d + rb] * t[a * n_b + ((b + d) % n_b + n_b) % n_b];
      tmp[a * n_b + b] = s;
    }
  for (int a = 0; a < n_a; ++a)
    for (int b = 0; b < n_b; ++b) {
      double s = 0.0;
      for (int d = -ra; d <= ra; ++d) s += wa[d + ra] * tmp[((a + d) % n_a + n_a) % n_a * n_b + b];
      out[a * n_b + b] = s;
    }
  return out;
}

int folded_doy(Date d) { return std::min(d.day_of_year(), kClimatologyDays); }

}  // namespace

double great_circle_km(LatLon a, LatLon b) {
  const double p1 = radians(a.lat), p2 = radians(b.lat);
  const double dp = p2 - p1, dl = radians(b.lon - a.lon);
  const double h = std::sin(dp / 2) * std::sin(dp / 2) + std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

void FineGridSpec::validate() const {
  require(n_rows >= kPatchSize && n_cols >= kPatchSize, Errc::out_of_domain, "fine grid smaller than one patch");
  require(spacing_km > 0.0, Errc::config_error, "fine grid spacing must be positive");
  require(elevation.empty() || elevation.size() == static_cast<std::size_t>(n_rows) * n_cols, Errc::shape_mismatch,
          "elevation field size does not match the fine grid");
}

LatLon FineGridSpec::latlon(double row, double col) const {
  const double dlat = spacing_km / kKmPerDegree;
  const double dlon = spacing_km / (kKmPerDegree * std::cos(radians(origin.lat)));
  return {origin.lat + row * dlat, origin.lon + col * dlon};
}

std::array<double, 2> FineGridSpec::project(LatLon p) const {
  const double dlat = spacing_km / kKmPerDegree;
  const double dlon = spacing_km / (kKmPerDegree * std::cos(radians(origin.lat)));
  return {(p.lat - origin.lat) / dlat, (p.lon - origin.lon) / dlon};
}

CoarseGridSpec make_coarse_grid(const FineGridSpec& fine, int n_rows, int n_cols) {
  fine.validate();
  require(n_rows >= 1 && n_cols >= 1, Errc::config_error, "coarse grid needs at least one cell");
  const int half = kPatchSize / 2;
  auto place = [&](int i, int n, int fine_n) {
    if (n == 1) return fine_n / 2;
    return half + static_cast<int>(std::lround(static_cast<double>(i) * (fine_n - kPatchSize) / (n - 1)));
  };
  CoarseGridSpec c;
  c.n_rows = n_rows;
  c.n_cols = n_cols;
  c.spacing_km = fine.spacing_km * (n_rows > 1 ? static_cast<double>(fine.n_rows - kPatchSize) / (n_rows - 1)
                                                : static_cast<double>(fine.n_rows));
  for (int i = 0; i < n_rows; ++i)
    for (int j = 0; j < n_cols; ++j) c.centers.push_back(fine.latlon(place(i, n_rows, fine.n_rows), place(j, n_cols, fine.n_cols)));
  c.lower = fine.latlon(-0.5, -0.5);
  c.upper = fine.latlon(fine.n_rows - 0.5, fine.n_cols - 0.5);
  return c;
}

PatchIndexMap build_patch_index(const FineGridSpec& fine, const CoarseGridSpec& coarse) {
  fine.validate();
  PatchIndexMap map;
  const int half = kPatchSize / 2;
  for (std::size_t k = 0; k < coarse.centers.size(); ++k) {
    const auto rc = fine.project(coarse.centers[k]);
    // Small tolerance so centers placed on grid points survive the round trip.
    const double r0 = std::floor(rc[0] + 1e-6) - half;
    const double c0 = std::floor(rc[1] + 1e-6) - half;
    require(r0 >= 0 && c0 >= 0 && r0 + kPatchSize <= fine.n_rows && c0 + kPatchSize <= fine.n_cols,
            Errc::out_of_domain, "coarse cell " + std::to_string(k) + " footprint does not fit in the fine grid");
    map.origins.push_back({static_cast<int>(r0), static_cast<int>(c0)});
  }
  return map;
}

std::vector<float> extract_patch(std::span<const float> field, int n_rows, int n_cols, int cell,
                                 const PatchIndexMap& index) {
  require(cell >= 0 && cell < static_cast<int>(index.origins.size()), Errc::out_of_domain,
          "cell " + std::to_string(cell) + " is not in the patch index");
  require(field.size() == static_cast<std::size_t>(n_rows) * n_cols, Errc::shape_mismatch, "field size mismatch");
  const auto o = index.origins[cell];
  require(o.row0 >= 0 && o.col0 >= 0 && o.row0 + kPatchSize <= n_rows && o.col0 + kPatchSize <= n_cols,
          Errc::out_of_domain, "patch footprint outside the field");
  std::vector<float> out(static_cast<std::size_t>(kPatchSize) * kPatchSize);
  for (int r = 0; r < kPatchSize; ++r)
    std::copy_n(field.data() + static_cast<std::size_t>(o.row0 + r) * n_cols + o.col0, kPatchSize,
                out.data() + static_cast<std::size_t>(r) * kPatchSize);
  return out;
}

const char* category_name(ReportCategory c) {
  switch (c) {
    case ReportCategory::tornado: return "tornado";
    case ReportCategory::hail: return "hail";
    case ReportCategory::wind: return "wind";
  }
  return "?";
}

ReportCategory parse_category(const std::string& s) {
  if (s == "tornado") return ReportCategory::tornado;
  if (s == "hail") return ReportCategory::hail;
  if (s == "wind") return ReportCategory::wind;
  fail(Errc::format_error, "unknown report category '" + s + "'");
}

std::vector<int> report_window_starts(int hour) {
  std::vector<int> out;
  for (int s = hour - 2; s <= hour + 1; ++s)
    if (s >= 0 && s < kHoursPerDay) out.push_back(s);
  return out;
}

int nearest_cell(const CoarseGridSpec& coarse, LatLon p) {
  if (p.lat < coarse.lower.lat || p.lat >= coarse.upper.lat || p.lon < coarse.lower.lon || p.lon >= coarse.upper.lon)
    return -1;
  int best = -1;
  double best_d = 0.0;
  for (int k = 0; k < coarse.n_cells(); ++k) {
    const double d = great_circle_km(p, coarse.centers[k]);
    if (best < 0 || d < best_d) {
      best = k;
      best_d = d;
    }
  }
  return best;
}

GriddedReports grid_reports(const std::vector<ReportRecord>& reports, const CoarseGridSpec& coarse, Date first,
                            int n_days) {
  GriddedReports out;
  auto& g = out.grid;
  g.n_cells = coarse.n_cells();
  for (int d = 0; d < n_days; ++d) g.days.push_back(first + d);
  g.labels.assign(static_cast<std::size_t>(n_days) * kHoursPerDay * g.n_cells, 0);
  for (const auto& r : reports) {
    const int day = r.day.serial - first.serial;
    const int cell = nearest_cell(coarse, {r.lat, r.lon});
    if (day < 0 || day >= n_days || r.hour < 0 || r.hour >= kHoursPerDay || cell < 0) {
      ++out.skipped;
      continue;
    }
    for (int s : report_window_starts(r.hour)) g.labels[g.offset(day, s, cell)] = 1;
  }
  return out;
}

Climatology build_climatology(const LabelGrid& archive, const ClimatologySmoothing& smooth) {
  require(!archive.days.empty() && archive.n_cells > 0, Errc::empty_archive, "climatology archive is empty");
  const int D = kClimatologyDays, H = kHoursPerDay;
  std::vector<double> denom(static_cast<std::size_t>(D) * H, 0.0);
  std::vector<std::vector<double>> counts(archive.n_cells, std::vector<double>(static_cast<std::size_t>(D) * H, 0.0));
  std::vector<double> cell_events(archive.n_cells, 0.0);
  for (std::size_t di = 0; di < archive.days.size(); ++di) {
    const int doy = folded_doy(archive.days[di]) - 1;
    for (int h = 0; h < H; ++h) {
      denom[doy * H + h] += 1.0;
      for (int c = 0; c < archive.n_cells; ++c)
        if (archive.at(static_cast<int>(di), h, c)) {
          counts[c][doy * H + h] += 1.0;
          cell_events[c] += 1.0;
        }
    }
  }
  const double total = static_cast<double>(archive.days.size()) * H;
  const auto sden = smooth_2d(denom, D, H, smooth.sigma_doy, smooth.sigma_hour);

  Climatology clim;
  clim.n_cells = archive.n_cells;
  clim.first_year = static_cast<int>(archive.days.front().ymd().year());
  clim.last_year = static_cast<int>(archive.days.back().ymd().year());
  clim.prob.resize(static_cast<std::size_t>(archive.n_cells) * D * H);
  for (int c = 0; c < archive.n_cells; ++c) {
    const auto snum = smooth_2d(counts[c], D, H, smooth.sigma_doy, smooth.sigma_hour);
    const double fallback = cell_events[c] / total;
    for (int k = 0; k < D * H; ++k) {
      const double p = sden[k] > 0.0 ? snum[k] / sden[k] : fallback;
      clim.prob[static_cast<std::size_t>(c) * D * H + k] = std::clamp(p, kClimatologyFloor, 1.0 - kClimatologyFloor);
    }
  }
  return clim;
}

double climatology_lookup(const Climatology& clim, int cell, int doy, int hour) {
  require(cell >= 0 && cell < clim.n_cells && doy >= 1 && doy <= 366 && hour >= 0 && hour < kHoursPerDay,
          Errc::key_out_of_range,
          "climatology key (" + std::to_string(cell) + "," + std::to_string(doy) + "," + std::to_string(hour) + ")");
  const int d = (doy - 1) % kClimatologyDays;
  return clim.prob[(static_cast<std::size_t>(cell) * kClimatologyDays + d) * kHoursPerDay + hour];
}

void save_label_grid(ArrayStore& store, const std::string& prefix, const LabelGrid& grid) {
  std::vector<std::int32_t> days;
  for (auto d : grid.days) days.push_back(d.serial);
  store.put<std::int32_t>(prefix + "days", {static_cast<std::int64_t>(days.size())}, days);
  store.put<std::uint8_t>(prefix + "labels",
                          {static_cast<std::int64_t>(grid.days.size()), kHoursPerDay, grid.n_cells}, grid.labels);
  store.set_attr(prefix + "window_len", std::to_string(grid.window_len));
}

LabelGrid load_label_grid(const ArrayStore& store, const std::string& prefix) {
  LabelGrid g;
  for (auto s : store.get<std::int32_t>(prefix + "days")) g.days.push_back(Date{s});
  const auto shape = store.shape(prefix + "labels");
  require(shape.size() == 3 && shape[0] == static_cast<std::int64_t>(g.days.size()) && shape[1] == kHoursPerDay,
          Errc::format_error, "label grid has an unexpected shape");
  g.n_cells = static_cast<int>(shape[2]);
  g.labels = store.get<std::uint8_t>(prefix + "labels");
  g.window_len = std::stoi(store.attr(prefix + "window_len"));
  return g;
}

void save_climatology(ArrayStore& store, const std::string& prefix, const Climatology& clim) {
  store.put<double>(prefix + "prob", {clim.n_cells, kClimatologyDays, kHoursPerDay}, clim.prob);
  store.set_attr(prefix + "source_years", std::to_string(clim.first_year) + "-" + std::to_string(clim.last_year));
}

Climatology load_climatology(const ArrayStore& store, const std::string& prefix) {
  Climatology c;
  const auto shape = store.shape(prefix + "prob");
  require(shape.size() == 3 && shape[1] == kClimatologyDays && shape[2] == kHoursPerDay, Errc::format_error,
          "climatology has an unexpected shape");
  c.n_cells = static_cast<int>(shape[0]);
  c.prob = store.get<double>(prefix + "prob");
  const auto years = store.attr(prefix + "source_years");
  std::sscanf(years.c_str(), "%d-%d", &c.first_year, &c.last_year);
  return c;
}

std::vector<ReportRecord> read_reports_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io_error, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "day,hour,category,lat,lon", Errc::format_error, "unexpected report CSV header '" + line + "'");
  std::vector<ReportRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    require(f.size() == 5, Errc::format_error, path.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    ReportRecord r;
    r.day = Date::parse(f[0]);
    r.hour = std::stoi(f[1]);
    require(r.hour >= 0 && r.hour < kHoursPerDay, Errc::format_error,
            path.string() + ":" + std::to_string(lineno) + ": hour out of range");
    r.category = parse_category(f[2]);
    r.lat = std::stod(f[3]);
    r.lon = std::stod(f[4]);
    out.push_back(r);
  }
  return out;
}

void write_reports_csv(const std::filesystem::path& path, const std::vector<ReportRecord>& reports) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + path.string());
  out << "day,hour,category,lat,lon\n";
  char buf[64];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%.10f,%.10f", r.lat, r.lon);
    out << r.day.iso() << ',' << r.hour << ',' << category_name(r.category) << ',' << buf << '\n';
  }
}

}  // namespace severe
