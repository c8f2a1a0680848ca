#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "severe/array_store.hpp"
#include "severe/error.hpp"
#include "severe/griddata.hpp"
#include "severe/rng.hpp"

using namespace severe;

namespace {

FineGridSpec square_grid(int n) {
  FineGridSpec g;
  g.n_rows = n;
  g.n_cols = n;
  g.elevation.assign(static_cast<std::size_t>(n) * n, 0.0);
  return g;
}

CoarseGridSpec cells_at(const FineGridSpec& fine, const std::vector<std::array<double, 2>>& positions) {
  CoarseGridSpec c;
  c.n_rows = 1;
  c.n_cols = static_cast<int>(positions.size());
  for (const auto& p : positions) c.centers.push_back(fine.latlon(p[0], p[1]));
  c.lower = fine.latlon(-0.5, -0.5);
  c.upper = fine.latlon(fine.n_rows - 0.5, fine.n_cols - 0.5);
  return c;
}

// Top-left offset maximizing overlap of [o, o + 64) with [center - 32, center + 32).
int best_offset(int center, int n) {
  int best = 0, best_overlap = -1;
  for (int o = 0; o + kPatchSize <= n; ++o) {
    const int lo = std::max(o, center - 32), hi = std::min(o + kPatchSize, center + 32);
    if (hi - lo > best_overlap) {
      best_overlap = hi - lo;
      best = o;
    }
  }
  return best;
}

double haversine(LatLon a, LatLon b) {
  const double r = std::acos(-1.0) / 180.0;
  const double s1 = std::sin((b.lat - a.lat) * r / 2), s2 = std::sin((b.lon - a.lon) * r / 2);
  const double h = s1 * s1 + std::cos(a.lat * r) * std::cos(b.lat * r) * s2 * s2;
  return 2.0 * 6371.0 * std::asin(std::sqrt(h));
}

}  // namespace

TEST_CASE("patch index: centred footprint on a 128 grid") {
  const auto fine = square_grid(128);
  const auto idx = build_patch_index(fine, cells_at(fine, {{64.0, 64.0}}));
  CHECK(idx.origins.at(0).row0 == 32);
  CHECK(idx.origins.at(0).col0 == 32);
}

TEST_CASE("patch index: exact fit on a 64 grid") {
  const auto fine = square_grid(64);
  const auto idx = build_patch_index(fine, cells_at(fine, {{32.0, 32.0}}));
  CHECK(idx.origins.at(0).row0 == 0);
  CHECK(idx.origins.at(0).col0 == 0);
}

TEST_CASE("patch index: random centres match brute-force overlap scan") {
  const auto fine = square_grid(192);
  Rng rng(11);
  std::vector<std::array<double, 2>> pos;
  for (int k = 0; k < 100; ++k) pos.push_back({rng.uniform(32.0, 160.0), rng.uniform(32.0, 160.0)});
  const auto idx = build_patch_index(fine, cells_at(fine, pos));
  for (int k = 0; k < 100; ++k) {
    const int cr = static_cast<int>(std::floor(pos[k][0] + 1e-6));
    const int cc = static_cast<int>(std::floor(pos[k][1] + 1e-6));
    CHECK(idx.origins[k].row0 == best_offset(cr, 192));
    CHECK(idx.origins[k].col0 == best_offset(cc, 192));
  }
  const auto again = build_patch_index(fine, cells_at(fine, pos));
  for (int k = 0; k < 100; ++k) CHECK(again.origins[k].row0 == idx.origins[k].row0);
}

TEST_CASE("patch index: footprint that cannot fit is rejected") {
  const auto fine = square_grid(128);
  CHECK_THROWS_AS(build_patch_index(fine, cells_at(fine, {{10.0, 64.0}})), Error);
  try {
    build_patch_index(fine, cells_at(fine, {{64.0, 120.0}}));
  } catch (const Error& e) {
    CHECK(e.code() == Errc::out_of_domain);
  }
}

TEST_CASE("coarse grid footprints always fit") {
  const auto fine = square_grid(192);
  const auto coarse = make_coarse_grid(fine, 6, 6);
  const auto idx = build_patch_index(fine, coarse);
  REQUIRE(idx.origins.size() == 36);
  for (const auto& o : idx.origins) {
    CHECK(o.row0 >= 0);
    CHECK(o.row0 <= 192 - 64);
    CHECK(o.col0 >= 0);
    CHECK(o.col0 <= 192 - 64);
  }
}

TEST_CASE("extract_patch: constant, ramp and loop oracle") {
  PatchIndexMap idx{{{2, 3}}};
  const int n = 100;
  std::vector<float> constant(n * n, 5.0f);
  for (float v : extract_patch(constant, n, n, 0, idx)) CHECK(v == 5.0f);

  std::vector<float> ramp(n * n);
  for (int i = 0; i < n * n; ++i) ramp[i] = static_cast<float>(i);
  CHECK(extract_patch(ramp, n, n, 0, idx)[0] == ramp[2 * n + 3]);

  Rng rng(5);
  std::vector<float> field(n * n);
  for (auto& v : field) v = static_cast<float>(rng.normal());
  PatchIndexMap rnd{{{static_cast<int>(rng.below(37)), static_cast<int>(rng.below(37))}}};
  const auto patch = extract_patch(field, n, n, 0, rnd);
  bool equal = true;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      equal = equal && patch[r * 64 + c] == field[(rnd.origins[0].row0 + r) * n + rnd.origins[0].col0 + c];
  CHECK(equal);
}

TEST_CASE("extract_patch recovers a planted block") {
  const auto fine = square_grid(192);
  const auto coarse = make_coarse_grid(fine, 3, 3);
  const auto idx = build_patch_index(fine, coarse);
  Rng rng(9);
  std::vector<float> block(64 * 64);
  for (auto& v : block) v = static_cast<float>(rng.normal());
  const int cell = 4;
  std::vector<float> field(192 * 192, 0.0f);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) field[(idx.origins[cell].row0 + r) * 192 + idx.origins[cell].col0 + c] = block[r * 64 + c];
  CHECK(extract_patch(field, 192, 192, cell, idx) == block);
  CHECK_THROWS_AS(extract_patch(field, 192, 192, 99, idx), Error);
}

TEST_CASE("report windows: hour 5 and clipping") {
  CHECK(report_window_starts(5) == std::vector<int>{3, 4, 5, 6});
  CHECK(report_window_starts(0) == std::vector<int>{0, 1});
  CHECK(report_window_starts(23) == std::vector<int>{21, 22, 23});
}

TEST_CASE("grid_reports: single hail report") {
  const auto fine = square_grid(192);
  const auto coarse = make_coarse_grid(fine, 3, 3);
  const Date d = Date::from_ymd(2021, 5, 1);
  ReportRecord r{ReportCategory::hail, coarse.centers[5].lat, coarse.centers[5].lon, 5, d};
  const auto g = grid_reports({r}, coarse, d, 1);
  CHECK(g.skipped == 0);
  int total = 0;
  for (int s = 0; s < 24; ++s)
    for (int c = 0; c < coarse.n_cells(); ++c) {
      total += g.grid.at(0, s, c);
      if (g.grid.at(0, s, c)) {
        CHECK(c == 5);
        CHECK(s >= 3);
        CHECK(s <= 6);
      }
    }
  CHECK(total == 4);
}

TEST_CASE("grid_reports: random reports match distance-scan oracle") {
  const auto fine = square_grid(192);
  const auto coarse = make_coarse_grid(fine, 4, 5);
  const Date first = Date::from_ymd(2021, 6, 1);
  const int n_days = 3;
  Rng rng(21);
  std::vector<ReportRecord> reports;
  for (int k = 0; k < 50; ++k) {
    const auto p = fine.latlon(rng.uniform(-10.0, 201.0), rng.uniform(-10.0, 201.0));
    reports.push_back({ReportCategory::wind, p.lat, p.lon, static_cast<int>(rng.below(24)),
                       first + static_cast<int>(rng.below(n_days))});
  }
  const auto g = grid_reports(reports, coarse, first, n_days);

  std::vector<std::uint8_t> expect(static_cast<std::size_t>(n_days) * 24 * coarse.n_cells(), 0);
  std::size_t skipped = 0;
  for (const auto& r : reports) {
    if (r.lat < coarse.lower.lat || r.lat > coarse.upper.lat || r.lon < coarse.lower.lon || r.lon > coarse.upper.lon) {
      ++skipped;
      continue;
    }
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < coarse.n_cells(); ++c) {
      const double dist = haversine({r.lat, r.lon}, coarse.centers[c]);
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    const int day = r.day.serial - first.serial;
    for (int s = r.hour - 2; s <= r.hour + 1; ++s)
      if (s >= 0 && s < 24) expect[(static_cast<std::size_t>(day) * 24 + s) * coarse.n_cells() + best] = 1;
  }
  CHECK(g.skipped == skipped);
  CHECK(g.grid.labels == expect);
}

TEST_CASE("nearest cell tie goes to the lowest index") {
  CoarseGridSpec c;
  c.n_rows = 1;
  c.n_cols = 2;
  c.centers = {{35.0, -100.0}, {35.0, -99.0}};
  c.lower = {34.0, -101.0};
  c.upper = {36.0, -98.0};
  CHECK(nearest_cell(c, {35.0, -99.5}) == 0);
  CHECK(nearest_cell(c, {35.0, -99.4}) == 1);
  CHECK(nearest_cell(c, {37.0, -99.4}) == -1);
}

TEST_CASE("climatology: floor, ceiling and exact counts") {
  LabelGrid g;
  g.n_cells = 2;
  for (int k = 0; k < 730; ++k) g.days.push_back(Date::from_ymd(2018, 1, 1) + k);
  g.labels.assign(g.days.size() * 24 * 2, 0);

  auto zero = build_climatology(g, {});
  for (double p : zero.prob) CHECK(p == kClimatologyFloor);

  std::fill(g.labels.begin(), g.labels.end(), 1);
  auto one = build_climatology(g, {});
  for (double p : one.prob) CHECK(p == 1.0 - kClimatologyFloor);

  Rng rng(3);
  for (auto& v : g.labels) v = rng.bernoulli(0.3) ? 1 : 0;
  const auto raw = build_climatology(g, {0.0, 0.0});
  int mismatches = 0;
  for (int c = 0; c < 2; ++c)
    for (int doy = 1; doy <= 365; ++doy)
      for (int h = 0; h < 24; ++h) {
        double count = 0.0, n = 0.0;
        for (std::size_t d = 0; d < g.days.size(); ++d)
          if (g.days[d].day_of_year() == doy) {
            count += g.at(static_cast<int>(d), h, c);
            n += 1.0;
          }
        const double expect = std::clamp(count / n, kClimatologyFloor, 1.0 - kClimatologyFloor);
        if (std::abs(climatology_lookup(raw, c, doy, h) - expect) > 1e-12) ++mismatches;
      }
  CHECK(mismatches == 0);

  const auto smooth = build_climatology(g, {});
  for (double p : smooth.prob) {
    CHECK(p >= kClimatologyFloor);
    CHECK(p <= 1.0 - kClimatologyFloor);
  }
  CHECK_THROWS_AS(build_climatology(LabelGrid{}, {}), Error);
}

TEST_CASE("climatology lookup: constant, wrap and read-back") {
  Climatology c;
  c.n_cells = 3;
  c.prob.assign(3 * 365 * 24, 0.3);
  CHECK(climatology_lookup(c, 1, 100, 7) == 0.3);
  Rng rng(4);
  for (auto& p : c.prob) p = rng.uniform();
  CHECK(climatology_lookup(c, 2, 366, 5) == climatology_lookup(c, 2, 1, 5));
  for (int k = 0; k < 200; ++k) {
    const int cell = static_cast<int>(rng.below(3)), doy = 1 + static_cast<int>(rng.below(365)),
              h = static_cast<int>(rng.below(24));
    CHECK(climatology_lookup(c, cell, doy, h) == c.prob[(cell * 365 + doy - 1) * 24 + h]);
  }
  CHECK_THROWS_AS(climatology_lookup(c, 3, 1, 0), Error);
  CHECK_THROWS_AS(climatology_lookup(c, 0, 0, 0), Error);
  CHECK_THROWS_AS(climatology_lookup(c, 0, 1, 24), Error);
}

TEST_CASE("label grid, climatology and reports persist") {
  const auto dir = std::filesystem::temp_directory_path() / "severe_griddata_test";
  std::filesystem::create_directories(dir);
  LabelGrid g;
  g.n_cells = 4;
  for (int k = 0; k < 3; ++k) g.days.push_back(Date::from_ymd(2020, 2, 27) + k);
  Rng rng(8);
  for (std::size_t i = 0; i < 3 * 24 * 4; ++i) g.labels.push_back(rng.bernoulli(0.2));
  const auto clim = build_climatology(g, {});

  ArrayStore store;
  save_label_grid(store, "labels", g);
  save_climatology(store, "clim", clim);
  store.save(dir / "a.arr");
  const auto back = ArrayStore::load(dir / "a.arr");
  const auto g2 = load_label_grid(back, "labels");
  CHECK(g2.labels == g.labels);
  CHECK(g2.days == g.days);
  CHECK(load_climatology(back, "clim").prob == clim.prob);

  std::vector<ReportRecord> reports{{ReportCategory::tornado, 35.25, -97.5, 22, Date::from_ymd(2020, 5, 3)},
                                    {ReportCategory::hail, 36.0, -98.125, 0, Date::from_ymd(2020, 5, 4)}};
  write_reports_csv(dir / "r.csv", reports);
  const auto r2 = read_reports_csv(dir / "r.csv");
  REQUIRE(r2.size() == 2);
  CHECK(r2[0].category == ReportCategory::tornado);
  CHECK(r2[0].lat == 35.25);
  CHECK(r2[1].hour == 0);
  CHECK(r2[1].day == reports[1].day);
  std::filesystem::remove_all(dir);
}
