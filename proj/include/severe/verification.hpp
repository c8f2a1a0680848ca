#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "severe/normalize.hpp"

namespace severe {

// One verified forecast: a (day, window start, coarse cell) key with the
// ensemble members, ensemble mean, binary observation and climatology.
struct VerificationRow {
  int day = 0;  // day index within the verification period
  int window = 0;
  int cell = 0;
  std::vector<double> members;
  double mean = 0.0;
  std::uint8_t obs = 0;
  double clim = 0.0;
};

struct VerificationTable {
  int grid_rows = 0;  // coarse grid shape, used for neighborhood pooling
  int grid_cols = 0;
  std::vector<VerificationRow> rows;

  std::vector<double> means() const;
  std::vector<double> obs() const;
  std::vector<double> clims() const;
};

double brier_score(std::span<const double> p, std::span<const double> o);
// 1 - BS(p) / BS(c).
double brier_skill_score(std::span<const double> p, std::span<const double> o, std::span<const double> c);

enum class GroupBy { window, cell, all };

// Squared errors are formed per row, averaged within each group, and the
// climatology reference is averaged the same way. Key -1 for GroupBy::all.
std::map<int, double> aggregate_bss(const VerificationTable& table, GroupBy group_by);

// Equal-width bins on [0, 1]; p == 1 falls in the last bin.
int probability_bin(double p, int n_bins);

struct MurphyTerms {
  double rel = 0.0;
  double res = 0.0;
  double unc = 0.0;
  double bs = 0.0;
};

MurphyTerms murphy_decompose(std::span<const double> p, std::span<const double> o, int n_bins = 20);

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_forecast = 0.0;
  double observed = 0.0;
  double ci_low = 0.0;  // percentile bootstrap, 95%
  double ci_high = 0.0;
};

struct ReliabilitySummary {
  std::vector<ReliabilityBin> bins;
  MurphyTerms terms;
};

ReliabilitySummary reliability_curve(std::span<const double> p, std::span<const double> o, int n_bins = 20,
                                     int n_boot = 100, std::uint64_t seed = 0);

// Population standard deviation of the members.
double ensemble_spread(std::span<const double> members);

struct SpreadSkillBin {
  double spread_lower = 0.0;
  std::size_t count = 0;
  double mean_spread = 0.0;
  double rmse = 0.0;
};

struct SpreadSkill {
  std::vector<SpreadSkillBin> bins;
  double ssrel = 0.0;
};

// Rows are binned by spread at equal-count quantiles; equal spreads always
// share a bin, so fewer bins may result.
SpreadSkill spread_skill(const VerificationTable& table, int n_bins = 10);

struct DiscardCurve {
  std::vector<double> fractions;
  std::vector<double> errors;  // mean cross-entropy of the kept rows
  double mf = 0.0;
};

std::vector<double> default_discard_fractions();  // 0.00, 0.05, ..., 0.50

DiscardCurve discard_test(std::span<const double> mean, std::span<const double> spread, std::span<const double> o,
                          std::span<const double> fractions);
DiscardCurve discard_test(const VerificationTable& table, std::span<const double> fractions);

double pattern_correlation(std::span<const double> a, std::span<const double> b);
double pattern_correlation(std::span<const float> a, std::span<const float> b);

// Returns ensemble-mean probabilities for every sample when the given
// predictor's data is reassigned so sample i sees sample perm[i]'s data.
using PermutedPredict = std::function<std::vector<double>(PredictorId id, std::span<const int> perm)>;

struct PermutationImportance {
  PredictorId id = PredictorId::cref;
  double baseline_bs = 0.0;
  std::vector<double> deltas;  // permuted BS - baseline, per shuffle
  double mean_delta = 0.0;
};

PermutationImportance permutation_importance(const PermutedPredict& predict, std::span<const double> o,
                                             PredictorId id, int n_shuffles, std::uint64_t seed);

struct NeighborhoodMap {
  std::vector<double> bss;  // per cell
  std::vector<std::size_t> reports;  // pooled positive observations
  std::vector<std::uint8_t> masked;
  double threshold = 0.0;
};

// Each cell pools the rows of its 3x3 neighborhood (truncated at the edges).
NeighborhoodMap neighborhood_bss_map(const VerificationTable& table, double mask_threshold);

// The report-count mask threshold scaled from a reference verification set
// size to this one.
double scaled_mask_threshold(double reference_threshold, double reference_samples, double samples);

struct BssDifference {
  double observed = 0.0;  // BSS(b) - BSS(a)
  double ci_low = 0.0;
  double ci_high = 0.0;
  double fraction_positive = 0.0;
};

// BSS(b) - BSS(a) with a paired bootstrap resampling whole days.
BssDifference bootstrap_bss_difference(const VerificationTable& a, const VerificationTable& b, int n_boot,
                                       std::uint64_t seed);

// Among observed events, the fraction per category combination that ranks in
// the best `top_fraction` by individual Brier score within its lead window.
struct EventRecord {
  int window = 0;
  double prob = 0.0;
  std::string category;  // e.g. "hail", "tornado+wind"
};

std::map<std::string, std::pair<std::size_t, std::size_t>> top_success_by_category(std::span<const EventRecord> events,
                                                                                  double top_fraction = 0.10);

}  // namespace severe
