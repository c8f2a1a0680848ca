#include "severe/ensembles.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "severe/error.hpp"
#include "severe/parallel.hpp"
#include "severe/rng.hpp"
#include "severe/stacks.hpp"
#include "severe/verification.hpp"

namespace severe {

using nn::Tensor;

namespace {

constexpr std::uint64_t kMlpSeedTag = 0x31f0;
constexpr std::uint64_t kGeneratorSeedTag = 0xc6e0;

void check_digest(const std::string& what, const std::string& have, const std::string& want) {
  require(have == want, Errc::checkpoint_mismatch,
          what + " was trained with normalizers " + have + " but the input uses " + want);
}

void check_input(const DayInput& in) {
  require(in.stacks.size() == static_cast<std::size_t>(kHoursPerDay), Errc::shape_mismatch,
          "a forecast day needs 24 hourly stacks");
  require(!in.index.origins.empty() && in.geo.size() == in.index.origins.size() && in.coarse_cols > 0,
          Errc::shape_mismatch, "forecast grid description is incomplete");
}

std::vector<int> all_cells(const DayInput& in) {
  std::vector<int> cells(in.index.origins.size());
  std::iota(cells.begin(), cells.end(), 0);
  return cells;
}

// Feature vectors (cells, 1, 1, F) of every cell at one hour.
Tensor<float> encode_hour(const EncoderModel& enc, const Tensor<float>& stack, const DayInput& in) {
  const auto cells = all_cells(in);
  return encode_patches(enc, stack_patches(stack, in.index, cells));
}

// Stacked sequence (cells, 1, arity, F) for a window from per-hour features.
Tensor<float> window_sequence(const std::vector<Tensor<float>>& hourly, int window) {
  const auto hours = window_feature_hours(window);
  const int n = hourly[hours[0]].shape().n, f = hourly[hours[0]].shape().c;
  Tensor<float> out({n, 1, static_cast<int>(hours.size()), f});
  for (int i = 0; i < n; ++i)
    for (std::size_t t = 0; t < hours.size(); ++t)
      std::copy(hourly[hours[t]].sample(i), hourly[hours[t]].sample(i) + f, &out.at(i, 0, static_cast<int>(t), 0));
  return out;
}

Tensor<float> geo_tensor(const DayInput& in) {
  Tensor<float> g({static_cast<int>(in.geo.size()), 1, 1, 3});
  for (std::size_t i = 0; i < in.geo.size(); ++i) std::copy(in.geo[i].begin(), in.geo[i].end(), g.sample(static_cast<int>(i)));
  return g;
}

EnsembleForecast empty_forecast(EnsembleMethod m, int members, const DayInput& in) {
  require(members >= 1, Errc::config_error, "an ensemble needs at least one member");
  EnsembleForecast fc;
  fc.method = m;
  fc.n_members = members;
  fc.coarse_cols = in.coarse_cols;
  return fc;
}

// Adds one row per (window, cell) from probs[member][window][cell].
void assemble(EnsembleForecast& fc, const DayInput& in, const std::vector<std::vector<std::vector<float>>>& probs) {
  const std::size_t n_cells = in.geo.size();
  std::vector<float> row(fc.n_members);
  for (int s = 0; s < kHoursPerDay; ++s)
    for (std::size_t c = 0; c < n_cells; ++c) {
      for (int k = 0; k < fc.n_members; ++k) row[k] = probs[k][s][c];
      fc.add_row({in.day, s, static_cast<int>(c)}, row);
    }
}

std::vector<std::vector<std::vector<float>>> member_grid(int members) {
  return std::vector<std::vector<std::vector<float>>>(members, std::vector<std::vector<float>>(kHoursPerDay));
}

}  // namespace

const char* method_name(EnsembleMethod m) {
  switch (m) {
    case EnsembleMethod::cgan: return "cgan";
    case EnsembleMethod::cnn: return "cnn";
    case EnsembleMethod::mlp: return "mlp";
  }
  return "?";
}

EnsembleMethod parse_method(const std::string& s) {
  for (auto m : {EnsembleMethod::cgan, EnsembleMethod::cnn, EnsembleMethod::mlp})
    if (s == method_name(m)) return m;
  fail(Errc::unknown_method, "unknown prediction method '" + s + "' (expected cgan, cnn or mlp)");
}

void EnsembleForecast::add_row(ForecastKey key, std::span<const float> probs) {
  require(static_cast<int>(probs.size()) == n_members, Errc::shape_mismatch, "member count differs from forecast");
  keys.push_back(key);
  members.insert(members.end(), probs.begin(), probs.end());
  std::vector<double> m(probs.begin(), probs.end());
  mean.push_back(std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size()));
  spread.push_back(ensemble_spread(m));
}

void EnsembleForecast::append(const EnsembleForecast& other) {
  if (keys.empty() && n_members == 0) {
    *this = other;
    return;
  }
  require(other.n_members == n_members && other.method == method, Errc::shape_mismatch,
          "cannot append forecasts with different members or methods");
  keys.insert(keys.end(), other.keys.begin(), other.keys.end());
  members.insert(members.end(), other.members.begin(), other.members.end());
  mean.insert(mean.end(), other.mean.begin(), other.mean.end());
  spread.insert(spread.end(), other.spread.begin(), other.spread.end());
}

std::uint64_t dropout_seed(std::uint64_t seed, Date day, int window, int member) {
  return derive_seed(seed, {static_cast<std::uint64_t>(day.serial), static_cast<std::uint64_t>(window),
                            static_cast<std::uint64_t>(member)});
}

EnsembleForecast cnn_ensemble_predict(const SevereModels& models, const DayInput& input, int members,
                                      std::uint64_t seed) {
  check_input(input);
  check_digest("CNN checkpoint", models.normalizer_digest, input.normalizer_digest);
  auto fc = empty_forecast(EnsembleMethod::cnn, members, input);
  std::vector<Tensor<float>> hourly(kHoursPerDay);
  parallel_for(kHoursPerDay, [&](std::size_t h) { hourly[h] = encode_hour(models.encoder, input.stacks[h], input); });
  const auto geo = geo_tensor(input);
  auto probs = member_grid(members);
  parallel_for(kHoursPerDay, [&](std::size_t s) {
    const int w = static_cast<int>(s);
    const auto seq = window_sequence(hourly, w);
    for (int k = 0; k < members; ++k)
      probs[k][s] = classify(models.classifiers.at(s), seq, geo, dropout_seed(seed, input.day, w, k));
  });
  assemble(fc, input, probs);
  return fc;
}

EnsembleForecast cgan_ensemble_predict(const TrainedCgan& cgan, const SevereModels& models, const DayInput& input,
                                       const CganEnsembleOptions& options, std::uint64_t seed) {
  check_input(input);
  check_digest("CNN checkpoint", models.normalizer_digest, input.normalizer_digest);
  check_digest("CGAN checkpoint", cgan.normalizer_digest, input.normalizer_digest);
  const int k_gen = options.members;
  const int draws = options.cross_product ? options.dropout_draws : 1;
  require(k_gen >= 1 && draws >= 1, Errc::config_error, "CGAN ensemble needs at least one member");
  auto fc = empty_forecast(EnsembleMethod::cgan, k_gen * draws, input);

  // hourly[k][h]: features of generated member k at hour h.
  std::vector<std::vector<Tensor<float>>> hourly(k_gen, std::vector<Tensor<float>>(kHoursPerDay));
  parallel_for(kHoursPerDay, [&](std::size_t h) {
    std::vector<Tensor<float>> stacks;
    if (options.bypass_generators) {
      stacks.assign(k_gen, input.stacks[h]);
    } else {
      stacks = generate_members(cgan.a, cgan.b, cgan.cfg, input.stacks[h], k_gen,
                                derive_seed(seed, {kGeneratorSeedTag, static_cast<std::uint64_t>(input.day.serial), h}));
    }
    for (int k = 0; k < k_gen; ++k) hourly[k][h] = encode_hour(models.encoder, stacks[k], input);
  });
  const auto geo = geo_tensor(input);
  auto probs = member_grid(fc.n_members);
  parallel_for(kHoursPerDay, [&](std::size_t s) {
    const int w = static_cast<int>(s);
    for (int k = 0; k < k_gen; ++k) {
      const auto seq = window_sequence(hourly[k], w);
      for (int d = 0; d < draws; ++d) {
        const int member = k * draws + d;
        probs[member][s] = classify(models.classifiers.at(s), seq, geo, dropout_seed(seed, input.day, w, member));
      }
    }
  });
  assemble(fc, input, probs);
  return fc;
}

EnsembleForecast mlp_ensemble_predict(const SevereModels& models, const DayInput& input, int members,
                                      std::uint64_t seed) {
  check_input(input);
  check_digest("MLP checkpoint", models.normalizer_digest, input.normalizer_digest);
  auto fc = empty_forecast(EnsembleMethod::mlp, members, input);
  const auto cells = all_cells(input);
  const int n_cells = static_cast<int>(cells.size());
  // summaries[h][cell]
  std::vector<std::vector<std::vector<float>>> summaries(kHoursPerDay);
  parallel_for(kHoursPerDay, [&](std::size_t h) {
    const auto patches = stack_patches(input.stacks[h], input.index, cells);
    const auto& s = patches.shape();
    for (int c = 0; c < n_cells; ++c) summaries[h].push_back(patch_summary(patches.sample(c), s.c, s.h * s.w));
  });
  auto probs = member_grid(members);
  parallel_for(kHoursPerDay, [&](std::size_t s) {
    const int w = static_cast<int>(s);
    const auto hours = window_feature_hours(w);
    Tensor<float> x({n_cells, 1, 1, MlpModel::kMlpFeatures});
    for (int c = 0; c < n_cells; ++c) {
      std::vector<std::vector<float>> per_hour;
      for (int h : hours) per_hour.push_back(summaries[h][c]);
      const auto f = mlp_features_from_summaries(per_hour, input.geo[c]);
      std::copy(f.begin(), f.end(), x.sample(c));
    }
    for (int k = 0; k < members; ++k)
      probs[k][s] = mlp_forward(models.mlp, x, derive_seed(dropout_seed(seed, input.day, w, k), {kMlpSeedTag}));
  });
  assemble(fc, input, probs);
  return fc;
}

void write_forecast_csv(const std::filesystem::path& path, const EnsembleForecast& fc) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + path.string());
  out << "day,window,cell_row,cell_col,method,member_idx,prob\n";
  char buf[32];
  for (std::size_t r = 0; r < fc.rows(); ++r) {
    const auto& key = fc.keys[r];
    const std::string prefix = key.day.iso() + "," + std::to_string(key.window) + "," +
                               std::to_string(key.cell / fc.coarse_cols) + "," +
                               std::to_string(key.cell % fc.coarse_cols) + "," + method_name(fc.method) + ",";
    const auto m = fc.row_members(r);
    for (int k = 0; k < fc.n_members; ++k) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(m[k]));
      out << prefix << k << "," << buf << "\n";
    }
  }
  require(static_cast<bool>(out), Errc::io_error, "failed writing " + path.string());
}

EnsembleForecast read_forecast_csv(const std::filesystem::path& path, int coarse_cols) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io_error, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  require(line == "day,window,cell_row,cell_col,method,member_idx,prob", Errc::format_error,
          path.string() + " is not a forecast CSV");
  EnsembleForecast fc;
  fc.coarse_cols = coarse_cols;
  std::vector<float> row;
  ForecastKey current;
  bool open = false;
  auto flush = [&] {
    if (!open) return;
    if (fc.n_members == 0) fc.n_members = static_cast<int>(row.size());
    fc.add_row(current, row);
    row.clear();
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string day, window, crow, ccol, method, idx, prob;
    std::getline(ss, day, ',');
    std::getline(ss, window, ',');
    std::getline(ss, crow, ',');
    std::getline(ss, ccol, ',');
    std::getline(ss, method, ',');
    std::getline(ss, idx, ',');
    std::getline(ss, prob, ',');
    require(!prob.empty(), Errc::format_error, "short line in " + path.string() + ": " + line);
    const int member = std::stoi(idx);
    if (member == 0) {
      flush();
      current = {Date::parse(day), std::stoi(window), std::stoi(crow) * coarse_cols + std::stoi(ccol)};
      fc.method = parse_method(method);
      open = true;
    }
    require(open && member == static_cast<int>(row.size()), Errc::format_error,
            "members out of order in " + path.string());
    row.push_back(std::stof(prob));
  }
  flush();
  return fc;
}

void save_forecast(ArrayStore& store, const std::string& prefix, const EnsembleForecast& fc) {
  const auto n = static_cast<std::int64_t>(fc.rows());
  std::vector<std::int32_t> keys;
  for (const auto& k : fc.keys) keys.insert(keys.end(), {k.day.serial, k.window, k.cell});
  store.set_attr(prefix + "method", method_name(fc.method));
  store.set_attr(prefix + "coarse_cols", std::to_string(fc.coarse_cols));
  store.put<std::int32_t>(prefix + "keys", {n, 3}, keys);
  store.put<float>(prefix + "members", {n, fc.n_members}, fc.members);
}

EnsembleForecast load_forecast(const ArrayStore& store, const std::string& prefix) {
  EnsembleForecast fc;
  fc.method = parse_method(store.attr(prefix + "method"));
  fc.coarse_cols = std::stoi(store.attr(prefix + "coarse_cols"));
  const auto shape = store.shape(prefix + "members");
  require(shape.size() == 2, Errc::format_error, "forecast members must be 2-d");
  fc.n_members = static_cast<int>(shape[1]);
  const auto keys = store.get<std::int32_t>(prefix + "keys");
  const auto members = store.get<float>(prefix + "members");
  require(keys.size() == static_cast<std::size_t>(shape[0]) * 3, Errc::format_error, "forecast keys do not match");
  for (std::int64_t r = 0; r < shape[0]; ++r)
    fc.add_row({Date{keys[r * 3]}, keys[r * 3 + 1], keys[r * 3 + 2]},
               std::span<const float>(members.data() + r * fc.n_members, fc.n_members));
  return fc;
}

}  // namespace severe
