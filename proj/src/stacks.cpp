#include "severe/stacks.hpp"

#include "severe/digest.hpp"
#include "severe/error.hpp"

namespace severe {

nn::Tensor<float> normalized_stack(const HourFields& hour, const NormalizerSet& norms) {
  const std::size_t n = static_cast<std::size_t>(hour.rows) * hour.cols;
  require(hour.values.size() == n * kNumDiagnostics, Errc::shape_mismatch, "hour fields lack diagnostics");
  nn::Tensor<float> out({1, hour.rows, hour.cols, kNumDiagnostics});
  std::vector<float> buf(n);
  for (int ch = 0; ch < kNumDiagnostics; ++ch) {
    const auto src = hour.channel(ch);
    std::copy(src.begin(), src.end(), buf.begin());
    apply_normalizer(norms[static_cast<PredictorId>(ch)], std::span<float>(buf));
    for (std::size_t i = 0; i < n; ++i) out[i * kNumDiagnostics + ch] = buf[i];
  }
  return out;
}

NormalizerSet fit_normalizers(const SynthConfig& cfg, std::span<const Date> days, const std::string& fitted_on) {
  require(!days.empty(), Errc::empty_input, "no days to fit normalizers on");
  std::vector<std::vector<double>> samples(kNumDiagnostics);
  for (const Date d : days) {
    const auto storms = synth_storms(cfg, d);
    for (int h = 0; h < kHoursPerDay; h += 3) {
      const auto fields = synth_hour(cfg, d, h, storms);
      for (int ch = 0; ch < kNumDiagnostics; ++ch) {
        const auto v = fields.channel(ch);
        for (int r = 0; r < fields.rows; r += 4)
          for (int c = 0; c < fields.cols; c += 4) samples[ch].push_back(v[static_cast<std::size_t>(r) * fields.cols + c]);
      }
    }
  }
  NormalizerSet set;
  for (int ch = 0; ch < kNumDiagnostics; ++ch)
    set.specs.push_back(fit_normalizer(static_cast<PredictorId>(ch), samples[ch], fitted_on));
  const auto statics = static_fields(cfg);
  for (int k = 0; k < 3; ++k)
    set.specs.push_back(fit_normalizer(static_cast<PredictorId>(kNumDiagnostics + k), statics[k], "domain"));
  return set;
}

std::string normalizer_digest(const NormalizerSet& norms) { return sha256_hex(norms.to_text()); }

nn::Tensor<float> stack_patches(const nn::Tensor<float>& stack, const PatchIndexMap& index, std::span<const int> cells) {
  const auto& s = stack.shape();
  require(s.n == 1, Errc::shape_mismatch, "patches are cut from a single stack");
  nn::Tensor<float> out({static_cast<int>(cells.size()), kPatchSize, kPatchSize, s.c});
  const std::size_t row_len = static_cast<std::size_t>(kPatchSize) * s.c;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    require(cells[k] >= 0 && static_cast<std::size_t>(cells[k]) < index.origins.size(), Errc::out_of_domain,
            "cell " + std::to_string(cells[k]) + " has no footprint");
    const auto o = index.origins[cells[k]];
    require(o.row0 >= 0 && o.col0 >= 0 && o.row0 + kPatchSize <= s.h && o.col0 + kPatchSize <= s.w,
            Errc::out_of_domain, "footprint of cell " + std::to_string(cells[k]) + " leaves the grid");
    float* dst = out.sample(static_cast<int>(k));
    for (int r = 0; r < kPatchSize; ++r) {
      const float* src = stack.data() + (static_cast<std::size_t>(o.row0 + r) * s.w + o.col0) * s.c;
      std::copy(src, src + row_len, dst + r * row_len);
    }
  }
  return out;
}

std::vector<std::array<float, 3>> cell_geography(const SynthConfig& cfg, const NormalizerSet& norms,
                                                 const PatchIndexMap& index) {
  const auto statics = static_fields(cfg);
  std::vector<std::array<float, 3>> out;
  for (const auto& o : index.origins) {
    const std::size_t i = static_cast<std::size_t>(o.row0 + kPatchSize / 2) * cfg.fine_cols + o.col0 + kPatchSize / 2;
    std::array<float, 3> g{};
    for (int k = 0; k < 3; ++k)
      g[k] = static_cast<float>(apply_normalizer(norms[static_cast<PredictorId>(kNumDiagnostics + k)], statics[k][i]));
    out.push_back(g);
  }
  return out;
}

std::vector<nn::Tensor<float>> day_stacks(const SynthConfig& cfg, const NormalizerSet& norms, Date day) {
  const auto storms = synth_storms(cfg, day);
  std::vector<nn::Tensor<float>> out;
  out.reserve(kHoursPerDay);
  for (int h = 0; h < kHoursPerDay; ++h) out.push_back(normalized_stack(synth_hour(cfg, day, h, storms), norms));
  return out;
}

}  // namespace severe
