#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "severe/griddata.hpp"
#include "severe/nn/tensor.hpp"
#include "severe/normalize.hpp"
#include "severe/stormgen.hpp"

namespace severe {

// Normalized diagnostics of one hour as an NHWC tensor (1, rows, cols, 15).
nn::Tensor<float> normalized_stack(const HourFields& hour, const NormalizerSet& norms);

// Diagnostics are fitted on every fourth grid point of every third hour of
// the given days; statics on the whole fine domain.
NormalizerSet fit_normalizers(const SynthConfig& cfg, std::span<const Date> days, const std::string& fitted_on);

// SHA-256 of the normalizers' text form; checkpoints carry it.
std::string normalizer_digest(const NormalizerSet& norms);

// 64x64 patches (cells.size(), 64, 64, C) cut from a (1, rows, cols, C) stack.
nn::Tensor<float> stack_patches(const nn::Tensor<float>& stack, const PatchIndexMap& index, std::span<const int> cells);

// Scaled latitude, longitude and elevation at each coarse cell's footprint
// center.
std::vector<std::array<float, 3>> cell_geography(const SynthConfig& cfg, const NormalizerSet& norms,
                                                 const PatchIndexMap& index);

// Normalized stacks of all 24 hours of a day, regenerated from the seed.
std::vector<nn::Tensor<float>> day_stacks(const SynthConfig& cfg, const NormalizerSet& norms, Date day);

}  // namespace severe
