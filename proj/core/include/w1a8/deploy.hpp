#pragma once

#include <cstdint>
#include <vector>

#include "w1a8/manifest.hpp"
#include "w1a8/model_graph.hpp"
#include "w1a8/quant.hpp"

namespace w1a8 {

// Fixed-point image of one layer's parameters, i.e. the ROM contents.
struct DeployedLayer {
  LayerSpec spec;
  BinaryWeight signs;              // W1A8
  std::vector<int64_t> weights;    // standard, raw at spec.weight_fmt
  std::vector<int64_t> bias;       // raw at spec.bias_fmt
  ChannelScales scales;            // mul_prev (W1A8), div_current (u8 output)
  QFormat mul_fmt = kQ2_14;
  QFormat div_fmt = kQ0_16U;
  int input_frac = 0;              // 8 for the image, 0 for u8 activations
  int acc_frac = 0;                // fraction of the accumulator
  int bias_shift = 0;              // acc_frac - bias_frac

  std::vector<int64_t> mul_raw() const;
  std::vector<int64_t> div_raw() const;
  QFormat acc_format() const;
};

struct DeployedModel {
  ModelSpec model;
  std::vector<DeployedLayer> layers;
};

// Weights and biases saturate to their formats; scales that would saturate
// are rejected. Throws std::invalid_argument when a bias carries more
// fraction bits than its accumulator.
DeployedModel deploy(const ParamManifest& manifest);

// Accumulator budgets: products plus sums are provably inside these widths
// for every admissible layer (checked by deploy()).
inline constexpr int kW1A8AccBits = 48;
inline constexpr int kStandardAccBits = 40;

}  // namespace w1a8
