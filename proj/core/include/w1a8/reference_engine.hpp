#pragma once

#include <span>
#include <string>
#include <vector>

#include "w1a8/deploy.hpp"
#include "w1a8/manifest.hpp"
#include "w1a8/tensor.hpp"

namespace w1a8 {

// Zero-padded cross-correlation plus bias; weights are [oc][ic][ky][kx].
// Output spatial size equals the input's (padding 1 for 3x3, 0 for 1x1).
FloatTensor conv2d_float(const FloatTensor& input, std::span<const double> weights,
                         std::span<const double> bias, int out_channels, int kernel, int padding);

// Stride-2 2x2 window max. Throws std::invalid_argument on odd H or W.
template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& input);

struct FloatLayerOutput {
  std::string layer;
  FloatTensor pre;         // convolution plus bias
  ActTensor post;          // quantized activation grid (u8 layers)
  FloatTensor post_real;   // post * s_a
  ActTensor pooled;        // after the optional max-pool
};

struct FloatForward {
  std::vector<FloatLayerOutput> layers;
  FloatTensor head;  // raw head, real units
};

// Floating-point reference. The image holds normalized pixels in [0, 1].
FloatForward forward_float(const ParamManifest& manifest, const FloatTensor& image);
// Convenience: byte pixels normalized by 1/255.
FloatForward forward_float(const ParamManifest& manifest, const ActTensor& image);

FloatTensor normalize_image(const ActTensor& image);

struct FixedLayerOutput {
  std::string layer;
  FxTensor pre;     // accumulator + aligned bias, at the accumulator fraction
  ActTensor post;   // u8 layers
  ActTensor pooled;
};

struct FixedForward {
  std::vector<FixedLayerOutput> layers;
  FxTensor head;  // signed 32-bit raw, 15 fraction bits
};

// Direct (non-streaming) integer forward pass over whole tensors. Pixel bytes
// are read as Q0.8, so p maps to p / 256.
FixedForward forward_fixed_direct(const DeployedModel& model, const ActTensor& image);

}  // namespace w1a8
