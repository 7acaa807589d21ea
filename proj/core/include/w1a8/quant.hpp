#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "w1a8/fixedpoint.hpp"

namespace w1a8 {

// 1-bit weights in canonical [out][in][ky][kx] order. A stored bit of 1 is +1,
// 0 is -1.
struct BinaryWeight {
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 1;
  std::vector<uint8_t> bits;

  BinaryWeight() = default;
  BinaryWeight(int out_ch, int in_ch, int k)
      : out_channels(out_ch), in_channels(in_ch), kernel(k),
        bits(static_cast<size_t>(out_ch) * in_ch * k * k, 1) {}

  size_t size() const { return bits.size(); }
  size_t index(int o, int i, int ky, int kx) const {
    return ((static_cast<size_t>(o) * in_channels + i) * kernel + ky) * kernel + kx;
  }
  int sign(int o, int i, int ky, int kx) const { return bits[index(o, i, ky, kx)] ? 1 : -1; }

  friend bool operator==(const BinaryWeight&, const BinaryWeight&) = default;
};

// Element-wise sign, sign(0) = +1. Throws std::invalid_argument on NaN.
BinaryWeight binarize(std::span<const double> w, int out_channels, int in_channels, int kernel);

struct ActQuantParams {
  double step = 1.0;  // s_a
  FxValue step_fixed{};
  FxValue inv_step_fixed{};
};

// Throws std::invalid_argument unless step > 0 and finite.
ActQuantParams make_act_quant(double step, const QFormat& step_fmt = kQ2_14,
                              const QFormat& inv_fmt = signed_q(10, 14));

// clip(round(x / s_a), 0, 255) with ties away from zero.
uint8_t quantize_act(double x, const ActQuantParams& p);
double dequantize_act(uint8_t q, const ActQuantParams& p);

struct ChannelScales {
  std::vector<FxValue> mul_prev;     // per input channel
  std::vector<FxValue> div_current;  // per output channel

  friend bool operator==(const ChannelScales&, const ChannelScales&) = default;
};

// Converts the real scales with to_fixed. A scale that is non-positive,
// non-finite or outside its format is a hard error (std::invalid_argument):
// a saturated scale would silently distort a whole channel.
ChannelScales scales_to_fixed(std::span<const double> mul_prev, std::span<const double> div_current,
                              const QFormat& fmt_mul = kQ2_14, const QFormat& fmt_div = kQ0_16U);

// Sign-controlled accumulation: each activation is added when its sign bit
// is set and subtracted otherwise. No multiplies.
int64_t sign_accumulate(std::span<const uint8_t> acts, std::span<const uint8_t> sign_bits);

}  // namespace w1a8
