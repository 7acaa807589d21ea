#include "w1a8/quant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace w1a8 {

BinaryWeight binarize(std::span<const double> w, int out_channels, int in_channels, int kernel) {
  BinaryWeight b(out_channels, in_channels, kernel);
  if (b.size() != w.size()) {
    throw std::invalid_argument("binarize: " + std::to_string(w.size()) +
                                " weights for a tensor of " + std::to_string(b.size()));
  }
  for (size_t i = 0; i < w.size(); ++i) {
    if (std::isnan(w[i])) throw std::invalid_argument("binarize: NaN weight");
    b.bits[i] = w[i] >= 0.0 ? 1 : 0;
  }
  return b;
}

ActQuantParams make_act_quant(double step, const QFormat& step_fmt, const QFormat& inv_fmt) {
  if (!(step > 0.0) || !std::isfinite(step)) {
    throw std::invalid_argument("activation step must be positive and finite");
  }
  return ActQuantParams{step, to_fixed(step, step_fmt), to_fixed(1.0 / step, inv_fmt)};
}

uint8_t quantize_act(double x, const ActQuantParams& p) {
  const double r = std::round(x / p.step);
  if (!(r > 0.0)) return 0;  // also maps NaN to 0
  if (r >= 255.0) return 255;
  return static_cast<uint8_t>(r);
}

double dequantize_act(uint8_t q, const ActQuantParams& p) { return q * p.step; }

namespace {

std::vector<FxValue> convert_scales(std::span<const double> v, const QFormat& fmt,
                                    const char* what) {
  if (!fmt.valid()) throw std::invalid_argument(std::string(what) + ": invalid format");
  std::vector<FxValue> out;
  out.reserve(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    const double s = v[i];
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument(std::string(what) + "[" + std::to_string(i) +
                                  "] is not a positive finite scale");
    }
    const FxValue fx = to_fixed(s, fmt);
    const double half_lsb = std::ldexp(1.0, -fmt.frac_bits - 1);
    if (s > fmt.max_value() + half_lsb || fx.raw <= 0) {
      throw std::invalid_argument(std::string(what) + "[" + std::to_string(i) + "] = " +
                                  std::to_string(s) + " does not fit " + fmt.to_string());
    }
    out.push_back(fx);
  }
  return out;
}

}  // namespace

ChannelScales scales_to_fixed(std::span<const double> mul_prev, std::span<const double> div_current,
                              const QFormat& fmt_mul, const QFormat& fmt_div) {
  return ChannelScales{convert_scales(mul_prev, fmt_mul, "mul_prev"),
                       convert_scales(div_current, fmt_div, "div_current")};
}

int64_t sign_accumulate(std::span<const uint8_t> acts, std::span<const uint8_t> sign_bits) {
  if (acts.size() != sign_bits.size()) {
    throw std::invalid_argument("sign_accumulate: length mismatch");
  }
  int64_t acc = 0;
  for (size_t i = 0; i < acts.size(); ++i) {
    if (sign_bits[i]) {
      acc += acts[i];
    } else {
      acc -= acts[i];
    }
  }
  return acc;
}

}  // namespace w1a8
