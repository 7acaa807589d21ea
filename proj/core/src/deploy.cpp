#include "w1a8/deploy.hpp"

#include <bit>
#include <stdexcept>
#include <string>

namespace w1a8 {

std::vector<int64_t> DeployedLayer::mul_raw() const {
  std::vector<int64_t> v;
  v.reserve(scales.mul_prev.size());
  for (const auto& s : scales.mul_prev) v.push_back(s.raw);
  return v;
}

std::vector<int64_t> DeployedLayer::div_raw() const {
  std::vector<int64_t> v;
  v.reserve(scales.div_current.size());
  for (const auto& s : scales.div_current) v.push_back(s.raw);
  return v;
}

QFormat DeployedLayer::acc_format() const {
  const int bits = spec.is_binary() ? kW1A8AccBits : kStandardAccBits;
  return signed_q(bits - 1 - acc_frac, acc_frac);
}

namespace {

__extension__ typedef unsigned __int128 u128;

int bits_for_magnitude(u128 v) {
  int bits = 0;
  while (v != 0) {
    ++bits;
    v >>= 1;
  }
  return bits;
}

}  // namespace

DeployedModel deploy(const ParamManifest& manifest) {
  manifest.validate();
  DeployedModel out;
  out.model = manifest.model;
  for (size_t i = 0; i < manifest.model.layers.size(); ++i) {
    const LayerSpec& spec = manifest.model.layers[i];
    const LayerParams& p = manifest.layers[i];
    DeployedLayer d;
    d.spec = spec;
    d.input_frac = i == 0 ? kQ0_8U.frac_bits : 0;

    int64_t max_weight = 0;
    if (spec.is_binary()) {
      d.signs = p.signs;
      d.mul_fmt = p.mul_fmt;
      d.acc_frac = p.mul_fmt.frac_bits + d.input_frac;
      max_weight = p.mul_fmt.max_raw();
    } else {
      d.weights.reserve(p.weights.size());
      for (double w : p.weights) d.weights.push_back(to_fixed(w, *spec.weight_fmt).raw);
      d.acc_frac = spec.weight_fmt->frac_bits + d.input_frac;
      max_weight = -spec.weight_fmt->min_raw();
    }
    d.bias.reserve(p.bias.size());
    for (double b : p.bias) d.bias.push_back(to_fixed(b, *spec.bias_fmt).raw);
    d.bias_shift = d.acc_frac - spec.bias_fmt->frac_bits;
    if (d.bias_shift < 0) {
      throw std::invalid_argument("layer " + spec.name + ": bias format " +
                                  spec.bias_fmt->to_string() +
                                  " has more fraction bits than the accumulator");
    }

    d.div_fmt = p.div_fmt;
    std::vector<double> div = spec.uses_div_current() ? p.div_current : std::vector<double>{};
    std::vector<double> mul = spec.uses_mul_prev() ? p.mul_prev : std::vector<double>{};
    d.scales = scales_to_fixed(mul, div, p.mul_fmt, p.div_fmt);
    if (spec.uses_div_current() && d.acc_frac + d.div_fmt.frac_bits > kMaxRequantFrac) {
      throw std::invalid_argument("layer " + spec.name + ": accumulator and Div_current carry " +
                                  std::to_string(d.acc_frac + d.div_fmt.frac_bits) +
                                  " fraction bits, more than " + std::to_string(kMaxRequantFrac));
    }

    if (spec.output == OutputKind::kRawQ15 && d.acc_frac < kHeadOut.frac_bits) {
      throw std::invalid_argument("layer " + spec.name + ": head accumulator has " +
                                  std::to_string(d.acc_frac) + " fraction bits, fewer than " +
                                  std::to_string(kHeadOut.frac_bits));
    }

    // Worst-case accumulator magnitude: every tap at full scale plus bias.
    const auto taps = static_cast<u128>(spec.weight_count() / spec.out_channels);
    const u128 worst =
        taps * 255u * static_cast<u128>(max_weight) +
        (static_cast<u128>(-spec.bias_fmt->min_raw()) << d.bias_shift);
    const int budget = spec.is_binary() ? kW1A8AccBits : kStandardAccBits;
    if (bits_for_magnitude(worst) + 1 > budget) {
      throw std::invalid_argument("layer " + spec.name + ": accumulator may exceed " +
                                  std::to_string(budget) + " bits");
    }
    out.layers.push_back(std::move(d));
  }
  return out;
}

}  // namespace w1a8
