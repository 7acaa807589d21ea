#include "w1a8/reference_engine.hpp"

#include <algorithm>
#include <stdexcept>

#include "w1a8/quant.hpp"

namespace w1a8 {

FloatTensor conv2d_float(const FloatTensor& input, std::span<const double> weights,
                         std::span<const double> bias, int out_channels, int kernel, int padding) {
  const Shape in = input.shape();
  if (weights.size() != static_cast<size_t>(out_channels) * in.c * kernel * kernel) {
    throw std::invalid_argument("conv2d_float: weight count does not match shape");
  }
  if (bias.size() != static_cast<size_t>(out_channels)) {
    throw std::invalid_argument("conv2d_float: bias count does not match out_channels");
  }
  if (2 * padding != kernel - 1) {
    throw std::invalid_argument("conv2d_float: padding must preserve spatial size");
  }
  FloatTensor out(Shape{out_channels, in.h, in.w});
  for (int o = 0; o < out_channels; ++o) {
    for (int y = 0; y < in.h; ++y) {
      for (int x = 0; x < in.w; ++x) {
        double acc = bias[o];
        for (int c = 0; c < in.c; ++c) {
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = y + ky - padding;
            if (iy < 0 || iy >= in.h) continue;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = x + kx - padding;
              if (ix < 0 || ix >= in.w) continue;
              const size_t wi = ((static_cast<size_t>(o) * in.c + c) * kernel + ky) * kernel + kx;
              acc += weights[wi] * input.at(c, iy, ix);
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& input) {
  const Shape s = input.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("maxpool2x2: odd spatial size " + s.to_string());
  }
  Tensor<T> out(Shape{s.c, s.h / 2, s.w / 2});
  for (int c = 0; c < s.c; ++c) {
    for (int y = 0; y < s.h / 2; ++y) {
      for (int x = 0; x < s.w / 2; ++x) {
        out.at(c, y, x) = std::max({input.at(c, 2 * y, 2 * x), input.at(c, 2 * y, 2 * x + 1),
                                    input.at(c, 2 * y + 1, 2 * x),
                                    input.at(c, 2 * y + 1, 2 * x + 1)});
      }
    }
  }
  return out;
}

template Tensor<uint8_t> maxpool2x2(const Tensor<uint8_t>&);
template Tensor<double> maxpool2x2(const Tensor<double>&);
template Tensor<int64_t> maxpool2x2(const Tensor<int64_t>&);

FloatTensor normalize_image(const ActTensor& image) {
  FloatTensor out(image.shape());
  for (size_t i = 0; i < image.size(); ++i) out.data()[i] = image.data()[i] / 255.0;
  return out;
}

FloatForward forward_float(const ParamManifest& manifest, const ActTensor& image) {
  return forward_float(manifest, normalize_image(image));
}

FloatForward forward_float(const ParamManifest& manifest, const FloatTensor& image) {
  manifest.validate();
  const ModelSpec& model = manifest.model;
  if (image.shape() != model.input) {
    throw std::invalid_argument("forward_float: image shape " + image.shape().to_string() +
                                " != model input " + model.input.to_string());
  }
  FloatForward result;
  FloatTensor x = image;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& spec = model.layers[i];
    const LayerParams& p = manifest.layers[i];
    FloatLayerOutput out;
    out.layer = spec.name;

    if (spec.is_binary()) {
      // Fold m_i into +-1 weights; the float graph applies Mul_prev per input channel.
      std::vector<double> w(p.signs.size());
      for (int o = 0; o < spec.out_channels; ++o) {
        for (int c = 0; c < spec.in_channels; ++c) {
          for (int ky = 0; ky < spec.kernel; ++ky) {
            for (int kx = 0; kx < spec.kernel; ++kx) {
              const size_t k = p.signs.index(o, c, ky, kx);
              w[k] = p.signs.sign(o, c, ky, kx) * p.mul_prev[c];
            }
          }
        }
      }
      out.pre = conv2d_float(x, w, p.bias, spec.out_channels, spec.kernel, spec.padding());
    } else {
      out.pre = conv2d_float(x, p.weights, p.bias, spec.out_channels, spec.kernel, spec.padding());
    }

    if (spec.output == OutputKind::kRawQ15) {
      result.head = out.pre;
      result.layers.push_back(std::move(out));
      break;
    }

    const ActQuantParams aq = make_act_quant(*p.act_step);
    const Shape s = out.pre.shape();
    out.post = ActTensor(s);
    out.post_real = FloatTensor(s);
    for (int o = 0; o < s.c; ++o) {
      const double to_act = p.div_current[o] * aq.step;
      for (int y = 0; y < s.h; ++y) {
        for (int xx = 0; xx < s.w; ++xx) {
          const uint8_t q = quantize_act(out.pre.at(o, y, xx) * to_act, aq);
          out.post.at(o, y, xx) = q;
          out.post_real.at(o, y, xx) = dequantize_act(q, aq);
        }
      }
    }
    out.pooled = spec.has_maxpool ? maxpool2x2(out.post) : out.post;

    // The next layer consumes the integer grid; its Mul_prev (W1A8) or its
    // weights (standard) carry the step back to real units.
    x = FloatTensor(out.pooled.shape());
    for (size_t k = 0; k < x.size(); ++k) x.data()[k] = out.pooled.data()[k];
    result.layers.push_back(std::move(out));
  }
  return result;
}

namespace {

Tensor<int64_t> zero_pad(const Tensor<int64_t>& in, int pad) {
  if (pad == 0) return in;
  const Shape s = in.shape();
  Tensor<int64_t> out(Shape{s.c, s.h + 2 * pad, s.w + 2 * pad}, 0);
  for (int c = 0; c < s.c; ++c) {
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) out.at(c, y + pad, x + pad) = in.at(c, y, x);
    }
  }
  return out;
}

}  // namespace

FixedForward forward_fixed_direct(const DeployedModel& model, const ActTensor& image) {
  if (image.shape() != model.model.input) {
    throw std::invalid_argument("forward_fixed_direct: image shape " +
                                image.shape().to_string() + " != model input " +
                                model.model.input.to_string());
  }
  FixedForward result;
  Tensor<int64_t> act(image.shape());
  for (size_t i = 0; i < image.size(); ++i) act.data()[i] = image.data()[i];

  for (const DeployedLayer& d : model.layers) {
    const LayerSpec& spec = d.spec;
    const int k = spec.kernel;
    const Shape in = act.shape();
    const Tensor<int64_t> padded = zero_pad(act, spec.padding());
    const QFormat acc_fmt = d.acc_format();
    const std::vector<int64_t> mul = d.mul_raw();

    FixedLayerOutput out;
    out.layer = spec.name;
    out.pre = FxTensor{Tensor<int64_t>(Shape{spec.out_channels, in.h, in.w}), acc_fmt};
    for (int o = 0; o < spec.out_channels; ++o) {
      for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
          int64_t acc = 0;
          for (int c = 0; c < in.c; ++c) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const int64_t a = padded.at(c, y + ky, x + kx);
                if (spec.is_binary()) {
                  const int64_t term = mul[c] * a;
                  acc += d.signs.sign(o, c, ky, kx) > 0 ? term : -term;
                } else {
                  const size_t wi = ((static_cast<size_t>(o) * in.c + c) * k + ky) * k + kx;
                  acc += d.weights[wi] * a;
                }
              }
            }
          }
          acc += d.bias[o] * (int64_t{1} << d.bias_shift);
          if (!acc_fmt.contains_raw(acc)) {
            throw std::overflow_error("forward_fixed_direct: accumulator budget exceeded in " +
                                      spec.name);
          }
          out.pre.values.at(o, y, x) = acc;
        }
      }
    }

    if (spec.output == OutputKind::kRawQ15) {
      if (d.acc_frac < kHeadOut.frac_bits) {
        throw std::invalid_argument("head accumulator has fewer than 15 fraction bits");
      }
      result.head = FxTensor{Tensor<int64_t>(out.pre.values.shape()), kHeadOut};
      for (size_t n = 0; n < out.pre.values.size(); ++n) {
        const FxValue v{out.pre.values.data()[n], acc_fmt};
        result.head.values.data()[n] = fx_rescale(v, kHeadOut.frac_bits, kHeadOut).raw;
      }
      result.layers.push_back(std::move(out));
      break;
    }

    out.post = ActTensor(out.pre.values.shape());
    const Shape s = out.post.shape();
    for (int o = 0; o < s.c; ++o) {
      const FxValue scale = d.scales.div_current[o];
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          const FxValue v{out.pre.values.at(o, y, x), acc_fmt};
          out.post.at(o, y, x) = requantize_u8(v, scale);
        }
      }
    }
    out.pooled = spec.has_maxpool ? maxpool2x2(out.post) : out.post;
    act = Tensor<int64_t>(out.pooled.shape());
    for (size_t n = 0; n < act.size(); ++n) act.data()[n] = out.pooled.data()[n];
    result.layers.push_back(std::move(out));
  }
  return result;
}

}  // namespace w1a8
