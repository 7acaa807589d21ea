#include "w1a8/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <stdexcept>
#include <string>

#include "w1a8/quant.hpp"
#include "w1a8/reference_engine.hpp"

namespace w1a8 {

FixtureRng::FixtureRng(uint64_t seed) : engine_(seed) {}

uint64_t FixtureRng::next() { return engine_(); }

double FixtureRng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double FixtureRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int FixtureRng::uniform_int(int lo, int hi) {
  const auto span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(next() % span);
}

double FixtureRng::normal() {
  // Box-Muller; 1 - u keeps the log argument away from zero.
  const double u = 1.0 - uniform();
  const double v = uniform();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

namespace {

// 99th percentile of each channel lands here on the 8-bit grid; trained 8-bit
// activations rarely sit near the clip level.
constexpr double kTargetLevel = 80.0;
constexpr int kDivWidth = 16;
constexpr double kMaxDiv = 2000.0;

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  const size_t k = std::min(v.size() - 1, static_cast<size_t>(p * (v.size() - 1) + 0.5));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

double clamp_to(double x, const QFormat& f) {
  const double lim = 0.9 * std::min(f.max_value(), -f.min_value());
  return std::clamp(x, -lim, lim);
}

// Smallest unsigned 16-bit format holding every scale.
QFormat div_format_for(const std::vector<double>& div) {
  const double hi = *std::max_element(div.begin(), div.end());
  int m = 0;
  while (m < kDivWidth - 4 && hi >= std::ldexp(1.0, m) - std::ldexp(1.0, m - kDivWidth)) ++m;
  return unsigned_q(m, kDivWidth - m);
}

FloatTensor conv_no_bias(const FloatTensor& x, const LayerSpec& spec, const LayerParams& p) {
  const std::vector<double> zero(static_cast<size_t>(spec.out_channels), 0.0);
  if (!spec.is_binary()) {
    return conv2d_float(x, p.weights, zero, spec.out_channels, spec.kernel, spec.padding());
  }
  std::vector<double> w(p.signs.size());
  for (int o = 0; o < spec.out_channels; ++o) {
    for (int c = 0; c < spec.in_channels; ++c) {
      for (int ky = 0; ky < spec.kernel; ++ky) {
        for (int kx = 0; kx < spec.kernel; ++kx) {
          w[p.signs.index(o, c, ky, kx)] = p.signs.sign(o, c, ky, kx) * p.mul_prev[c];
        }
      }
    }
  }
  return conv2d_float(x, w, zero, spec.out_channels, spec.kernel, spec.padding());
}

std::vector<double> channel_values(const FloatTensor& t, int c) {
  const Shape s = t.shape();
  const auto n = static_cast<size_t>(s.h) * s.w;
  const auto begin = t.data().begin() + static_cast<std::ptrdiff_t>(c * n);
  return {begin, begin + static_cast<std::ptrdiff_t>(n)};
}

}  // namespace

ParamManifest random_manifest(const ModelSpec& model, uint64_t seed) {
  model.validate();
  FixtureRng rng(seed);
  ParamManifest m;
  m.model = model;

  FloatTensor x = normalize_image(synthetic_image(model.input, seed ^ 0x9e3779b97f4a7c15ull));
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& spec = model.layers[i];
    LayerParams p;
    p.layer = spec.name;
    const int fan_in = spec.in_channels * spec.kernel * spec.kernel;

    if (spec.is_binary()) {
      p.signs = BinaryWeight(spec.out_channels, spec.in_channels, spec.kernel);
      for (auto& b : p.signs.bits) b = static_cast<uint8_t>(rng.next() & 1u);
      p.mul_prev.resize(static_cast<size_t>(spec.in_channels));
      for (auto& v : p.mul_prev) v = std::exp(rng.uniform(std::log(0.05), std::log(0.2)));
    } else {
      // The first layer reads [0, 1] pixels; later standard layers read the
      // integer grid and need correspondingly small weights.
      const double sigma = (i == 0 ? 1.0 : 0.04) / std::sqrt(static_cast<double>(fan_in));
      p.weights.resize(static_cast<size_t>(spec.weight_count()));
      for (auto& w : p.weights) w = clamp_to(sigma * rng.normal(), *spec.weight_fmt);
    }

    const FloatTensor conv = conv_no_bias(x, spec, p);
    p.bias.resize(static_cast<size_t>(spec.out_channels));

    if (spec.output == OutputKind::kRawQ15) {
      for (auto& b : p.bias) b = clamp_to(0.5 * rng.normal(), *spec.bias_fmt);
      m.layers.push_back(std::move(p));
      break;
    }

    FloatTensor pre = conv;
    p.div_current.resize(static_cast<size_t>(spec.out_channels));
    for (int o = 0; o < spec.out_channels; ++o) {
      const auto vals = channel_values(conv, o);
      const double bias = clamp_to(-percentile(vals, 0.4), *spec.bias_fmt);
      p.bias[static_cast<size_t>(o)] = bias;
      // Small maps can have nearly flat channels; the spread keeps the scale sane.
      const double spread = percentile(vals, 1.0) - percentile(vals, 0.0);
      double hi = std::max(percentile(vals, 0.99) + bias, 0.5 * spread);
      if (!(hi > 0)) hi = std::max(1.0, std::abs(vals.front()));
      p.div_current[static_cast<size_t>(o)] = std::min(kTargetLevel / hi, kMaxDiv);
    }
    p.div_fmt = div_format_for(p.div_current);
    const double lsb = std::ldexp(1.0, -p.div_fmt.frac_bits);
    for (auto& d : p.div_current) d = std::max(d, 4 * lsb);

    std::vector<double> inv(p.div_current.size());
    for (size_t o = 0; o < inv.size(); ++o) inv[o] = 1.0 / p.div_current[o];
    p.act_step = percentile(inv, 0.5);

    // Advance the calibration input exactly as the float reference would.
    const ActQuantParams aq = make_act_quant(*p.act_step);
    const Shape s = conv.shape();
    ActTensor q(s);
    for (int o = 0; o < s.c; ++o) {
      const double to_act = p.div_current[static_cast<size_t>(o)] * aq.step;
      for (int y = 0; y < s.h; ++y) {
        for (int xx = 0; xx < s.w; ++xx) {
          q.at(o, y, xx) = quantize_act((conv.at(o, y, xx) + p.bias[static_cast<size_t>(o)]) * to_act, aq);
        }
      }
    }
    if (spec.has_maxpool) q = maxpool2x2(q);
    x = FloatTensor(q.shape());
    for (size_t k = 0; k < q.size(); ++k) x.data()[k] = q.data()[k];
    m.layers.push_back(std::move(p));
  }
  m.validate();
  return m;
}

ModelSpec random_tiny_model(uint64_t seed) {
  FixtureRng rng(seed);
  ModelSpec m;
  m.input = Shape{rng.uniform_int(1, 4), 8, 8};
  m.head_pe_num = rng.uniform_int(1, 5);
  const int layers = rng.uniform_int(3, 4);
  int channels = m.input.c;
  int size = 8;
  for (int i = 0; i < layers; ++i) {
    LayerSpec l;
    l.name = "conv" + std::to_string(i + 1);
    l.in_channels = channels;
    l.kernel = rng.chance(0.7) ? 3 : 1;
    const bool last = i + 1 == layers;
    if (i == 0) {
      l.kind = ConvKind::kStandard;
      l.weight_fmt = kQ5_11;
      l.bias_fmt = kQ2_14;
    } else if (last || rng.chance(0.2)) {
      l.kind = ConvKind::kStandard;
      l.weight_fmt = kQ1_15;
      l.bias_fmt = kQ4_12;
    } else {
      l.kind = ConvKind::kW1A8;
      l.bias_fmt = kW1A8BiasDefault;
    }
    if (last) {
      l.out_channels = rng.uniform_int(2, 10);
      l.output = OutputKind::kRawQ15;
      l.has_post = false;
    } else {
      l.out_channels = rng.uniform_int(2, 8);
      l.has_maxpool = size >= 2 && size % 2 == 0 && rng.chance(0.5);
      if (l.has_maxpool) size /= 2;
    }
    channels = l.out_channels;
    m.layers.push_back(l);
  }
  m.validate();
  return m;
}

ActTensor random_image(Shape shape, uint64_t seed) {
  FixtureRng rng(seed);
  ActTensor img(shape);
  for (auto& v : img.data()) v = static_cast<uint8_t>(rng.next() >> 56);
  return img;
}

ActTensor synthetic_image(Shape shape, uint64_t seed) {
  FixtureRng rng(seed);
  struct Blob {
    double cx, cy, r, color[4];
  };
  std::vector<Blob> blobs(6);
  for (auto& b : blobs) {
    b.cx = rng.uniform();
    b.cy = rng.uniform();
    b.r = rng.uniform(0.05, 0.25);
    for (double& c : b.color) c = rng.uniform(-120, 120);
  }
  double phase[4];
  for (double& p : phase) p = rng.uniform(0, 2 * std::numbers::pi);
  ActTensor img(shape);
  for (int c = 0; c < shape.c; ++c) {
    for (int y = 0; y < shape.h; ++y) {
      for (int x = 0; x < shape.w; ++x) {
        const double u = (x + 0.5) / shape.w;
        const double v = (y + 0.5) / shape.h;
        double val = 128 + 60 * std::sin(2 * std::numbers::pi * (u + 0.5 * v) + phase[c % 4]) +
                     30 * (u - v);
        for (const Blob& b : blobs) {
          const double d2 = ((u - b.cx) * (u - b.cx) + (v - b.cy) * (v - b.cy)) / (b.r * b.r);
          val += b.color[c % 4] * std::exp(-d2);
        }
        val += rng.uniform(-4, 4);
        img.at(c, y, x) = static_cast<uint8_t>(std::clamp(std::lround(val), 0L, 255L));
      }
    }
  }
  return img;
}

uint64_t seed_from_env(uint64_t fallback) {
  const char* s = std::getenv("W1A8_SEED");
  if (s == nullptr || *s == '\0') return fallback;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 0);
  if (end == s || *end != '\0') {
    throw std::invalid_argument(std::string("W1A8_SEED is not a number: '") + s + "'");
  }
  return v;
}

}  // namespace w1a8
