#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "w1a8/deploy.hpp"
#include "w1a8/fixture.hpp"
#include "w1a8/manifest.hpp"
#include "w1a8/reference_engine.hpp"
#include "w1a8/tensor_io.hpp"

using namespace w1a8;

namespace {

FloatTensor random_float(Shape s, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  FloatTensor t(s);
  for (double& v : t.data()) v = u(rng);
  return t;
}

std::filesystem::path tiny_dir() { return testutil::fixture_dir() / "tiny"; }

// One standard 3x3 layer that is also the head: 3 -> 2 channels on 6x6.
ParamManifest single_head_layer(uint64_t seed) {
  ModelSpec m;
  m.input = Shape{3, 6, 6};
  m.head_pe_num = 2;
  LayerSpec l;
  l.name = "conv1";
  l.kind = ConvKind::kStandard;
  l.in_channels = 3;
  l.out_channels = 2;
  l.kernel = 3;
  l.has_post = false;
  l.weight_fmt = kQ1_15;
  l.bias_fmt = kQ4_12;
  l.output = OutputKind::kRawQ15;
  m.layers.push_back(l);
  ParamManifest p;
  p.model = m;
  LayerParams lp;
  lp.layer = "conv1";
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 54; ++i) lp.weights.push_back(u(rng));
  lp.bias = {u(rng), u(rng)};
  p.layers.push_back(lp);
  return p;
}

}  // namespace

TEST(Conv2dFloat, DeltaAndConstantKernels) {
  const FloatTensor one(Shape{1, 1, 1}, 5.0);
  std::vector<double> delta(9, 0.0);
  delta[4] = 1.0;
  const std::vector<double> zero_bias = {0.0};
  EXPECT_EQ(conv2d_float(one, delta, zero_bias, 1, 3, 1).at(0, 0, 0), 5.0);

  const FloatTensor in = random_float(Shape{2, 5, 4}, 1);
  const std::vector<double> zeros(2 * 2 * 9, 0.0);
  const std::vector<double> b = {0.25, -3.0};
  const FloatTensor out = conv2d_float(in, zeros, b, 2, 3, 1);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 4; ++x) {
      EXPECT_EQ(out.at(0, y, x), 0.25);
      EXPECT_EQ(out.at(1, y, x), -3.0);
    }
  }
}

TEST(Conv2dFloat, MatchesLoopOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k : {1, 3}) {
    for (int t = 0; t < 20; ++t) {
      const FloatTensor in = random_float(Shape{1 + t % 3, 4, 4}, 100 + t);
      const int oc = 1 + t % 4;
      std::vector<double> w(static_cast<size_t>(oc) * in.shape().c * k * k);
      std::vector<double> b(oc);
      for (double& v : w) v = u(rng);
      for (double& v : b) v = u(rng);
      const FloatTensor got = conv2d_float(in, w, b, oc, k, k / 2);
      const FloatTensor want = oracle::conv(in, w, b, oc, k);
      ASSERT_EQ(got.shape(), want.shape());
      for (size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got.data()[i], want.data()[i], 1e-12);
    }
  }
}

TEST(Conv2dFloat, RejectsShapeMismatch) {
  const FloatTensor in(Shape{2, 3, 3});
  const std::vector<double> w(9), b(1);
  EXPECT_THROW(conv2d_float(in, w, b, 1, 3, 1), std::invalid_argument);
  const std::vector<double> w2(18), b2(2);
  EXPECT_THROW(conv2d_float(in, w2, b2, 1, 3, 1), std::invalid_argument);
  EXPECT_THROW(conv2d_float(in, w2, b, 1, 3, 0), std::invalid_argument);
}

TEST(Maxpool, Examples) {
  const ActTensor t(Shape{1, 2, 2}, std::vector<uint8_t>{1, 2, 3, 4});
  EXPECT_EQ(maxpool2x2(t).data(), (std::vector<uint8_t>{4}));
  const ActTensor c(Shape{3, 6, 4}, 9);
  EXPECT_EQ(maxpool2x2(c), ActTensor(Shape{3, 3, 2}, 9));
  EXPECT_THROW(maxpool2x2(ActTensor(Shape{1, 3, 4})), std::invalid_argument);
  EXPECT_THROW(maxpool2x2(ActTensor(Shape{1, 4, 5})), std::invalid_argument);
}

TEST(Maxpool, MatchesLoopOracle) {
  for (uint64_t s = 0; s < 20; ++s) {
    const ActTensor img = random_image(Shape{3, 8, 8}, s);
    EXPECT_EQ(maxpool2x2(img), oracle::pool(img));
    const FloatTensor f = random_float(Shape{2, 8, 8}, s);
    EXPECT_EQ(maxpool2x2(f), oracle::pool(f));
  }
}

TEST(ForwardFloat, ZeroImageZeroBiasGivesZeroHead) {
  ParamManifest m = load_manifest(tiny_dir() / "manifest");
  for (auto& p : m.layers) std::fill(p.bias.begin(), p.bias.end(), 0.0);
  const FloatForward f = forward_float(m, ActTensor(m.model.input, 0));
  for (double v : f.head.data()) EXPECT_EQ(v, 0.0);
}

TEST(ForwardFloat, TinyFixtureGoldens) {
  const ParamManifest m = load_manifest(tiny_dir() / "manifest");
  const ActTensor img = read_u8_dump(tiny_dir(), "image");
  const FloatForward f = forward_float(m, img);
  ASSERT_EQ(f.layers.size(), m.layers.size());
  for (size_t l = 0; l < m.layers.size(); ++l) {
    const std::string n = m.model.layers[l].name;
    const FloatTensor pre = read_f64_dump(tiny_dir() / "golden", n + "_float_pre");
    ASSERT_EQ(f.layers[l].pre.shape(), pre.shape()) << n;
    for (size_t i = 0; i < pre.size(); ++i) ASSERT_NEAR(f.layers[l].pre.data()[i], pre.data()[i], 1e-9) << n;
    if (m.model.layers[l].output != OutputKind::kU8) continue;
    const ActTensor post = read_u8_dump(tiny_dir() / "golden", n + "_float_post");
    EXPECT_EQ(f.layers[l].post, post) << n;
    const double step = *m.layers[l].act_step;
    for (size_t i = 0; i < post.size(); ++i) EXPECT_EQ(f.layers[l].post_real.data()[i], post.data()[i] * step);
  }
  EXPECT_EQ(f.head, f.layers.back().pre);
}

TEST(ForwardFloat, DefaultModelShapes) {
  const ParamManifest m = load_manifest(testutil::fixture_dir() / "default" / "manifest");
  const FloatForward f = forward_float(m, FloatTensor(m.model.input, 0.5));
  const int hw[] = {320, 160, 80, 40, 20, 20, 20, 10, 10, 10, 10};
  ASSERT_EQ(f.layers.size(), 11u);
  for (size_t l = 0; l < 11; ++l) {
    EXPECT_EQ(f.layers[l].pre.shape().h, hw[l]);
    EXPECT_EQ(f.layers[l].pre.shape().w, hw[l]);
  }
  EXPECT_EQ(f.layers[0].pooled.shape(), (Shape{16, 160, 160}));
  EXPECT_EQ(f.head.shape(), (Shape{75, 10, 10}));
  EXPECT_THROW(forward_float(m, FloatTensor(Shape{3, 32, 32})), std::invalid_argument);
}

TEST(Deploy, FormatsAndShifts) {
  const DeployedModel d = deploy(load_manifest(testutil::fixture_dir() / "default" / "manifest"));
  ASSERT_EQ(d.layers.size(), 11u);
  EXPECT_EQ(d.layers[0].input_frac, 8);
  EXPECT_EQ(d.layers[0].acc_frac, 19);   // Q5.11 weights on Q0.8 pixels
  EXPECT_EQ(d.layers[0].bias_shift, 5);  // Q2.14 bias
  EXPECT_EQ(d.layers[1].acc_frac, 14);   // Q2.14 Mul_prev on integer activations
  EXPECT_EQ(d.layers[1].bias_shift, 0);
  EXPECT_EQ(d.layers[10].acc_frac, 15);
  EXPECT_EQ(d.layers[10].bias_shift, 3);
  EXPECT_EQ(d.layers[1].acc_format().width(), kW1A8AccBits);
  EXPECT_EQ(d.layers[0].acc_format().width(), kStandardAccBits);
  EXPECT_TRUE(d.layers[10].scales.div_current.empty());
  EXPECT_TRUE(d.layers[0].scales.mul_prev.empty());
  EXPECT_EQ(d.layers[4].mul_raw().size(), 128u);
}

TEST(Deploy, RejectsBiasFinerThanAccumulator) {
  ParamManifest m = load_manifest(tiny_dir() / "manifest");
  m.model.layers[2].bias_fmt = signed_q(1, 20);  // accumulator has 15 fraction bits
  EXPECT_THROW(deploy(m), std::invalid_argument);
}

TEST(Deploy, RejectsScaleOutsideItsFormat) {
  ParamManifest m = load_manifest(tiny_dir() / "manifest");
  m.layers[1].mul_prev[0] = 9.0;  // Q2.14 tops out below 4
  EXPECT_THROW(deploy(m), std::invalid_argument);
}

TEST(Deploy, RejectsHeadCoarserThanOutputFormat) {
  ParamManifest m = load_manifest(tiny_dir() / "manifest");
  m.model.layers[3].weight_fmt = signed_q(2, 14);  // 14 fraction bits cannot feed a Q*.15 head
  EXPECT_THROW(deploy(m), std::invalid_argument);
}

TEST(Deploy, RejectsAccumulatorBudgetOverrun) {
  ParamManifest m = load_manifest(tiny_dir() / "manifest");
  m.model.layers[0].weight_fmt = signed_q(20, 11);  // 255 * 27 * 2^31 needs more than 40 bits
  EXPECT_THROW(deploy(m), std::invalid_argument);
}

TEST(ForwardFixed, TinyFixtureGoldens) {
  const DeployedModel d = deploy(load_manifest(tiny_dir() / "manifest"));
  const ActTensor img = read_u8_dump(tiny_dir(), "image");
  const FixedForward f = forward_fixed_direct(d, img);
  for (size_t l = 0; l < d.layers.size(); ++l) {
    const std::string n = d.layers[l].spec.name;
    const FxTensor pre = read_fx_dump(tiny_dir() / "golden", n + "_fixed_pre");
    EXPECT_EQ(f.layers[l].pre.values, pre.values) << n;
    EXPECT_EQ(f.layers[l].pre.fmt.frac_bits, pre.fmt.frac_bits) << n;
    if (d.layers[l].spec.output == OutputKind::kU8) {
      EXPECT_EQ(f.layers[l].post, read_u8_dump(tiny_dir() / "golden", n + "_fixed_post")) << n;
    }
  }
  const auto words = read_head_words(tiny_dir() / "golden" / "head.bin");
  EXPECT_EQ(serial_to_head(words, f.head.values.shape()), f.head);
  EXPECT_EQ(f.head.fmt, kHeadOut);
}

TEST(ForwardFixed, ZeroImageIsBiasOnlyPropagation) {
  const ParamManifest m = load_manifest(tiny_dir() / "manifest");
  const DeployedModel d = deploy(m);
  const ActTensor zero(m.model.input, 0);
  const FixedForward f = forward_fixed_direct(d, zero);
  const auto& l0 = d.layers[0];
  for (int o = 0; o < l0.spec.out_channels; ++o) {
    EXPECT_EQ(f.layers[0].pre.values.at(o, 3, 3), l0.bias[o] << l0.bias_shift);
  }
  const oracle::FixedResult want = oracle::fixed_forward(m, zero);
  EXPECT_EQ(f.head.values, want.head);
  for (size_t l = 0; l < want.layers.size(); ++l) EXPECT_EQ(f.layers[l].pre.values, want.layers[l].pre);
}

TEST(ForwardFixed, ImpulseResponse) {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const ParamManifest m = single_head_layer(seed);
    const DeployedModel d = deploy(m);
    ActTensor img(m.model.input, 0);
    img.at(1, 2, 3) = 255;
    const FixedForward fx = forward_fixed_direct(d, img);
    const FloatForward fl = forward_float(m, img);
    const auto& L = d.layers[0];
    for (int o = 0; o < 2; ++o) {
      for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) {
          // Tap (ky, kx) of the kernel sees the impulse when (y, x) = (2, 3) - (ky, kx) + 1.
          const int ky = 2 - y + 1;
          const int kx = 3 - x + 1;
          const bool hit = ky >= 0 && ky < 3 && kx >= 0 && kx < 3;
          const int64_t w = hit ? L.weights[((o * 3 + 1) * 3 + ky) * 3 + kx] : 0;
          const int64_t acc = w * 255 + (L.bias[o] << L.bias_shift);
          const int64_t want = static_cast<int64_t>(oracle::round_away(acc, L.acc_frac - 15));
          ASSERT_EQ(fx.head.values.at(o, y, x), want);
          // p/256 against p/255, plus weight, bias and output rounding.
          const double wr = hit ? m.layers[0].weights[((o * 3 + 1) * 3 + ky) * 3 + kx] : 0.0;
          const double bound = std::fabs(wr) / 256 + std::ldexp(1.0, -16) + std::ldexp(1.0, -13) +
                               std::ldexp(1.0, -16);
          ASSERT_LE(std::fabs(fx.head.real(o, y, x) - fl.head.at(o, y, x)), bound);
        }
      }
    }
  }
}

TEST(ForwardFixed, RandomTinyModelsMatchOracle) {
  for (uint64_t s = 1; s <= 30; ++s) {
    const ParamManifest m = random_manifest(random_tiny_model(s), s);
    const ActTensor img = random_image(m.model.input, s * 31);
    const FixedForward f = forward_fixed_direct(deploy(m), img);
    const oracle::FixedResult want = oracle::fixed_forward(m, img);
    ASSERT_EQ(f.head.values, want.head) << "seed " << s;
    for (size_t l = 0; l + 1 < want.layers.size(); ++l) ASSERT_EQ(f.layers[l].post, want.layers[l].post);
  }
}

TEST(ForwardFixed, RejectsWrongImageShape) {
  const DeployedModel d = deploy(load_manifest(tiny_dir() / "manifest"));
  EXPECT_THROW(forward_fixed_direct(d, ActTensor(Shape{3, 4, 4})), std::invalid_argument);
}
