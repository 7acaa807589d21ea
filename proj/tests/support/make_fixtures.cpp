// Regenerates tests/fixtures. Goldens come from the oracles in oracles.hpp,
// never from the engines under test. Run once; the output is checked in.
//
//   w1a8_make_fixtures <tests/fixtures>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "w1a8/detect_post.hpp"
#include "w1a8/fixture.hpp"
#include "w1a8/image_io.hpp"
#include "w1a8/manifest.hpp"
#include "w1a8/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace w1a8;

namespace {

constexpr uint64_t kDefaultSeed = 7;
constexpr uint64_t kTinySeed = 57;
constexpr int kWordWidth = 16;

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

// Sign bits LSB-first, 16 per word.
std::vector<uint64_t> pack_bits(const std::vector<uint8_t>& bits) {
  std::vector<uint64_t> w((bits.size() + kWordWidth - 1) / kWordWidth, 0);
  for (size_t i = 0; i < bits.size(); ++i) w[i / kWordWidth] += uint64_t{bits[i] != 0} << (i % kWordWidth);
  return w;
}

// Two's complement entries split into 16-bit words, low word first.
std::vector<uint64_t> pack_raws(const std::vector<int64_t>& raws, const QFormat& f) {
  const int width = f.int_bits + f.frac_bits + (f.is_signed ? 1 : 0);
  const int per = (width + kWordWidth - 1) / kWordWidth;
  std::vector<uint64_t> w;
  for (int64_t r : raws) {
    uint64_t u = static_cast<uint64_t>(r);  // modulo 2^64
    for (int k = 0; k < per; ++k) {
      w.push_back(u % 65536);
      u /= 65536;
    }
  }
  return w;
}

std::vector<int64_t> raws_of(const std::vector<double>& v, const QFormat& f) {
  std::vector<int64_t> r;
  for (double x : v) r.push_back(oracle::exact_fixed(x, f));
  return r;
}

void write_coe_set(const ParamManifest& m, const fs::path& dir) {
  fs::create_directories(dir);
  for (size_t l = 0; l < m.layers.size(); ++l) {
    const auto& spec = m.model.layers[l];
    const auto& p = m.layers[l];
    const std::string n = spec.name;
    if (spec.is_binary()) {
      write_text(dir / (n + "_w.coe"), oracle::coe(pack_bits(p.signs.bits), kWordWidth, 16));
      write_text(dir / (n + "_mul.coe"), oracle::coe(pack_raws(raws_of(p.mul_prev, p.mul_fmt), p.mul_fmt), kWordWidth, 16));
    } else {
      write_text(dir / (n + "_w.coe"),
                 oracle::coe(pack_raws(raws_of(p.weights, *spec.weight_fmt), *spec.weight_fmt), kWordWidth, 16));
    }
    write_text(dir / (n + "_b.coe"),
               oracle::coe(pack_raws(raws_of(p.bias, *spec.bias_fmt), *spec.bias_fmt), kWordWidth, 16));
    if (spec.output == OutputKind::kU8) {
      write_text(dir / (n + "_div.coe"), oracle::coe(pack_raws(raws_of(p.div_current, p.div_fmt), p.div_fmt), kWordWidth, 16));
    }
  }
}

void write_head(const fs::path& file, const std::vector<int32_t>& words) {
  std::ofstream f(file, std::ios::binary);
  for (int32_t w : words) {
    const auto u = static_cast<uint32_t>(w);
    const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                       static_cast<char>((u >> 16) & 0xff), static_cast<char>(u >> 24)};
    f.write(b, 4);
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <fixtures dir>\n", argv[0]);
    return 2;
  }
  const fs::path root = argv[1];

  // Tiny model: manifest, image, per-layer goldens from both oracles.
  {
    const fs::path dir = root / "tiny";
    const ModelSpec model = random_tiny_model(kTinySeed);
    const ParamManifest m = random_manifest(model, kTinySeed);
    const ActTensor img = random_image(model.input, kTinySeed + 1);
    save_manifest(m, dir / "manifest");
    write_dump(dir, "image", img);
    const fs::path g = dir / "golden";
    fs::create_directories(g);
    const auto fl = oracle::float_forward(m, img);
    const auto fx = oracle::fixed_forward(m, img);
    for (size_t l = 0; l < fl.size(); ++l) {
      const std::string n = model.layers[l].name;
      write_dump(g, n + "_float_pre", fl[l].pre);
      write_dump(g, n + "_fixed_pre",
                 FxTensor{fx.layers[l].pre, signed_q(47 - fx.layers[l].acc_frac, fx.layers[l].acc_frac)});
      if (model.layers[l].output == OutputKind::kU8) {
        write_dump(g, n + "_float_post", fl[l].post);
        write_dump(g, n + "_fixed_post", fx.layers[l].post);
      }
    }
    write_head(g / "head.bin", oracle::serialize(fx.head, model.head_pe_num));
    write_coe_set(m, dir / "coe");
    std::printf("tiny: input %s, %zu layers, head %s, pe %d\n", model.input.to_string().c_str(),
                model.layers.size(), model.output_shape().to_string().c_str(), model.head_pe_num);
    for (const auto& l : model.layers) {
      std::printf("  %s %s k%d %d->%d pool=%d\n", l.name.c_str(), to_string(l.kind).c_str(), l.kernel,
                  l.in_channels, l.out_channels, l.has_maxpool ? 1 : 0);
    }
  }

  // Default model: manifest, image, oracle head, decoded boxes, Conv2 COE.
  {
    const fs::path dir = root / "default";
    const ModelSpec model = build_default_model();
    const ParamManifest m = random_manifest(model, kDefaultSeed);
    const ActTensor img = synthetic_image(model.input, kDefaultSeed);
    save_manifest(m, dir / "manifest");
    write_ppm(dir / "image.ppm", img);
    const auto fx = oracle::fixed_forward(m, img);
    const auto words = oracle::serialize(fx.head, model.head_pe_num);
    write_head(dir / "head.bin", words);

    const std::string anchors =
        "# w h, normalized to the input size\n"
        "0.08 0.10\n0.18 0.26\n0.32 0.48\n";
    write_text(dir / "anchors.txt", anchors);
    const std::vector<Anchor> a = {{0.08, 0.10}, {0.18, 0.26}, {0.32, 0.48}};
    const auto boxes = oracle::suppress(oracle::decode_head(words, a, 20, 10, 0.3), 0.45);
    write_text(dir / "boxes.json", boxes_to_json(boxes));

    const auto& conv2 = m.params("conv2");
    write_text(dir / "conv2_w.coe", oracle::coe(pack_bits(conv2.signs.bits), kWordWidth, 16));
    std::printf("default: %zu boxes after nms\n", boxes.size());
  }
  return 0;
}
