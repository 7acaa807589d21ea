#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "test_util.hpp"
#include "w1a8/fixture.hpp"
#include "w1a8/manifest.hpp"

using namespace w1a8;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

fs::path default_manifest() { return testutil::fixture_dir() / "default" / "manifest"; }
fs::path tiny_manifest() { return testutil::fixture_dir() / "tiny" / "manifest"; }

// Copy of a fixture manifest that a test may damage.
fs::path scratch_copy(const TempDir& tmp, const fs::path& src) {
  const fs::path dst = tmp / "m";
  fs::copy(src, dst, fs::copy_options::recursive);
  return dst;
}

ManifestError::Kind load_error(const fs::path& dir, std::string* layer = nullptr,
                               std::string* field = nullptr) {
  try {
    load_manifest(dir);
  } catch (const ManifestError& e) {
    if (layer) *layer = e.layer();
    if (field) *field = e.field();
    return e.kind();
  }
  ADD_FAILURE() << "load_manifest accepted a broken manifest";
  return ManifestError::Kind::kMalformed;
}

}  // namespace

TEST(Manifest, LoadsDefaultFixture) {
  const ParamManifest m = load_manifest(default_manifest());
  EXPECT_EQ(m.layers.size(), 11u);
  EXPECT_EQ(m.model, build_default_model());
  EXPECT_EQ(m.params("conv2").signs.size(), 3u * 3 * 16 * 32);
  EXPECT_EQ(m.params("conv1").weights.size(), 432u);
  EXPECT_TRUE(m.params("conv11").mul_prev.empty());
  EXPECT_TRUE(m.params("conv11").div_current.empty());
  EXPECT_FALSE(m.params("conv11").act_step.has_value());
  EXPECT_TRUE(m.params("conv1").mul_prev.empty());
  EXPECT_EQ(m.params("conv5").mul_prev.size(), 128u);
  EXPECT_THROW(m.params("conv12"), ManifestError);
}

TEST(Manifest, TruncatedBlobNamesTheLayer) {
  TempDir tmp;
  const fs::path dir = scratch_copy(tmp, default_manifest());
  const fs::path blob = dir / "conv2_w.bin";
  fs::resize_file(blob, fs::file_size(blob) - 1);
  std::string layer, field;
  EXPECT_EQ(load_error(dir, &layer, &field), ManifestError::Kind::kLengthMismatch);
  EXPECT_EQ(layer, "conv2");
  EXPECT_EQ(field, "weights");
}

TEST(Manifest, SaveLoadRoundTrip) {
  TempDir tmp;
  const ParamManifest m = random_manifest(random_tiny_model(4), 4);
  save_manifest(m, tmp / "a");
  EXPECT_EQ(load_manifest(tmp / "a"), m);
  const ParamManifest d = load_manifest(default_manifest());
  save_manifest(d, tmp / "b");
  EXPECT_EQ(load_manifest(tmp / "b"), d);
}

TEST(Manifest, SaveIsDeterministic) {
  TempDir tmp;
  const ParamManifest m = load_manifest(tiny_manifest());
  save_manifest(m, tmp / "a");
  save_manifest(m, tmp / "b");
  size_t files = 0;
  for (const auto& e : fs::directory_iterator(tmp / "a")) {
    const auto name = e.path().filename();
    EXPECT_EQ(testutil::read_text(e.path()), testutil::read_text(tmp / "b" / name)) << name;
    ++files;
  }
  EXPECT_EQ(files, static_cast<size_t>(std::distance(fs::directory_iterator(tmp / "b"), {})));
  // The checked-in copy was written by the same code path.
  EXPECT_EQ(testutil::read_text(tmp / "a" / "manifest.json"),
            testutil::read_text(tiny_manifest() / "manifest.json"));
}

TEST(Manifest, PackedSignBlobLength) {
  TempDir tmp;
  save_manifest(load_manifest(default_manifest()), tmp.path());
  EXPECT_EQ(fs::file_size(tmp / "conv5_w.bin"), 3u * 3 * 128 * 128 / 8);
  EXPECT_EQ(fs::file_size(tmp / "conv1_w.bin"), 432u * 8);
}

TEST(Manifest, MissingPieces) {
  {
    TempDir tmp;
    EXPECT_EQ(load_error(tmp.path()), ManifestError::Kind::kMissingFile);
  }
  {
    TempDir tmp;
    const fs::path dir = scratch_copy(tmp, tiny_manifest());
    fs::remove(dir / "conv2_mul.bin");
    std::string layer, field;
    EXPECT_EQ(load_error(dir, &layer, &field), ManifestError::Kind::kMissingBlob);
    EXPECT_EQ(layer, "conv2");
    EXPECT_EQ(field, "mul_prev");
  }
}

TEST(Manifest, HeaderProblems) {
  struct Case {
    const char* from;
    const char* to;
    ManifestError::Kind kind;
  };
  const Case cases[] = {
      {"\"version\": 1", "\"version\": 2", ManifestError::Kind::kVersionMismatch},
      {"\"endianness\": \"little\"", "\"endianness\": \"big\"", ManifestError::Kind::kMalformed},
      {"\"format\": \"Q5.11\"", "\"format\": \"Q5.x\"", ManifestError::Kind::kUnknownFormat},
      {"\"format\": \"Q5.11\"", "\"format\": \"Q4.11\"", ManifestError::Kind::kFormatMismatch},
      {"\"encoding\": \"sign1\"", "\"encoding\": \"sign2\"", ManifestError::Kind::kUnknownFormat},
      {"\"kind\": \"w1a8\"", "\"kind\": \"ternary\"", ManifestError::Kind::kMalformed},
      {"\"layer\": \"conv3\"", "\"layer\": \"conv9\"", ManifestError::Kind::kMalformed},
      {"{", "[", ManifestError::Kind::kMalformed},
  };
  for (const Case& c : cases) {
    TempDir tmp;
    const fs::path dir = scratch_copy(tmp, tiny_manifest());
    testutil::replace_once(dir / "manifest.json", c.from, c.to);
    EXPECT_EQ(load_error(dir), c.kind) << c.to;
  }
}

TEST(Manifest, ValidateRejectsBadValues) {
  const ParamManifest good = load_manifest(tiny_manifest());
  EXPECT_NO_THROW(good.validate());
  auto kind_of = [&](auto edit) {
    ParamManifest m = good;
    edit(m);
    try {
      m.validate();
    } catch (const ManifestError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "validate accepted a bad manifest";
    return ManifestError::Kind::kMalformed;
  };
  using K = ManifestError::Kind;
  EXPECT_EQ(kind_of([](ParamManifest& m) { m.layers[1].mul_prev[0] = -1; }), K::kInvalidValue);
  EXPECT_EQ(kind_of([](ParamManifest& m) { m.layers[1].mul_prev[0] = NAN; }), K::kInvalidValue);
  EXPECT_EQ(kind_of([](ParamManifest& m) { m.layers[0].div_current[0] = 0; }), K::kInvalidValue);
  EXPECT_EQ(kind_of([](ParamManifest& m) { m.layers[0].weights[3] = INFINITY; }), K::kInvalidValue);
  EXPECT_EQ(kind_of([](ParamManifest& m) { m.layers[0].bias.pop_back(); }), K::kLengthMismatch);
  EXPECT_EQ(kind_of([](ParamManifest& m) { m.layers[0].mul_prev = {1.0, 1.0, 1.0}; }), K::kMalformed);
  EXPECT_EQ(kind_of([](ParamManifest& m) { m.layers[3].div_current.assign(7, 0.5); }), K::kMalformed);
  EXPECT_EQ(kind_of([](ParamManifest& m) { m.layers.pop_back(); }), K::kMalformed);
  EXPECT_EQ(kind_of([](ParamManifest& m) { m.version = 3; }), K::kVersionMismatch);
}

TEST(SignBits, PackIsLsbFirst) {
  const std::vector<uint8_t> bits = {1, 0, 1, 0, 1, 0, 1, 0, 1};
  const auto bytes = pack_sign_bits(bits);
  ASSERT_EQ(bytes.size(), 2u);
  EXPECT_EQ(bytes[0], 0x55);
  EXPECT_EQ(bytes[1], 0x01);
  EXPECT_EQ(unpack_sign_bits(bytes, bits.size()), bits);
}

TEST(SignBits, RandomRoundTrip) {
  FixtureRng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<uint8_t> bits(static_cast<size_t>(rng.uniform_int(0, 300)));
    for (auto& b : bits) b = rng.chance(0.5) ? 1 : 0;
    EXPECT_EQ(unpack_sign_bits(pack_sign_bits(bits), bits.size()), bits);
  }
}
