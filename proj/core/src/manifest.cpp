#include "w1a8/manifest.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

namespace w1a8 {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");

namespace {

using Kind = ManifestError::Kind;

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::kMissingFile: return "missing file";
    case Kind::kMissingBlob: return "missing blob";
    case Kind::kLengthMismatch: return "length mismatch";
    case Kind::kUnknownFormat: return "unknown format";
    case Kind::kVersionMismatch: return "version mismatch";
    case Kind::kFormatMismatch: return "format mismatch";
    case Kind::kInvalidValue: return "invalid value";
    case Kind::kMalformed: return "malformed manifest";
  }
  return "error";
}

std::vector<uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const void* data, size_t n) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw std::runtime_error("failed to write " + p.string());
}

std::vector<double> bytes_to_f64(const std::vector<uint8_t>& bytes) {
  std::vector<double> v(bytes.size() / sizeof(double));
  std::memcpy(v.data(), bytes.data(), v.size() * sizeof(double));
  return v;
}

json model_to_json(const ModelSpec& m) {
  json j;
  j["input"] = {m.input.c, m.input.h, m.input.w};
  j["head_pe_num"] = m.head_pe_num;
  json layers = json::array();
  for (const auto& l : m.layers) {
    json e;
    e["name"] = l.name;
    e["kind"] = to_string(l.kind);
    e["in_channels"] = l.in_channels;
    e["out_channels"] = l.out_channels;
    e["kernel"] = l.kernel;
    e["maxpool"] = l.has_maxpool;
    e["output"] = to_string(l.output);
    if (l.weight_fmt) e["weight_format"] = l.weight_fmt->to_string();
    if (l.bias_fmt) e["bias_format"] = l.bias_fmt->to_string();
    layers.push_back(std::move(e));
  }
  j["layers"] = std::move(layers);
  return j;
}

QFormat parse_fmt(const json& j, const std::string& layer, const std::string& field) {
  try {
    return QFormat::parse(j.get<std::string>());
  } catch (const std::exception& e) {
    throw ManifestError(Kind::kUnknownFormat, layer, field, e.what());
  }
}

ModelSpec model_from_json(const json& j) {
  ModelSpec m;
  const auto& in = j.at("input");
  m.input = Shape{in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
  m.head_pe_num = j.value("head_pe_num", 5);
  for (const auto& e : j.at("layers")) {
    LayerSpec l;
    l.name = e.at("name").get<std::string>();
    try {
      l.kind = parse_conv_kind(e.at("kind").get<std::string>());
      l.output = parse_output_kind(e.at("output").get<std::string>());
    } catch (const std::invalid_argument& ex) {
      throw ManifestError(Kind::kMalformed, l.name, "kind", ex.what());
    }
    l.in_channels = e.at("in_channels").get<int>();
    l.out_channels = e.at("out_channels").get<int>();
    l.kernel = e.at("kernel").get<int>();
    l.has_maxpool = e.at("maxpool").get<bool>();
    l.has_post = l.output == OutputKind::kU8;
    if (e.contains("weight_format")) l.weight_fmt = parse_fmt(e["weight_format"], l.name, "weights");
    if (e.contains("bias_format")) l.bias_fmt = parse_fmt(e["bias_format"], l.name, "bias");
    m.layers.push_back(std::move(l));
  }
  return m;
}

struct BlobDecl {
  std::string field;
  std::string suffix;
};

}  // namespace

ManifestError::ManifestError(Kind kind, std::string layer, std::string field,
                             const std::string& detail)
    : std::runtime_error(kind_name(kind) + " [layer " + (layer.empty() ? "-" : layer) +
                         ", field " + (field.empty() ? "-" : field) + "]: " + detail),
      kind_(kind), layer_(std::move(layer)), field_(std::move(field)) {}

std::vector<uint8_t> pack_sign_bits(const std::vector<uint8_t>& bits) {
  std::vector<uint8_t> bytes((bits.size() + 7) / 8, 0);
  for (size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) bytes[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
  }
  return bytes;
}

std::vector<uint8_t> unpack_sign_bits(const std::vector<uint8_t>& bytes, size_t count) {
  std::vector<uint8_t> bits(count);
  for (size_t i = 0; i < count; ++i) bits[i] = (bytes[i / 8] >> (i % 8)) & 1u;
  return bits;
}

const LayerParams& ParamManifest::params(const std::string& layer) const {
  for (const auto& p : layers) {
    if (p.layer == layer) return p;
  }
  throw ManifestError(Kind::kMissingBlob, layer, "", "no parameters for layer");
}

void ParamManifest::validate() const {
  if (version != kManifestVersion) {
    throw ManifestError(Kind::kVersionMismatch, "", "version",
                        "expected " + std::to_string(kManifestVersion) + ", got " +
                            std::to_string(version));
  }
  if (endianness != "little") {
    throw ManifestError(Kind::kMalformed, "", "endianness", "only little-endian blobs exist");
  }
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ManifestError(Kind::kMalformed, "", "model", e.what());
  }
  if (layers.size() != model.layers.size()) {
    throw ManifestError(Kind::kMalformed, "", "params",
                        "parameter entries do not match model layers");
  }
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& spec = model.layers[i];
    const LayerParams& p = layers[i];
    auto expect_len = [&](const std::string& field, size_t got, size_t want) {
      if (got != want) {
        throw ManifestError(Kind::kLengthMismatch, spec.name, field,
                            "expected " + std::to_string(want) + " elements, got " +
                                std::to_string(got));
      }
    };
    auto expect_finite = [&](const std::string& field, const std::vector<double>& v,
                             bool positive) {
      for (size_t k = 0; k < v.size(); ++k) {
        if (!std::isfinite(v[k]) || (positive && !(v[k] > 0.0))) {
          throw ManifestError(Kind::kInvalidValue, spec.name, field,
                              "element " + std::to_string(k) + " is " +
                                  (positive ? "not a positive finite value" : "not finite"));
        }
      }
    };
    if (p.layer != spec.name) {
      throw ManifestError(Kind::kMalformed, spec.name, "layer",
                          "parameter entry " + std::to_string(i) + " is named '" + p.layer + "'");
    }
    const auto n_weights = static_cast<size_t>(spec.weight_count());
    if (spec.is_binary()) {
      expect_len("weights", p.signs.size(), n_weights);
      if (p.signs.out_channels != spec.out_channels || p.signs.in_channels != spec.in_channels ||
          p.signs.kernel != spec.kernel) {
        throw ManifestError(Kind::kLengthMismatch, spec.name, "weights", "sign tensor dims");
      }
    } else {
      expect_len("weights", p.weights.size(), n_weights);
      expect_finite("weights", p.weights, false);
    }
    expect_len("bias", p.bias.size(), static_cast<size_t>(spec.out_channels));
    expect_finite("bias", p.bias, false);
    if (spec.uses_mul_prev()) {
      expect_len("mul_prev", p.mul_prev.size(), static_cast<size_t>(spec.in_channels));
      expect_finite("mul_prev", p.mul_prev, true);
      if (!p.mul_fmt.valid()) throw ManifestError(Kind::kUnknownFormat, spec.name, "mul_prev", "");
    } else if (!p.mul_prev.empty()) {
      throw ManifestError(Kind::kMalformed, spec.name, "mul_prev", "layer has no Mul_prev");
    }
    if (spec.uses_div_current()) {
      expect_len("div_current", p.div_current.size(), static_cast<size_t>(spec.out_channels));
      expect_finite("div_current", p.div_current, true);
      if (!p.div_fmt.valid()) {
        throw ManifestError(Kind::kUnknownFormat, spec.name, "div_current", "");
      }
      if (!p.act_step || !std::isfinite(*p.act_step) || !(*p.act_step > 0.0)) {
        throw ManifestError(Kind::kInvalidValue, spec.name, "act_step",
                            "u8 outputs need a positive activation step");
      }
    } else if (!p.div_current.empty()) {
      throw ManifestError(Kind::kMalformed, spec.name, "div_current", "layer has no Div_current");
    }
  }
}

ParamManifest load_manifest(const fs::path& dir) {
  const fs::path header = dir / "manifest.json";
  if (!fs::exists(header)) {
    throw ManifestError(Kind::kMissingFile, "", "manifest.json", header.string() + " not found");
  }
  json j;
  try {
    std::ifstream in(header);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestError(Kind::kMalformed, "", "manifest.json", e.what());
  }

  ParamManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw ManifestError(Kind::kVersionMismatch, "", "version",
                          "expected " + std::to_string(kManifestVersion) + ", got " +
                              std::to_string(m.version));
    }
    m.endianness = j.at("endianness").get<std::string>();
    m.model = model_from_json(j.at("model"));

    for (const auto& e : j.at("params")) {
      LayerParams p;
      p.layer = e.at("layer").get<std::string>();
      const LayerSpec* spec = nullptr;
      for (const auto& l : m.model.layers) {
        if (l.name == p.layer) spec = &l;
      }
      if (spec == nullptr) {
        throw ManifestError(Kind::kMalformed, p.layer, "layer", "not present in model");
      }

      auto read_blob = [&](const std::string& field, size_t expected_bytes) {
        if (!e.contains(field)) {
          throw ManifestError(Kind::kMissingBlob, p.layer, field, "no entry in manifest.json");
        }
        const json& d = e.at(field);
        const fs::path file = dir / d.at("file").get<std::string>();
        if (!fs::exists(file)) {
          throw ManifestError(Kind::kMissingBlob, p.layer, field, file.string() + " not found");
        }
        std::vector<uint8_t> bytes = read_bytes(file);
        if (bytes.size() != expected_bytes) {
          throw ManifestError(Kind::kLengthMismatch, p.layer, field,
                              file.filename().string() + " holds " +
                                  std::to_string(bytes.size()) + " bytes, expected " +
                                  std::to_string(expected_bytes));
        }
        return bytes;
      };
      auto check_encoding = [&](const std::string& field, const std::string& want) {
        const std::string got = e.at(field).at("encoding").get<std::string>();
        if (got != want) {
          throw ManifestError(Kind::kUnknownFormat, p.layer, field,
                              "encoding '" + got + "', expected '" + want + "'");
        }
      };

      const size_t n_w = static_cast<size_t>(spec->weight_count());
      if (spec->is_binary()) {
        check_encoding("weights", "sign1");
        const auto bytes = read_blob("weights", (n_w + 7) / 8);
        p.signs = BinaryWeight(spec->out_channels, spec->in_channels, spec->kernel);
        p.signs.bits = unpack_sign_bits(bytes, n_w);
      } else {
        check_encoding("weights", "f64");
        const QFormat f = parse_fmt(e["weights"].at("format"), p.layer, "weights");
        if (!spec->weight_fmt || f != *spec->weight_fmt) {
          throw ManifestError(Kind::kFormatMismatch, p.layer, "weights",
                              "declared " + f.to_string() + " differs from the layer format");
        }
        p.weights = bytes_to_f64(read_blob("weights", n_w * sizeof(double)));
      }
      const auto n_out = static_cast<size_t>(spec->out_channels);
      check_encoding("bias", "f64");
      const QFormat bf = parse_fmt(e["bias"].at("format"), p.layer, "bias");
      if (!spec->bias_fmt || bf != *spec->bias_fmt) {
        throw ManifestError(Kind::kFormatMismatch, p.layer, "bias",
                            "declared " + bf.to_string() + " differs from the layer format");
      }
      p.bias = bytes_to_f64(read_blob("bias", n_out * sizeof(double)));
      if (spec->uses_mul_prev()) {
        check_encoding("mul_prev", "f64");
        p.mul_fmt = parse_fmt(e["mul_prev"].at("format"), p.layer, "mul_prev");
        p.mul_prev = bytes_to_f64(
            read_blob("mul_prev", static_cast<size_t>(spec->in_channels) * sizeof(double)));
      }
      if (spec->uses_div_current()) {
        check_encoding("div_current", "f64");
        p.div_fmt = parse_fmt(e["div_current"].at("format"), p.layer, "div_current");
        p.div_current = bytes_to_f64(read_blob("div_current", n_out * sizeof(double)));
        if (!e.contains("act_step")) {
          throw ManifestError(Kind::kMissingBlob, p.layer, "act_step", "no activation step");
        }
        p.act_step = e.at("act_step").get<double>();
      }
      m.layers.push_back(std::move(p));
    }
  } catch (const json::exception& ex) {
    throw ManifestError(Kind::kMalformed, "", "manifest.json", ex.what());
  }
  m.validate();
  return m;
}

void save_manifest(const ParamManifest& m, const fs::path& dir) {
  m.validate();
  fs::create_directories(dir);

  json j;
  j["format"] = "w1a8-manifest";
  j["version"] = m.version;
  j["endianness"] = m.endianness;
  j["model"] = model_to_json(m.model);
  json params = json::array();
  for (size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& spec = m.model.layers[i];
    const LayerParams& p = m.layers[i];
    json e;
    e["layer"] = p.layer;

    auto put_f64 = [&](const std::string& field, const std::string& suffix,
                       const std::vector<double>& v, const QFormat& fmt) {
      const std::string file = p.layer + suffix;
      write_bytes(dir / file, v.data(), v.size() * sizeof(double));
      json d;
      d["file"] = file;
      d["encoding"] = "f64";
      d["format"] = fmt.to_string();
      d["count"] = v.size();
      e[field] = std::move(d);
    };

    if (spec.is_binary()) {
      const std::string file = p.layer + "_w.bin";
      const auto bytes = pack_sign_bits(p.signs.bits);
      write_bytes(dir / file, bytes.data(), bytes.size());
      json d;
      d["file"] = file;
      d["encoding"] = "sign1";
      d["ordering"] = "oc_ic_ky_kx";
      d["bit_order"] = "lsb_first";
      d["count"] = p.signs.size();
      e["weights"] = std::move(d);
    } else {
      put_f64("weights", "_w.bin", p.weights, *spec.weight_fmt);
      e["weights"]["ordering"] = "oc_ic_ky_kx";
    }
    put_f64("bias", "_b.bin", p.bias, *spec.bias_fmt);
    if (spec.uses_mul_prev()) put_f64("mul_prev", "_mul.bin", p.mul_prev, p.mul_fmt);
    if (spec.uses_div_current()) {
      put_f64("div_current", "_div.bin", p.div_current, p.div_fmt);
      e["act_step"] = *p.act_step;
    }
    params.push_back(std::move(e));
  }
  j["params"] = std::move(params);

  const std::string text = j.dump(2) + "\n";
  write_bytes(dir / "manifest.json", text.data(), text.size());
}

}  // namespace w1a8
