#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "w1a8/fixedpoint.hpp"
#include "w1a8/model_graph.hpp"
#include "w1a8/quant.hpp"

namespace w1a8 {

inline constexpr int kManifestVersion = 1;

// Extracted parameters of one convolution. Real-valued tensors are stored as
// float64 together with the Q format they are deployed at; the float
// reference reads the reals and the integer engines read their fixed images.
struct LayerParams {
  std::string layer;
  BinaryWeight signs;            // W1A8 layers
  std::vector<double> weights;   // standard layers, [oc][ic][ky][kx]
  std::vector<double> bias;      // per output channel
  std::vector<double> mul_prev;  // per input channel, W1A8 layers
  QFormat mul_fmt = kQ2_14;
  std::vector<double> div_current;  // per output channel, u8-output layers
  QFormat div_fmt = kQ0_16U;
  std::optional<double> act_step;   // s_a of the layer's output boundary

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct ParamManifest {
  int version = kManifestVersion;
  std::string endianness = "little";
  ModelSpec model;
  std::vector<LayerParams> layers;

  const LayerParams& params(const std::string& layer) const;
  // Throws ManifestError on the first inconsistency.
  void validate() const;

  friend bool operator==(const ParamManifest&, const ParamManifest&) = default;
};

class ManifestError : public std::runtime_error {
 public:
  enum class Kind {
    kMissingFile,
    kMissingBlob,
    kLengthMismatch,
    kUnknownFormat,
    kVersionMismatch,
    kFormatMismatch,
    kInvalidValue,
    kMalformed,
  };

  ManifestError(Kind kind, std::string layer, std::string field, const std::string& detail);

  Kind kind() const { return kind_; }
  const std::string& layer() const { return layer_; }
  const std::string& field() const { return field_; }

 private:
  Kind kind_;
  std::string layer_;
  std::string field_;
};

// Directory layout: manifest.json plus <layer>_w.bin, <layer>_b.bin and, where
// the layer uses them, <layer>_mul.bin and <layer>_div.bin. Reals are float64
// little-endian; 1-bit weights are packed LSB-first per byte.
ParamManifest load_manifest(const std::filesystem::path& dir);
void save_manifest(const ParamManifest& m, const std::filesystem::path& dir);

std::vector<uint8_t> pack_sign_bits(const std::vector<uint8_t>& bits);
std::vector<uint8_t> unpack_sign_bits(const std::vector<uint8_t>& bytes, size_t count);

}  // namespace w1a8
