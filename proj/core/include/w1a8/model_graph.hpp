#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "w1a8/fixedpoint.hpp"
#include "w1a8/tensor.hpp"

namespace w1a8 {

enum class ConvKind { kStandard, kW1A8 };
enum class OutputKind { kU8, kRawQ15 };

std::string to_string(ConvKind kind);
std::string to_string(OutputKind kind);
ConvKind parse_conv_kind(const std::string& s);
OutputKind parse_output_kind(const std::string& s);

struct LayerSpec {
  std::string name;
  ConvKind kind = ConvKind::kW1A8;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;  // 1 or 3
  bool has_post = true;
  bool has_maxpool = false;
  std::optional<QFormat> weight_fmt;  // nullopt: 1-bit sign weights
  std::optional<QFormat> bias_fmt;
  OutputKind output = OutputKind::kU8;

  int padding() const { return kernel == 3 ? 1 : 0; }
  bool is_binary() const { return kind == ConvKind::kW1A8; }
  int64_t weight_count() const {
    return int64_t{kernel} * kernel * in_channels * out_channels;
  }
  // Step-size and channel-scale tensors only exist where the datapath uses them.
  bool uses_mul_prev() const { return kind == ConvKind::kW1A8; }
  bool uses_div_current() const { return output == OutputKind::kU8; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Bias format for W1A8 layers; the bias shares the Mul_prev fraction so it
// adds to the accumulator without a shift.
inline constexpr QFormat kW1A8BiasDefault = signed_q(10, 14);

struct ModelSpec {
  Shape input{3, 320, 320};
  std::vector<LayerSpec> layers;
  int head_pe_num = 5;

  // Throws std::invalid_argument describing the first structural problem.
  void validate() const;

  Shape layer_input(size_t i) const;
  Shape conv_output(size_t i) const;   // before the optional max-pool
  Shape layer_output(size_t i) const;  // after the optional max-pool
  Shape output_shape() const { return layer_output(layers.size() - 1); }

  // Number of stored parameters (weights plus one bias per output channel).
  int64_t parameter_count() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// The 11-convolution pipeline: Conv1 standard, Conv2-Conv10 W1A8, Conv11 head,
// 2x2 max-pool after Conv1-Conv4 and Conv7.
ModelSpec build_default_model();

struct StorageRow {
  std::string label;  // "L0", "L1", ...
  std::string type;   // "Standard convolution", "W1A8 Conv", "MaxPool"
  std::string layer;
  Shape in;
  Shape out;
  int kernel = 0;
  int64_t line_buffer_bytes = 0;
  std::string line_buffer_expr;  // e.g. "2x320x16"
  int64_t weight_bytes = 0;      // raw packed bits/words, no ROM alignment
};

// Line buffers: 2*W*C bytes for convolutions, 3*W*C for max-pools, with W the
// output width and C the output channels. Weight bytes: ceil(K*K*Cin*Cout/8)
// for 1-bit layers; 2*K*K*Cin*Cout + 2*Cout for 16-bit standard layers.
std::vector<StorageRow> estimate_storage(const ModelSpec& model);
std::string format_storage_table(const std::vector<StorageRow>& rows);

}  // namespace w1a8
