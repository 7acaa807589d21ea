#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "w1a8/manifest.hpp"
#include "w1a8/stream_engine.hpp"
#include "w1a8/tensor.hpp"

namespace w1a8 {

struct MetricRecord {
  size_t count = 0;
  double max_abs = 0;
  double mean_abs = 0;
  std::optional<double> pearson;  // nullopt when either side has zero variance
  double within_1lsb_percent = 0;  // share of |a - b| <= 1, in the values' own units
};

// Population Pearson correlation. Throws std::invalid_argument unless the
// sequences have equal length >= 2.
MetricRecord metrics(std::span<const double> a, std::span<const double> b);

struct Checkpoint {
  std::string label;      // "Conv1 raw", "Conv2 post", "final raw conv", ...
  std::string reference;  // "float" or "direct"
  std::string dut;        // "direct" or "stream"
  std::string data_format;
  bool on_grid = false;         // 8-bit activation grid; LSB = one grid step
  bool exact_required = false;  // integer engines must agree bit for bit
  MetricRecord m;

  bool passed() const { return !exact_required || m.max_abs == 0.0; }
};

struct ComparisonReport {
  std::vector<Checkpoint> rows;
  uint64_t stream_cycles = 0;

  bool bit_exact() const;
  const Checkpoint* find(const std::string& label, const std::string& reference) const;
  std::string to_json() const;
  std::string to_table() const;
};

struct CompareOptions {
  bool all_layers = false;  // every layer, not only Conv1 raw/post, Conv2 post and the head
  stream::StreamConfig stream{};
};

// Runs the float reference, the direct integer engine and the stream engine.
// Fixed-point values are converted to reals through their Q formats before the
// float comparison; activation checkpoints compare the 8-bit grids. Throws
// std::logic_error if the engines disagree on a tensor shape.
ComparisonReport layerwise_compare(const ParamManifest& manifest, const ActTensor& image,
                                   const CompareOptions& options = {});

}  // namespace w1a8
