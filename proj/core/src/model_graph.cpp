#include "w1a8/model_graph.hpp"

#include <cstdio>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace w1a8 {

std::string to_string(ConvKind kind) { return kind == ConvKind::kStandard ? "standard" : "w1a8"; }
std::string to_string(OutputKind kind) { return kind == OutputKind::kU8 ? "u8" : "raw_q15"; }

ConvKind parse_conv_kind(const std::string& s) {
  if (s == "standard") return ConvKind::kStandard;
  if (s == "w1a8") return ConvKind::kW1A8;
  throw std::invalid_argument("unknown conv kind '" + s + "'");
}

OutputKind parse_output_kind(const std::string& s) {
  if (s == "u8") return OutputKind::kU8;
  if (s == "raw_q15") return OutputKind::kRawQ15;
  throw std::invalid_argument("unknown output kind '" + s + "'");
}

void ModelSpec::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model: " + what); };
  if (input.c <= 0 || input.h <= 0 || input.w <= 0) fail("empty input shape");
  if (layers.empty()) fail("no layers");
  if (head_pe_num <= 0) fail("head_pe_num must be positive");
  Shape cur = input;
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + l.name + ": ";
    if (l.name.empty()) fail("layer " + std::to_string(i) + " has no name");
    for (size_t j = 0; j < i; ++j) {
      if (layers[j].name == l.name) fail(where + "duplicate name");
    }
    if (l.kernel != 1 && l.kernel != 3) fail(where + "kernel must be 1 or 3");
    if (l.in_channels != cur.c) {
      fail(where + "in_channels " + std::to_string(l.in_channels) + " != producer channels " +
           std::to_string(cur.c));
    }
    if (l.out_channels <= 0) fail(where + "no output channels");
    if (i == 0 && l.kind != ConvKind::kStandard) fail(where + "first layer must be standard");
    if (l.kind == ConvKind::kStandard) {
      if (!l.weight_fmt || !l.weight_fmt->valid() || !l.weight_fmt->is_signed) {
        fail(where + "standard layers need a signed weight format");
      }
    } else if (l.weight_fmt) {
      fail(where + "W1A8 layers carry 1-bit weights");
    }
    if (!l.bias_fmt || !l.bias_fmt->valid() || !l.bias_fmt->is_signed) {
      fail(where + "missing signed bias format");
    }
    const bool last = i + 1 == layers.size();
    if (last != (l.output == OutputKind::kRawQ15)) {
      fail(where + "exactly the final layer emits the raw head");
    }
    if (l.has_post != (l.output == OutputKind::kU8)) fail(where + "has_post must match u8 output");
    if (l.has_maxpool && l.output != OutputKind::kU8) fail(where + "max-pool needs u8 output");
    cur = Shape{l.out_channels, cur.h, cur.w};
    if (l.has_maxpool) {
      if (cur.h % 2 != 0 || cur.w % 2 != 0) fail(where + "max-pool on odd spatial size");
      cur.h /= 2;
      cur.w /= 2;
    }
  }
}

Shape ModelSpec::layer_input(size_t i) const { return i == 0 ? input : layer_output(i - 1); }

Shape ModelSpec::conv_output(size_t i) const {
  const Shape in = layer_input(i);
  return Shape{layers.at(i).out_channels, in.h, in.w};
}

Shape ModelSpec::layer_output(size_t i) const {
  Shape s = conv_output(i);
  if (layers.at(i).has_maxpool) {
    s.h /= 2;
    s.w /= 2;
  }
  return s;
}

int64_t ModelSpec::parameter_count() const {
  int64_t total = 0;
  for (const auto& l : layers) total += l.weight_count() + l.out_channels;
  return total;
}

ModelSpec build_default_model() {
  struct Row {
    int in, out, k;
    bool pool;
  };
  static constexpr Row kRows[] = {
      {3, 16, 3, true},     {16, 32, 3, true},    {32, 64, 3, true},   {64, 128, 3, true},
      {128, 128, 3, false}, {128, 128, 3, false}, {128, 128, 3, true}, {128, 128, 3, false},
      {128, 64, 1, false},  {64, 64, 3, false},   {64, 75, 1, false},
  };
  ModelSpec m;
  m.input = Shape{3, 320, 320};
  m.head_pe_num = 5;
  const size_t n = std::size(kRows);
  for (size_t i = 0; i < n; ++i) {
    const Row& r = kRows[i];
    LayerSpec l;
    l.name = "conv" + std::to_string(i + 1);
    l.in_channels = r.in;
    l.out_channels = r.out;
    l.kernel = r.k;
    l.has_maxpool = r.pool;
    if (i == 0) {
      l.kind = ConvKind::kStandard;
      l.weight_fmt = kQ5_11;
      l.bias_fmt = kQ2_14;
    } else if (i + 1 == n) {
      l.kind = ConvKind::kStandard;
      l.weight_fmt = kQ1_15;
      l.bias_fmt = kQ4_12;
      l.output = OutputKind::kRawQ15;
      l.has_post = false;
    } else {
      l.kind = ConvKind::kW1A8;
      l.bias_fmt = kW1A8BiasDefault;
    }
    m.layers.push_back(l);
  }
  return m;
}

std::vector<StorageRow> estimate_storage(const ModelSpec& model) {
  std::vector<StorageRow> rows;
  int index = 0;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    const Shape in = model.layer_input(i);
    const Shape out = model.conv_output(i);

    StorageRow conv;
    conv.label = "L" + std::to_string(index++);
    conv.type = l.is_binary() ? "W1A8 Conv" : "Standard convolution";
    conv.layer = l.name;
    conv.in = in;
    conv.out = out;
    conv.kernel = l.kernel;
    conv.line_buffer_bytes = int64_t{2} * out.w * out.c;
    conv.line_buffer_expr = "2x" + std::to_string(out.w) + "x" + std::to_string(out.c);
    if (l.is_binary()) {
      conv.weight_bytes = (l.weight_count() + 7) / 8;
    } else {
      conv.weight_bytes = 2 * l.weight_count() + int64_t{2} * l.out_channels;
    }
    rows.push_back(conv);

    if (l.has_maxpool) {
      const Shape pooled = model.layer_output(i);
      StorageRow pool;
      pool.label = "L" + std::to_string(index++);
      pool.type = "MaxPool";
      pool.layer = l.name + "_pool";
      pool.in = out;
      pool.out = pooled;
      pool.kernel = 2;
      pool.line_buffer_bytes = int64_t{3} * pooled.w * pooled.c;
      pool.line_buffer_expr = "3x" + std::to_string(pooled.w) + "x" + std::to_string(pooled.c);
      rows.push_back(pool);
    }
  }
  return rows;
}

std::string format_storage_table(const std::vector<StorageRow>& rows) {
  auto kb = [](int64_t bytes) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1fKB", static_cast<double>(bytes) / 1024.0);
    return std::string(buf);
  };
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-5s %-22s %-32s %-6s %-9s %-24s %s\n", "Layer", "Type",
                "Input->Output", "Kernel", "HxW", "Line buffer", "Weights");
  os << line;
  for (const auto& r : rows) {
    const std::string io = r.in.to_string() + "->" + r.out.to_string();
    const std::string kern = std::to_string(r.kernel) + "x" + std::to_string(r.kernel);
    const std::string hw = std::to_string(r.out.h) + "x" + std::to_string(r.out.w);
    const std::string lb = r.line_buffer_expr + " = " + kb(r.line_buffer_bytes);
    const std::string wt = r.weight_bytes == 0 ? "0" : kb(r.weight_bytes) + " (" +
                                                           std::to_string(r.weight_bytes) + " B)";
    std::snprintf(line, sizeof line, "%-5s %-22s %-32s %-6s %-9s %-24s %s\n", r.label.c_str(),
                  r.type.c_str(), io.c_str(), kern.c_str(), hw.c_str(), lb.c_str(), wt.c_str());
    os << line;
  }
  return os.str();
}

}  // namespace w1a8
