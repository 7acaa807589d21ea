#include "w1a8/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "w1a8/deploy.hpp"
#include "w1a8/reference_engine.hpp"
#include "w1a8/tensor_io.hpp"

namespace w1a8 {

MetricRecord metrics(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("metrics: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("metrics: need at least two values");
  const size_t n = a.size();
  MetricRecord r;
  r.count = n;
  double sum_abs = 0;
  size_t within = 0;
  double mean_a = 0;
  double mean_b = 0;
  for (size_t i = 0; i < n; ++i) {
    const double d = std::abs(a[i] - b[i]);
    r.max_abs = std::max(r.max_abs, d);
    sum_abs += d;
    if (d <= 1.0) ++within;
    mean_a += a[i];
    mean_b += b[i];
  }
  r.mean_abs = sum_abs / n;
  r.within_1lsb_percent = 100.0 * within / n;
  mean_a /= n;
  mean_b /= n;
  double sab = 0;
  double saa = 0;
  double sbb = 0;
  for (size_t i = 0; i < n; ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa > 0 && sbb > 0) r.pearson = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  return r;
}

bool ComparisonReport::bit_exact() const {
  return std::all_of(rows.begin(), rows.end(), [](const Checkpoint& c) { return c.passed(); });
}

const Checkpoint* ComparisonReport::find(const std::string& label,
                                         const std::string& reference) const {
  for (const auto& c : rows) {
    if (c.label == label && c.reference == reference) return &c;
  }
  return nullptr;
}

std::string ComparisonReport::to_json() const {
  nlohmann::ordered_json root;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& c : rows) {
    nlohmann::ordered_json j;
    j["label"] = c.label;
    j["reference"] = c.reference;
    j["dut"] = c.dut;
    j["format"] = c.data_format;
    j["count"] = c.m.count;
    j["max_abs"] = c.m.max_abs;
    j["mean_abs"] = c.m.mean_abs;
    j["pearson"] = c.m.pearson ? nlohmann::ordered_json(*c.m.pearson) : nlohmann::ordered_json();
    if (c.on_grid) j["within_1lsb_percent"] = c.m.within_1lsb_percent;
    j["exact_required"] = c.exact_required;
    j["passed"] = c.passed();
    arr.push_back(std::move(j));
  }
  root["checkpoints"] = std::move(arr);
  root["bit_exact"] = bit_exact();
  root["stream_cycles"] = stream_cycles;
  return root.dump(2) + "\n";
}

std::string ComparisonReport::to_table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %-8s %-8s %-22s %12s %12s  %s\n", "target", "ref", "dut",
                "format", "max abs", "mean abs", "agreement");
  os << line;
  for (const auto& c : rows) {
    std::string agreement;
    if (c.on_grid) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.4f%% within 1 LSB", c.m.within_1lsb_percent);
      agreement = buf;
    }
    char corr[48];
    if (c.m.pearson) {
      std::snprintf(corr, sizeof corr, "corr=%.6f", *c.m.pearson);
    } else {
      std::snprintf(corr, sizeof corr, "corr=undefined");
    }
    agreement += agreement.empty() ? corr : std::string(", ") + corr;
    if (c.exact_required) agreement += c.passed() ? ", exact" : ", MISMATCH";
    if (c.on_grid) {
      std::snprintf(line, sizeof line, "%-16s %-8s %-8s %-22s %12.0f %12.6f  %s\n",
                    c.label.c_str(), c.reference.c_str(), c.dut.c_str(), c.data_format.c_str(),
                    c.m.max_abs, c.m.mean_abs, agreement.c_str());
    } else {
      std::snprintf(line, sizeof line, "%-16s %-8s %-8s %-22s %12.8f %12.6f  %s\n",
                    c.label.c_str(), c.reference.c_str(), c.dut.c_str(), c.data_format.c_str(),
                    c.m.max_abs, c.m.mean_abs, agreement.c_str());
    }
    os << line;
  }
  return os.str();
}

namespace {

std::string display_name(std::string name) {
  if (!name.empty()) name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
  return name;
}

void same_shape(const Shape& a, const Shape& b, const std::string& what) {
  if (a != b) {
    throw std::logic_error(what + ": engine shapes differ, " + a.to_string() + " vs " +
                           b.to_string());
  }
}

std::vector<double> reals(const FxTensor& t) {
  std::vector<double> v(t.values.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = from_fixed(FxValue{t.values.data()[i], t.fmt});
  return v;
}

std::vector<double> grid(const ActTensor& t) { return {t.data().begin(), t.data().end()}; }

std::string acc_label(const QFormat& f) { return "acc/2^" + std::to_string(f.frac_bits); }

}  // namespace

ComparisonReport layerwise_compare(const ParamManifest& manifest, const ActTensor& image,
                                   const CompareOptions& options) {
  const DeployedModel model = deploy(manifest);
  const FloatForward flt = forward_float(manifest, image);
  const FixedForward direct = forward_fixed_direct(model, image);
  stream::StreamConfig cfg = options.stream;
  cfg.capture_layers = true;
  const stream::StreamResult st = stream::run_stream(model, image, cfg);

  ComparisonReport report;
  report.stream_cycles = st.cycles;
  const size_t n = model.layers.size();

  auto add_raw = [&](const std::string& label, const std::string& ref, const std::string& dut,
                     const std::string& fmt, std::span<const double> a, std::span<const double> b,
                     bool exact) {
    Checkpoint c{label, ref, dut, fmt, false, exact, metrics(a, b)};
    report.rows.push_back(std::move(c));
  };
  auto add_grid = [&](const std::string& label, const std::string& ref, const std::string& dut,
                      const ActTensor& a, const ActTensor& b, bool exact) {
    same_shape(a.shape(), b.shape(), label);
    Checkpoint c{label, ref, dut, "8-bit quantized value", true, exact, metrics(grid(a), grid(b))};
    report.rows.push_back(std::move(c));
  };

  for (const std::string ref : {"float", "direct"}) {
    const bool vs_float = ref == "float";
    const std::string dut = vs_float ? "direct" : "stream";
    for (size_t i = 0; i + 1 < n; ++i) {
      const DeployedLayer& d = model.layers[i];
      const std::string name = display_name(d.spec.name);
      const bool want_raw = options.all_layers || i == 0;
      const bool want_post = options.all_layers || i <= 1;
      const FxTensor& fixed_pre = direct.layers[i].pre;
      if (want_raw) {
        if (vs_float) {
          same_shape(flt.layers[i].pre.shape(), fixed_pre.values.shape(), name + " raw");
          add_raw(name + " raw", ref, dut, acc_label(fixed_pre.fmt), flt.layers[i].pre.data(),
                  reals(fixed_pre), false);
        } else {
          same_shape(fixed_pre.values.shape(), st.captures[i].pre.values.shape(), name + " raw");
          add_raw(name + " raw", ref, dut, acc_label(fixed_pre.fmt), reals(fixed_pre),
                  reals(st.captures[i].pre), true);
        }
      }
      if (want_post) {
        const ActTensor& a = vs_float ? flt.layers[i].post : direct.layers[i].post;
        const ActTensor& b = vs_float ? direct.layers[i].post : st.captures[i].post;
        add_grid(name + " post", ref, dut, a, b, !vs_float);
      }
    }
    if (vs_float) {
      same_shape(flt.head.shape(), direct.head.values.shape(), "final raw conv");
      add_raw("final raw conv", ref, dut, "32-bit, 15 fractional bits", flt.head.data(),
              reals(direct.head), false);
    } else {
      const FxTensor stream_head = serial_to_head(st.head_words, st.head_shape);
      same_shape(direct.head.values.shape(), stream_head.values.shape(), "final raw conv");
      add_raw("final raw conv", ref, dut, "32-bit, 15 fractional bits", reals(direct.head),
              reals(stream_head), true);
    }
  }
  return report;
}

}  // namespace w1a8
