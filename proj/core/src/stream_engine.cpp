#include "w1a8/stream_engine.hpp"

#include <algorithm>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include "w1a8/coe_rom.hpp"

namespace w1a8::stream {

namespace {

// ---------------------------------------------------------------------------
// Stage kernels. Each kernel is a pure state machine:
//   wants_input() / consume(in)   accept at most one token per cycle
//   has_output() / take_output()  offer at most one token per cycle
//   extra_latency()               cycles the kernel stays busy after consume
// The node wrapper binds kernels to bounded queues and models the clock.
// ---------------------------------------------------------------------------

class PadKernel {
 public:
  using In = PixelVector;
  using Out = PixelVector;

  PadKernel(int h, int w, int pad) : h_(h), w_(w), pad_(pad), hp_(h + 2 * pad), wp_(w + 2 * pad) {}

  bool wants_input() const { return !pending_ && py_ < hp_ && interior(); }

  void consume(PixelVector p) {
    if (p.y != py_ - pad_ || p.x != px_ - pad_) {
      throw std::invalid_argument("pad_adapter: expected pixel (" + std::to_string(py_ - pad_) +
                                  "," + std::to_string(px_ - pad_) + "), got (" +
                                  std::to_string(p.y) + "," + std::to_string(p.x) + ")");
    }
    p.y = py_;
    p.x = px_;
    pending_ = std::move(p);
    advance();
  }

  bool has_output() {
    if (pending_) return true;
    if (py_ >= hp_ || interior()) return false;
    pending_ = PixelVector{py_, px_, true, {}};
    advance();
    return true;
  }

  PixelVector take_output() {
    PixelVector p = std::move(*pending_);
    pending_.reset();
    return p;
  }

  int extra_latency() const { return 0; }
  bool done() const { return py_ >= hp_ && !pending_; }
  size_t buffered_bytes() const { return 0; }
  std::string state() const {
    return "next padded (" + std::to_string(py_) + "," + std::to_string(px_) + ")";
  }

 private:
  bool interior() const { return py_ >= pad_ && py_ < h_ + pad_ && px_ >= pad_ && px_ < w_ + pad_; }
  void advance() {
    if (++px_ == wp_) {
      px_ = 0;
      ++py_;
    }
  }

  int h_, w_, pad_, hp_, wp_;
  int py_ = 0;
  int px_ = 0;
  std::optional<PixelVector> pending_;
};

// Two row memories of the padded width plus a 3x3 window register. Padding
// entries are tracked by flag only, so row memory holds at most 2*W pixels.
class LineBufferKernel {
 public:
  using In = PixelVector;
  using Out = WindowToken;

  LineBufferKernel(int padded_h, int padded_w, int channels)
      : hp_(padded_h), wp_(padded_w), channels_(channels),
        rows_{std::vector<PixelVector>(padded_w, PixelVector{0, 0, true, {}}),
              std::vector<PixelVector>(padded_w, PixelVector{0, 0, true, {}})},
        window_(9, PixelVector{0, 0, true, {}}) {}

  bool wants_input() const { return !pending_ && r_ < hp_; }

  void consume(PixelVector p) {
    if (p.y != r_ || p.x != c_) {
      throw std::invalid_argument("line_buffer_3x3: out-of-order padded token");
    }
    if (!p.pad && p.ch.size() != static_cast<size_t>(channels_)) {
      throw std::invalid_argument("line_buffer_3x3: channel count mismatch");
    }
    PixelVector top = std::move(rows_[0][c_]);
    PixelVector mid = rows_[1][c_];
    if (!top.pad) --stored_;
    if (!p.pad) ++stored_;
    rows_[0][c_] = std::move(rows_[1][c_]);
    rows_[1][c_] = p;
    peak_ = std::max(peak_, stored_);

    for (int r = 0; r < 3; ++r) {
      window_[r * 3 + 0] = std::move(window_[r * 3 + 1]);
      window_[r * 3 + 1] = std::move(window_[r * 3 + 2]);
    }
    window_[2] = std::move(top);
    window_[5] = std::move(mid);
    window_[8] = std::move(p);

    if (r_ >= 2 && c_ >= 2) {
      WindowToken w;
      w.y = r_ - 2;
      w.x = c_ - 2;
      w.kernel = 3;
      w.taps.reserve(9);
      for (const auto& t : window_) {
        if (t.pad) {
          w.taps.push_back(PixelVector{0, 0, true, std::vector<int32_t>(channels_, 0)});
        } else {
          w.taps.push_back(t);
        }
      }
      pending_ = std::move(w);
    }
    if (++c_ == wp_) {
      c_ = 0;
      ++r_;
    }
  }

  bool has_output() const { return pending_.has_value(); }
  WindowToken take_output() {
    WindowToken w = std::move(*pending_);
    pending_.reset();
    return w;
  }
  int extra_latency() const { return 0; }
  bool done() const { return r_ >= hp_ && !pending_; }
  size_t buffered_bytes() const { return peak_ * static_cast<size_t>(channels_); }
  std::string state() const {
    return "next (" + std::to_string(r_) + "," + std::to_string(c_) + "), row pixels " +
           std::to_string(stored_);
  }

 private:
  int hp_, wp_, channels_;
  int r_ = 0;
  int c_ = 0;
  std::vector<PixelVector> rows_[2];
  std::vector<PixelVector> window_;
  size_t stored_ = 0;
  size_t peak_ = 0;
  std::optional<WindowToken> pending_;
};

template <typename InT>
class PeKernel {
 public:
  using In = InT;
  using Out = AccumToken;

  PeKernel(const DeployedLayer& layer, int rom_latency, int initiation_interval)
      : layer_(layer), mul_(layer.mul_raw()), rom_latency_(rom_latency),
        ii_(initiation_interval) {}

  bool wants_input() const { return !pending_; }

  void consume(InT in) {
    WindowToken w;
    if constexpr (std::is_same_v<InT, WindowToken>) {
      w = std::move(in);
    } else {
      w.y = in.y;
      w.x = in.x;
      w.kernel = 1;
      w.taps.push_back(std::move(in));
    }
    AccumToken t;
    t.y = w.y;
    t.x = w.x;
    t.acc = layer_.spec.is_binary() ? pe_w1a8(w, layer_.signs, mul_)
                                    : pe_standard(w, layer_.weights, layer_.spec.out_channels);
    pending_ = std::move(t);
    latency_ = (first_ ? rom_latency_ : 0) + (ii_ - 1);
    first_ = false;
  }

  bool has_output() const { return pending_.has_value(); }
  AccumToken take_output() {
    AccumToken t = std::move(*pending_);
    pending_.reset();
    return t;
  }
  int extra_latency() const { return latency_; }
  bool done() const { return !pending_; }
  size_t buffered_bytes() const { return 0; }
  std::string state() const { return pending_ ? "holding accumulators" : "idle"; }

 private:
  const DeployedLayer& layer_;
  std::vector<int64_t> mul_;
  int rom_latency_;
  int ii_;
  int latency_ = 0;
  bool first_ = true;
  std::optional<AccumToken> pending_;
};

class PostKernel {
 public:
  using In = AccumToken;
  using Out = PixelVector;

  PostKernel(const DeployedLayer& layer, LayerCapture* capture) : layer_(layer), capture_(capture) {}

  bool wants_input() const { return !pending_; }
  void consume(AccumToken a) {
    if (capture_ != nullptr) {
      for (size_t o = 0; o < a.acc.size(); ++o) {
        capture_->pre.values.at(static_cast<int>(o), a.y, a.x) =
            a.acc[o] + layer_.bias[o] * (int64_t{1} << layer_.bias_shift);
      }
    }
    PixelVector p = postprocess(a, layer_);
    if (capture_ != nullptr && layer_.spec.output == OutputKind::kU8) {
      for (size_t o = 0; o < p.ch.size(); ++o) {
        capture_->post.at(static_cast<int>(o), p.y, p.x) = static_cast<uint8_t>(p.ch[o]);
      }
    }
    pending_ = std::move(p);
  }
  bool has_output() const { return pending_.has_value(); }
  PixelVector take_output() {
    PixelVector p = std::move(*pending_);
    pending_.reset();
    return p;
  }
  int extra_latency() const { return 0; }
  bool done() const { return !pending_; }
  size_t buffered_bytes() const { return 0; }
  std::string state() const { return pending_ ? "holding pixel" : "idle"; }

 private:
  const DeployedLayer& layer_;
  LayerCapture* capture_;
  std::optional<PixelVector> pending_;
};

// 2x2 stride-2 max over a row-major stream; one row of partial maxima.
class PoolKernel {
 public:
  using In = PixelVector;
  using Out = PixelVector;

  PoolKernel(int h, int w) : h_(h), w_(w), partial_(static_cast<size_t>(w / 2)) {
    if (h % 2 != 0 || w % 2 != 0) {
      throw std::invalid_argument("maxpool_stream: odd spatial size");
    }
  }

  bool wants_input() const { return !pending_ && y_ < h_; }

  void consume(PixelVector p) {
    if (p.y != y_ || p.x != x_) throw std::invalid_argument("maxpool_stream: out-of-order pixel");
    auto& slot = partial_[static_cast<size_t>(x_ / 2)];
    if (y_ % 2 == 0 && x_ % 2 == 0) {
      slot = std::move(p.ch);
      ++stored_;
      peak_ = std::max(peak_, stored_ * slot.size());
    } else {
      for (size_t c = 0; c < slot.size(); ++c) slot[c] = std::max(slot[c], p.ch[c]);
    }
    if (y_ % 2 == 1 && x_ % 2 == 1) {
      pending_ = PixelVector{y_ / 2, x_ / 2, false, std::move(slot)};
      slot.clear();
      --stored_;
    }
    if (++x_ == w_) {
      x_ = 0;
      ++y_;
    }
  }

  bool has_output() const { return pending_.has_value(); }
  PixelVector take_output() {
    PixelVector p = std::move(*pending_);
    pending_.reset();
    return p;
  }
  int extra_latency() const { return 0; }
  bool done() const { return y_ >= h_ && !pending_; }
  size_t buffered_bytes() const { return peak_; }
  std::string state() const {
    return "next (" + std::to_string(y_) + "," + std::to_string(x_) + ")";
  }

 private:
  int h_, w_;
  int y_ = 0;
  int x_ = 0;
  std::vector<std::vector<int32_t>> partial_;
  size_t stored_ = 0;
  size_t peak_ = 0;
  std::optional<PixelVector> pending_;
};

// PE_NUM-wide groups leave one 32-bit word per cycle.
class SerializerKernel {
 public:
  using In = PixelVector;
  using Out = int32_t;

  explicit SerializerKernel(int pe_num) : pe_num_(pe_num) {
    if (pe_num <= 0) throw std::invalid_argument("serializer: PE_NUM must be positive");
  }

  bool wants_input() const { return next_ >= words_.size(); }
  void consume(PixelVector p) {
    words_.clear();
    next_ = 0;
    const size_t channels = p.ch.size();
    const size_t groups = (channels + pe_num_ - 1) / pe_num_;
    for (size_t g = 0; g < groups; ++g) {
      for (size_t lane = 0; lane < static_cast<size_t>(pe_num_); ++lane) {
        const size_t c = g * pe_num_ + lane;
        if (c < channels) words_.push_back(p.ch[c]);
      }
    }
  }
  bool has_output() const { return next_ < words_.size(); }
  int32_t take_output() { return words_[next_++]; }
  int extra_latency() const { return 0; }
  bool done() const { return next_ >= words_.size(); }
  size_t buffered_bytes() const { return 0; }
  std::string state() const {
    return std::to_string(words_.size() - next_) + " words pending";
  }

 private:
  int pe_num_;
  std::vector<int32_t> words_;
  size_t next_ = 0;
};

template <typename K>
std::vector<typename K::Out> drive(K& kernel, std::span<const typename K::In> inputs) {
  std::vector<typename K::Out> out;
  size_t i = 0;
  while (true) {
    while (kernel.has_output()) out.push_back(kernel.take_output());
    if (i < inputs.size() && kernel.wants_input()) {
      kernel.consume(inputs[i++]);
      continue;
    }
    if (i < inputs.size()) {
      throw std::invalid_argument("stage refused input before the stream ended");
    }
    break;
  }
  if (!kernel.done()) throw std::invalid_argument("stream ended early");
  return out;
}

// ---------------------------------------------------------------------------
// Clocked nodes
// ---------------------------------------------------------------------------

class Node {
 public:
  virtual ~Node() = default;
  // Returns true if the node moved a token or is counting down a latency.
  virtual bool tick(uint64_t cycle) = 0;
  virtual bool finished() const = 0;
  virtual std::string dump() const = 0;
  StageStats stats;
};

template <typename K>
class KernelNode : public Node {
 public:
  KernelNode(std::string name, K kernel, BoundedQueue<typename K::In>* in,
             BoundedQueue<typename K::Out>* out, size_t bound_bytes)
      : kernel_(std::move(kernel)), in_(in), out_(out) {
    stats.name = std::move(name);
    stats.line_buffer_bound_bytes = bound_bytes;
  }

  bool tick(uint64_t cycle) override {
    if (cycle < ready_at_) {
      ++stats.busy_cycles;
      return true;
    }
    bool progress = false;
    if (kernel_.has_output()) {
      if (out_->full()) {
        ++stats.stall_cycles;
      } else {
        out_->push(kernel_.take_output());
        ++stats.tokens_out;
        progress = true;
      }
    }
    if (!in_->empty() && kernel_.wants_input()) {
      kernel_.consume(in_->pop());
      ++stats.tokens_in;
      progress = true;
      ready_at_ = cycle + 1 + static_cast<uint64_t>(kernel_.extra_latency());
    }
    stats.occupancy_high_water = in_->high_water();
    stats.line_buffer_peak_bytes = kernel_.buffered_bytes();
    return progress;
  }

  bool finished() const override { return kernel_.done() && in_->empty(); }

  std::string dump() const override {
    std::ostringstream os;
    os << stats.name << ": in-queue " << in_->size() << "/" << in_->capacity() << ", out-queue "
       << out_->size() << "/" << out_->capacity() << ", " << kernel_.state();
    return os.str();
  }

 private:
  K kernel_;
  BoundedQueue<typename K::In>* in_;
  BoundedQueue<typename K::Out>* out_;
  uint64_t ready_at_ = 0;
};

class SourceNode : public Node {
 public:
  SourceNode(const ActTensor& image, BoundedQueue<PixelVector>* out) : image_(image), out_(out) {
    stats.name = "source";
  }

  bool tick(uint64_t) override {
    const Shape s = image_.shape();
    if (finished()) return false;
    if (out_->full()) {
      ++stats.stall_cycles;
      return false;
    }
    PixelVector p{y_, x_, false, std::vector<int32_t>(static_cast<size_t>(s.c))};
    for (int c = 0; c < s.c; ++c) p.ch[c] = image_.at(c, y_, x_);
    out_->push(std::move(p));
    ++stats.tokens_out;
    if (++x_ == s.w) {
      x_ = 0;
      ++y_;
    }
    return true;
  }
  bool finished() const override { return y_ >= image_.shape().h; }
  std::string dump() const override {
    return "source: next (" + std::to_string(y_) + "," + std::to_string(x_) + ")";
  }

 private:
  const ActTensor& image_;
  BoundedQueue<PixelVector>* out_;
  int y_ = 0;
  int x_ = 0;
};

class SinkNode : public Node {
 public:
  SinkNode(BoundedQueue<int32_t>* in, size_t expected, std::vector<int32_t>* words)
      : in_(in), expected_(expected), words_(words) {
    stats.name = "sink";
  }
  bool tick(uint64_t) override {
    if (in_->empty()) return false;
    words_->push_back(in_->pop());
    ++stats.tokens_in;
    stats.occupancy_high_water = in_->high_water();
    return true;
  }
  bool finished() const override { return words_->size() >= expected_; }
  std::string dump() const override {
    return "sink: " + std::to_string(words_->size()) + "/" + std::to_string(expected_) +
           " words, in-queue " + std::to_string(in_->size());
  }

 private:
  BoundedQueue<int32_t>* in_;
  size_t expected_;
  std::vector<int32_t>* words_;
};

struct Pipeline {
  std::vector<std::unique_ptr<Node>> nodes;  // topological order
  std::vector<std::shared_ptr<void>> queues;

  template <typename T>
  BoundedQueue<T>* make_queue(size_t capacity) {
    auto q = std::make_shared<BoundedQueue<T>>(capacity);
    BoundedQueue<T>* raw = q.get();
    queues.push_back(std::move(q));
    return raw;
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Stage operations
// ---------------------------------------------------------------------------

std::vector<PixelVector> pad_adapter(std::span<const PixelVector> in, int h, int w, int pad) {
  if (in.size() != static_cast<size_t>(h) * w) {
    throw std::invalid_argument("pad_adapter: stream holds " + std::to_string(in.size()) +
                                " pixels, expected " + std::to_string(h * w));
  }
  PadKernel k(h, w, pad);
  return drive(k, in);
}

std::vector<WindowToken> line_buffer_3x3(std::span<const PixelVector> padded, int padded_h,
                                         int padded_w, int channels, size_t* peak_bytes) {
  LineBufferKernel k(padded_h, padded_w, channels);
  auto out = drive(k, padded);
  if (peak_bytes != nullptr) *peak_bytes = k.buffered_bytes();
  return out;
}

std::vector<int64_t> pe_w1a8(const WindowToken& window, const BinaryWeight& signs,
                             std::span<const int64_t> mul_raw) {
  const int k2 = window.kernel * window.kernel;
  const size_t ic = mul_raw.size();
  if (static_cast<int>(window.taps.size()) != k2 || signs.kernel != window.kernel ||
      static_cast<size_t>(signs.in_channels) != ic) {
    throw std::invalid_argument("pe_w1a8: window/weight dimension mismatch");
  }
  // m_i * a_i once per window, shared by every output channel; [ic][tap] order
  // matches the canonical weight layout.
  std::vector<int64_t> scaled(ic * k2);
  for (size_t c = 0; c < ic; ++c) {
    for (int t = 0; t < k2; ++t) {
      scaled[c * k2 + t] = mul_raw[c] * static_cast<int64_t>(window.taps[t].ch[c]);
    }
  }
  const size_t n = scaled.size();
  std::vector<int64_t> acc(static_cast<size_t>(signs.out_channels), 0);
  for (int o = 0; o < signs.out_channels; ++o) {
    const uint8_t* bits = signs.bits.data() + static_cast<size_t>(o) * n;
    int64_t sum = 0;
    for (size_t j = 0; j < n; ++j) {
      // bit 1: +v; bit 0: (v ^ -1) + 1 = -v.
      const int64_t flip = static_cast<int64_t>(bits[j]) - 1;
      sum += (scaled[j] ^ flip) - flip;
    }
    acc[static_cast<size_t>(o)] = sum;
  }
  return acc;
}

std::vector<int64_t> pe_standard(const WindowToken& window, std::span<const int64_t> weights,
                                 int out_channels) {
  const int k2 = window.kernel * window.kernel;
  if (window.taps.empty() || static_cast<int>(window.taps.size()) != k2) {
    throw std::invalid_argument("pe_standard: malformed window");
  }
  const size_t ic = window.taps[0].ch.size();
  const size_t n = ic * k2;
  if (weights.size() != n * out_channels) {
    throw std::invalid_argument("pe_standard: weight count mismatch");
  }
  std::vector<int64_t> act(n);
  for (size_t c = 0; c < ic; ++c) {
    for (int t = 0; t < k2; ++t) act[c * k2 + t] = window.taps[t].ch[c];
  }
  std::vector<int64_t> acc(static_cast<size_t>(out_channels), 0);
  for (int o = 0; o < out_channels; ++o) {
    const int64_t* w = weights.data() + static_cast<size_t>(o) * n;
    int64_t sum = 0;
    for (size_t j = 0; j < n; ++j) sum += w[j] * act[j];
    acc[static_cast<size_t>(o)] = sum;
  }
  return acc;
}

int64_t postprocess_value(int64_t acc, int64_t bias_raw, int bias_shift, const FxValue* div,
                          const QFormat& acc_fmt, OutputKind kind) {
  const int64_t biased = acc + bias_raw * (int64_t{1} << bias_shift);
  if (!acc_fmt.contains_raw(biased)) {
    throw std::overflow_error("postprocess: accumulator outside " + acc_fmt.to_string());
  }
  const FxValue v{biased, acc_fmt};
  if (kind == OutputKind::kRawQ15) return fx_rescale(v, kHeadOut.frac_bits, kHeadOut).raw;
  if (div == nullptr) throw std::invalid_argument("postprocess: u8 output needs div_current");
  return requantize_u8(v, *div);
}

PixelVector postprocess(const AccumToken& acc, const DeployedLayer& layer) {
  const QFormat acc_fmt = layer.acc_format();
  const bool raw = layer.spec.output == OutputKind::kRawQ15;
  PixelVector p{acc.y, acc.x, false, std::vector<int32_t>(acc.acc.size())};
  for (size_t o = 0; o < acc.acc.size(); ++o) {
    const FxValue* div = raw ? nullptr : &layer.scales.div_current[o];
    p.ch[o] = static_cast<int32_t>(postprocess_value(acc.acc[o], layer.bias[o], layer.bias_shift,
                                                     div, acc_fmt, layer.spec.output));
  }
  return p;
}

std::vector<PixelVector> maxpool_stream(std::span<const PixelVector> in, int h, int w) {
  if (in.size() != static_cast<size_t>(h) * w) {
    throw std::invalid_argument("maxpool_stream: stream length mismatch");
  }
  PoolKernel k(h, w);
  return drive(k, in);
}

std::vector<int32_t> detect_head_serialize(std::span<const PixelVector> head, int pe_num) {
  SerializerKernel k(pe_num);
  return drive(k, head);
}

// ---------------------------------------------------------------------------
// Pipeline assembly and scheduling
// ---------------------------------------------------------------------------

StreamResult run_stream(const DeployedModel& model, const ActTensor& image,
                        const StreamConfig& config) {
  const ModelSpec& spec = model.model;
  if (image.shape() != spec.input) {
    throw std::invalid_argument("run_stream: image shape " + image.shape().to_string() +
                                " != model input " + spec.input.to_string());
  }
  const RomSchedule rom = rom_latency_model(config.rom_latency);
  const size_t cap = config.queue_capacity;

  StreamResult result;
  if (config.capture_layers) {
    for (size_t i = 0; i < model.layers.size(); ++i) {
      LayerCapture c;
      c.layer = model.layers[i].spec.name;
      c.pre = FxTensor{Tensor<int64_t>(spec.conv_output(i)), model.layers[i].acc_format()};
      if (model.layers[i].spec.output == OutputKind::kU8) c.post = ActTensor(spec.conv_output(i));
      result.captures.push_back(std::move(c));
    }
  }

  Pipeline pipe;
  auto* wire = pipe.make_queue<PixelVector>(cap);
  pipe.nodes.push_back(std::make_unique<SourceNode>(image, wire));

  for (size_t i = 0; i < model.layers.size(); ++i) {
    const DeployedLayer& d = model.layers[i];
    const Shape in = spec.layer_input(i);
    const Shape out = spec.conv_output(i);
    const std::string& name = d.spec.name;
    const bool head = d.spec.output == OutputKind::kRawQ15;
    const int ii = head ? (d.spec.out_channels + spec.head_pe_num - 1) / spec.head_pe_num : 1;
    auto* acc_q = pipe.make_queue<AccumToken>(cap);

    if (d.spec.kernel == 3) {
      auto* padded = pipe.make_queue<PixelVector>(cap);
      pipe.nodes.push_back(std::make_unique<KernelNode<PadKernel>>(
          name + ".pad", PadKernel(in.h, in.w, 1), wire, padded, 0));
      auto* windows = pipe.make_queue<WindowToken>(cap);
      pipe.nodes.push_back(std::make_unique<KernelNode<LineBufferKernel>>(
          name + ".linebuf", LineBufferKernel(in.h + 2, in.w + 2, in.c), padded, windows,
          size_t{2} * out.w * out.c));
      pipe.nodes.push_back(std::make_unique<KernelNode<PeKernel<WindowToken>>>(
          name + ".pe", PeKernel<WindowToken>(d, rom.read_latency, ii), windows, acc_q, 0));
    } else {
      pipe.nodes.push_back(std::make_unique<KernelNode<PeKernel<PixelVector>>>(
          name + ".pe", PeKernel<PixelVector>(d, rom.read_latency, ii), wire, acc_q, 0));
    }

    LayerCapture* capture = config.capture_layers ? &result.captures[i] : nullptr;
    auto* post_q = pipe.make_queue<PixelVector>(cap);
    pipe.nodes.push_back(std::make_unique<KernelNode<PostKernel>>(
        name + ".post", PostKernel(d, capture), acc_q, post_q, 0));
    wire = post_q;

    if (d.spec.has_maxpool) {
      const Shape pooled = spec.layer_output(i);
      auto* pool_q = pipe.make_queue<PixelVector>(cap);
      pipe.nodes.push_back(std::make_unique<KernelNode<PoolKernel>>(
          name + ".pool", PoolKernel(out.h, out.w), wire, pool_q,
          size_t{3} * pooled.w * pooled.c));
      wire = pool_q;
    }
  }

  const Shape head_shape = spec.output_shape();
  auto* words_q = pipe.make_queue<int32_t>(cap);
  pipe.nodes.push_back(std::make_unique<KernelNode<SerializerKernel>>(
      "serializer", SerializerKernel(spec.head_pe_num), wire, words_q, 0));
  result.head_words.reserve(head_shape.numel());
  auto sink = std::make_unique<SinkNode>(words_q, head_shape.numel(), &result.head_words);
  SinkNode* sink_ptr = sink.get();
  pipe.nodes.push_back(std::move(sink));

  // Downstream-first order gives register semantics: a token pushed at cycle t
  // is consumed by the next stage at t + 1.
  std::vector<Node*> order;
  for (auto it = pipe.nodes.rbegin(); it != pipe.nodes.rend(); ++it) order.push_back(it->get());
  std::mt19937_64 rng(config.seed);

  uint64_t cycle = 0;
  while (!sink_ptr->finished()) {
    if (config.scheduler == Scheduler::kRandomized) std::shuffle(order.begin(), order.end(), rng);
    bool progress = false;
    for (Node* n : order) progress |= n->tick(cycle);
    ++cycle;
    if (!progress) {
      std::ostringstream os;
      os << "stream pipeline deadlocked at cycle " << cycle << "\n";
      for (const auto& n : pipe.nodes) os << "  " << n->dump() << "\n";
      throw DeadlockError(os.str());
    }
  }
  for (const auto& n : pipe.nodes) {
    if (!n->finished()) {
      throw std::invalid_argument("stream length mismatch: " + n->dump() +
                                  " still holds data after the head completed");
    }
  }

  result.cycles = cycle;
  result.head_shape = head_shape;
  for (const auto& n : pipe.nodes) result.stages.push_back(n->stats);
  return result;
}

}  // namespace w1a8::stream
