#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "w1a8/deploy.hpp"
#include "w1a8/tensor.hpp"

namespace w1a8::stream {

// One spatial position on a wire. Padding tokens carry no payload; consumers
// read them as all-zero channels.
struct PixelVector {
  int y = 0;
  int x = 0;
  bool pad = false;
  std::vector<int32_t> ch;

  friend bool operator==(const PixelVector&, const PixelVector&) = default;
};

// k x k taps in row-major order, centered on (y, x) of the unpadded map.
// Out-of-image taps hold explicit zeros.
struct WindowToken {
  int y = 0;
  int x = 0;
  int kernel = 3;
  std::vector<PixelVector> taps;
};

struct AccumToken {
  int y = 0;
  int x = 0;
  std::vector<int64_t> acc;
};

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  bool full() const { return items_.size() >= capacity_; }
  bool empty() const { return items_.empty(); }
  size_t size() const { return items_.size(); }
  size_t capacity() const { return capacity_; }
  size_t high_water() const { return high_water_; }

  void push(T item) {
    if (full()) throw std::logic_error("push into a full queue");
    items_.push_back(std::move(item));
    if (items_.size() > high_water_) high_water_ = items_.size();
  }
  T pop() {
    if (empty()) throw std::logic_error("pop from an empty queue");
    T item = std::move(items_.front());
    items_.pop_front();
    return item;
  }
  const T& front() const { return items_.front(); }

 private:
  size_t capacity_;
  size_t high_water_ = 0;
  std::deque<T> items_;
};

struct StageStats {
  std::string name;
  uint64_t tokens_in = 0;
  uint64_t tokens_out = 0;
  uint64_t stall_cycles = 0;   // output ready, downstream queue full
  uint64_t busy_cycles = 0;    // waiting on ROM latency or initiation interval
  size_t occupancy_high_water = 0;  // input queue
  size_t line_buffer_peak_bytes = 0;
  size_t line_buffer_bound_bytes = 0;  // 2*W*Cout of the owning conv, 0 if n/a
};

// --- stage operations, usable on whole token sequences -------------------

// Emits the (h+2p) x (w+2p) padded stream in row-major order. Throws
// std::invalid_argument if the input does not arrive as h*w row-major pixels.
std::vector<PixelVector> pad_adapter(std::span<const PixelVector> in, int h, int w, int pad);

// Consumes a padded row-major stream and emits one window per interior
// position. peak_bytes receives the row-memory high-water mark (8-bit
// activations, padding not stored).
std::vector<WindowToken> line_buffer_3x3(std::span<const PixelVector> padded, int padded_h,
                                         int padded_w, int channels,
                                         size_t* peak_bytes = nullptr);

// y_o = sum_i s_{o,i} * (m_i * a_i) over input channels and taps.
std::vector<int64_t> pe_w1a8(const WindowToken& window, const BinaryWeight& signs,
                             std::span<const int64_t> mul_raw);

// y_o = sum_i w_{o,i} * a_i, exact; fraction = weight_frac + act_frac.
std::vector<int64_t> pe_standard(const WindowToken& window, std::span<const int64_t> weights,
                                 int out_channels);

// acc + (bias << shift), then for u8 layers * div_current, round to integer
// (ties away from zero) and clip to [0, 255]; for the head, rescale to 15
// fraction bits and saturate to signed 32 bits.
int64_t postprocess_value(int64_t acc, int64_t bias_raw, int bias_shift, const FxValue* div,
                          const QFormat& acc_fmt, OutputKind kind);
PixelVector postprocess(const AccumToken& acc, const DeployedLayer& layer);

std::vector<PixelVector> maxpool_stream(std::span<const PixelVector> in, int h, int w);

// Head words in y/x/channel order; channels of a position leave in groups of
// pe_num (group 0 = channels 0..pe_num-1, ...).
std::vector<int32_t> detect_head_serialize(std::span<const PixelVector> head, int pe_num);

// --- whole-pipeline simulation -------------------------------------------

enum class Scheduler { kRoundRobin, kRandomized };

struct StreamConfig {
  int rom_latency = 1;
  size_t queue_capacity = 2;
  Scheduler scheduler = Scheduler::kRoundRobin;
  uint64_t seed = 1;
  bool capture_layers = false;
};

struct LayerCapture {
  std::string layer;
  FxTensor pre;    // accumulator + aligned bias
  ActTensor post;  // u8 layers only
};

struct StreamResult {
  std::vector<int32_t> head_words;
  Shape head_shape{};
  uint64_t cycles = 0;
  std::vector<StageStats> stages;
  std::vector<LayerCapture> captures;
};

class DeadlockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

StreamResult run_stream(const DeployedModel& model, const ActTensor& image,
                        const StreamConfig& config = {});

}  // namespace w1a8::stream
