#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "w1a8/fixedpoint.hpp"

namespace w1a8 {

// Channel-major (CHW) feature-map shape; the batch dimension is always 1.
struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  constexpr size_t numel() const { return static_cast<size_t>(c) * h * w; }
  std::string to_string() const {
    return "[" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
  }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw std::invalid_argument("tensor data does not match shape " + shape_.to_string());
    }
  }

  const Shape& shape() const { return shape_; }
  size_t size() const { return data_.size(); }

  T& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  const T& at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  size_t index(int c, int y, int x) const {
    return (static_cast<size_t>(c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_{};
  std::vector<T> data_;
};

using ActTensor = Tensor<uint8_t>;
using FloatTensor = Tensor<double>;

// Wide integers tagged with the Q format they are expressed in.
struct FxTensor {
  Tensor<int64_t> values;
  QFormat fmt{};

  double real(int c, int y, int x) const {
    return from_fixed(FxValue{values.at(c, y, x), fmt});
  }
  friend bool operator==(const FxTensor&, const FxTensor&) = default;
};

}  // namespace w1a8
