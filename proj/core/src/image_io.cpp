#include "w1a8/image_io.hpp"

#include <cctype>
#include <string>

#include "w1a8/tensor_io.hpp"

namespace w1a8 {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const uint8_t> bytes) : b_(bytes) {}

  // Whitespace and '#' comments may separate header fields.
  void skip() {
    while (pos_ < b_.size()) {
      if (std::isspace(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  int number(const char* what) {
    skip();
    if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) {
      throw ImageError(std::string("ppm: expected ") + what);
    }
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      if (v > 1'000'000) throw ImageError(std::string("ppm: ") + what + " too large");
    }
    return static_cast<int>(v);
  }

  size_t pos() const { return pos_; }
  void advance() { ++pos_; }
  uint8_t peek() const { return pos_ < b_.size() ? b_[pos_] : 0; }

 private:
  std::span<const uint8_t> b_;
  size_t pos_ = 0;
};

}  // namespace

ActTensor decode_ppm(std::span<const uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw ImageError("ppm: not a binary P6 file");
  }
  HeaderReader r(bytes.subspan(2));
  const int w = r.number("width");
  const int h = r.number("height");
  const int maxval = r.number("maxval");
  if (w <= 0 || h <= 0) throw ImageError("ppm: empty image");
  if (maxval != 255) throw ImageError("ppm: maxval " + std::to_string(maxval) + ", expected 255");
  if (!std::isspace(r.peek())) throw ImageError("ppm: missing separator before pixel data");
  const size_t start = 2 + r.pos() + 1;
  const size_t need = static_cast<size_t>(w) * h * 3;
  if (bytes.size() - start != need) {
    throw ImageError("ppm: pixel data holds " + std::to_string(bytes.size() - start) +
                     " bytes, expected " + std::to_string(need));
  }
  ActTensor img(Shape{3, h, w});
  const uint8_t* p = bytes.data() + start;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = *p++;
    }
  }
  return img;
}

std::vector<uint8_t> encode_ppm(const ActTensor& image) {
  const Shape s = image.shape();
  if (s.c != 3) throw ImageError("ppm: image must have 3 channels, got " + std::to_string(s.c));
  const std::string header = "P6\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + s.numel());
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) out.push_back(image.at(c, y, x));
    }
  }
  return out;
}

ActTensor read_ppm(const std::filesystem::path& file) {
  try {
    return decode_ppm(read_file_bytes(file));
  } catch (const TensorIoError& e) {
    throw ImageError(e.what());
  } catch (const ImageError& e) {
    throw ImageError(file.string() + ": " + e.what());
  }
}

void write_ppm(const std::filesystem::path& file, const ActTensor& image) {
  write_file_bytes(file, encode_ppm(image));
}

}  // namespace w1a8
