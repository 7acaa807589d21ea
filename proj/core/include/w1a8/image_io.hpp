#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "w1a8/tensor.hpp"

namespace w1a8 {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary PPM (P6, maxval 255) to a 3xHxW tensor and back.
ActTensor decode_ppm(std::span<const uint8_t> bytes);
std::vector<uint8_t> encode_ppm(const ActTensor& image);

ActTensor read_ppm(const std::filesystem::path& file);
void write_ppm(const std::filesystem::path& file, const ActTensor& image);

}  // namespace w1a8
