#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "w1a8/fixedpoint.hpp"
#include "w1a8/tensor.hpp"

namespace w1a8 {

class TensorIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DumpType { kU8, kI32, kI64, kF64 };

std::string to_string(DumpType t);

// Sidecar of a tensor dump: "<name>.json" next to "<name>.bin".
struct DumpHeader {
  std::string name;
  Shape shape{};
  DumpType type = DumpType::kU8;
  std::optional<QFormat> fmt;  // set for fixed-point dumps
};

// Flat little-endian CHW payload plus a JSON sidecar holding shape and format.
void write_dump(const std::filesystem::path& dir, const std::string& name, const ActTensor& t);
void write_dump(const std::filesystem::path& dir, const std::string& name, const FxTensor& t);
void write_dump(const std::filesystem::path& dir, const std::string& name, const FloatTensor& t);

DumpHeader read_dump_header(const std::filesystem::path& dir, const std::string& name);
ActTensor read_u8_dump(const std::filesystem::path& dir, const std::string& name);
FxTensor read_fx_dump(const std::filesystem::path& dir, const std::string& name);
FloatTensor read_f64_dump(const std::filesystem::path& dir, const std::string& name);

// Raw head file: signed 32-bit little-endian words, nothing else.
void write_head_words(const std::filesystem::path& file, std::span<const int32_t> words);
std::vector<int32_t> read_head_words(const std::filesystem::path& file);

// Array-level head in CHW to/from the y/x/channel serial order.
std::vector<int32_t> head_to_serial(const FxTensor& head);
FxTensor serial_to_head(std::span<const int32_t> words, Shape shape);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& file);
void write_file_bytes(const std::filesystem::path& file, std::span<const uint8_t> bytes);
void write_text_file(const std::filesystem::path& file, const std::string& text);

}  // namespace w1a8
