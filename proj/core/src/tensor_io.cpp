#include "w1a8/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

namespace w1a8 {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little,
              "dump payloads are written with memcpy and assume a little-endian host");

namespace {

DumpType parse_type(const std::string& s) {
  if (s == "u8") return DumpType::kU8;
  if (s == "i32") return DumpType::kI32;
  if (s == "i64") return DumpType::kI64;
  if (s == "f64") return DumpType::kF64;
  throw TensorIoError("unknown dump type '" + s + "'");
}

template <typename T>
void write_payload(const fs::path& dir, const DumpHeader& h, const std::vector<T>& values) {
  fs::create_directories(dir);
  json j;
  j["name"] = h.name;
  j["shape"] = {h.shape.c, h.shape.h, h.shape.w};
  j["dtype"] = to_string(h.type);
  j["layout"] = "chw";
  j["endianness"] = "little";
  if (h.fmt) j["format"] = h.fmt->to_string();
  write_text_file(dir / (h.name + ".json"), j.dump(2) + "\n");
  std::vector<uint8_t> bytes(values.size() * sizeof(T));
  if (!bytes.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
  write_file_bytes(dir / (h.name + ".bin"), bytes);
}

template <typename T>
std::vector<T> read_payload(const fs::path& dir, const DumpHeader& h) {
  const auto bytes = read_file_bytes(dir / (h.name + ".bin"));
  if (bytes.size() != h.shape.numel() * sizeof(T)) {
    throw TensorIoError(h.name + ".bin holds " + std::to_string(bytes.size()) +
                        " bytes, expected " + std::to_string(h.shape.numel() * sizeof(T)));
  }
  std::vector<T> out(h.shape.numel());
  if (!bytes.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

DumpHeader expect(const fs::path& dir, const std::string& name, DumpType type) {
  DumpHeader h = read_dump_header(dir, name);
  if (h.type != type) {
    throw TensorIoError(name + ": dump type " + to_string(h.type) + ", expected " +
                        to_string(type));
  }
  return h;
}

}  // namespace

std::string to_string(DumpType t) {
  switch (t) {
    case DumpType::kU8: return "u8";
    case DumpType::kI32: return "i32";
    case DumpType::kI64: return "i64";
    case DumpType::kF64: return "f64";
  }
  return "?";
}

void write_dump(const fs::path& dir, const std::string& name, const ActTensor& t) {
  write_payload(dir, DumpHeader{name, t.shape(), DumpType::kU8, std::nullopt}, t.data());
}

void write_dump(const fs::path& dir, const std::string& name, const FxTensor& t) {
  write_payload(dir, DumpHeader{name, t.values.shape(), DumpType::kI64, t.fmt}, t.values.data());
}

void write_dump(const fs::path& dir, const std::string& name, const FloatTensor& t) {
  write_payload(dir, DumpHeader{name, t.shape(), DumpType::kF64, std::nullopt}, t.data());
}

DumpHeader read_dump_header(const fs::path& dir, const std::string& name) {
  const auto bytes = read_file_bytes(dir / (name + ".json"));
  DumpHeader h;
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    h.name = j.at("name").get<std::string>();
    const auto& s = j.at("shape");
    if (!s.is_array() || s.size() != 3) throw TensorIoError(name + ": shape must be [c,h,w]");
    h.shape = Shape{s[0].get<int>(), s[1].get<int>(), s[2].get<int>()};
    h.type = parse_type(j.at("dtype").get<std::string>());
    if (j.contains("format")) h.fmt = QFormat::parse(j["format"].get<std::string>());
  } catch (const json::exception& e) {
    throw TensorIoError(name + ".json: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw TensorIoError(name + ".json: " + e.what());
  }
  if (h.shape.c < 0 || h.shape.h < 0 || h.shape.w < 0) throw TensorIoError(name + ": negative shape");
  return h;
}

ActTensor read_u8_dump(const fs::path& dir, const std::string& name) {
  const DumpHeader h = expect(dir, name, DumpType::kU8);
  return ActTensor(h.shape, read_payload<uint8_t>(dir, h));
}

FxTensor read_fx_dump(const fs::path& dir, const std::string& name) {
  const DumpHeader h = expect(dir, name, DumpType::kI64);
  if (!h.fmt) throw TensorIoError(name + ": fixed-point dump without a format");
  return FxTensor{Tensor<int64_t>(h.shape, read_payload<int64_t>(dir, h)), *h.fmt};
}

FloatTensor read_f64_dump(const fs::path& dir, const std::string& name) {
  const DumpHeader h = expect(dir, name, DumpType::kF64);
  return FloatTensor(h.shape, read_payload<double>(dir, h));
}

void write_head_words(const fs::path& file, std::span<const int32_t> words) {
  std::vector<uint8_t> bytes(words.size() * 4);
  if (!bytes.empty()) std::memcpy(bytes.data(), words.data(), bytes.size());
  write_file_bytes(file, bytes);
}

std::vector<int32_t> read_head_words(const fs::path& file) {
  const auto bytes = read_file_bytes(file);
  if (bytes.size() % 4 != 0) {
    throw TensorIoError(file.string() + ": size " + std::to_string(bytes.size()) +
                        " is not a multiple of 4");
  }
  std::vector<int32_t> words(bytes.size() / 4);
  if (!bytes.empty()) std::memcpy(words.data(), bytes.data(), bytes.size());
  return words;
}

std::vector<int32_t> head_to_serial(const FxTensor& head) {
  const Shape s = head.values.shape();
  std::vector<int32_t> words;
  words.reserve(s.numel());
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < s.c; ++c) words.push_back(static_cast<int32_t>(head.values.at(c, y, x)));
    }
  }
  return words;
}

FxTensor serial_to_head(std::span<const int32_t> words, Shape shape) {
  if (words.size() != shape.numel()) {
    throw TensorIoError("head holds " + std::to_string(words.size()) + " words, expected " +
                        std::to_string(shape.numel()));
  }
  FxTensor head{Tensor<int64_t>(shape), kHeadOut};
  size_t k = 0;
  for (int y = 0; y < shape.h; ++y) {
    for (int x = 0; x < shape.w; ++x) {
      for (int c = 0; c < shape.c; ++c) head.values.at(c, y, x) = words[k++];
    }
  }
  return head;
}

std::vector<uint8_t> read_file_bytes(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw TensorIoError("cannot open " + file.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const fs::path& file, std::span<const uint8_t> bytes) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw TensorIoError("cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw TensorIoError("write failed: " + file.string());
}

void write_text_file(const fs::path& file, const std::string& text) {
  write_file_bytes(file, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

}  // namespace w1a8
