#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "w1a8/deploy.hpp"
#include "w1a8/fixedpoint.hpp"
#include "w1a8/quant.hpp"

namespace w1a8 {

struct RomImage {
  int word_width = 16;
  int radix = 16;  // 2 or 16
  std::vector<uint64_t> words;

  size_t depth() const { return words.size(); }
  friend bool operator==(const RomImage&, const RomImage&) = default;
};

// ROM address order: [out_channel][in_channel][ky][kx]. 1-bit entries are
// packed LSB-first within a word; wider entries occupy words_per_entry()
// consecutive words, least significant word first.
struct AddressMap {
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 1;
  int entry_bits = 1;
  int word_width = 16;

  size_t entry_index(int o, int i, int ky, int kx) const {
    return ((static_cast<size_t>(o) * in_channels + i) * kernel + ky) * kernel + kx;
  }
  int words_per_entry() const { return (entry_bits + word_width - 1) / word_width; }

  // Bit position of the entry's least significant bit across the whole image.
  uint64_t bit_offset(int o, int i, int ky, int kx) const;
  size_t entries() const { return static_cast<size_t>(out_channels) * in_channels * kernel * kernel; }
  size_t depth() const;
};

RomImage pack_signs(const BinaryWeight& signs, int word_width);
BinaryWeight unpack_signs(const RomImage& img, int out_channels, int in_channels, int kernel);

// Two's complement entries of fmt.width() bits, sign-extended (or zero-extended
// for unsigned formats) to whole words.
RomImage pack_fixed(std::span<const int64_t> raws, const QFormat& fmt, int word_width);
std::vector<int64_t> unpack_fixed(const RomImage& img, size_t count, const QFormat& fmt);

// Weight ROM of a deployed layer. Throws std::invalid_argument for word
// widths outside {8, 16, 32}.
RomImage pack_weights(const DeployedLayer& layer, int word_width);

struct NamedRom {
  std::string name;  // "<layer>_w", "<layer>_b", "<layer>_mul", "<layer>_div"
  RomImage image;
  int entry_bits = 0;
  size_t entries = 0;
};

std::vector<NamedRom> build_rom_set(const DeployedModel& model, int word_width, int radix);

// Vivado coefficient file: radix line, vector header, comma separated words,
// ';' terminator. Hex words are lowercase and zero-padded to ceil(width/4).
std::string emit_coe(const RomImage& img);

class CoeParseError : public std::runtime_error {
 public:
  CoeParseError(int line, int column, const std::string& what);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

RomImage parse_coe(std::string_view text, int word_width);

// Read-schedule contract of a pipelined ROM without output register: a word
// addressed at cycle t is usable at t + read_latency, one word per cycle.
struct RomSchedule {
  int read_latency = 1;

  uint64_t usable_at(uint64_t address_cycle) const { return address_cycle + read_latency; }
  // Usable cycle of the n-th word (0-based) of a back-to-back burst.
  uint64_t burst_usable_at(uint64_t start, uint64_t n) const { return start + n + read_latency; }
};

// Throws std::invalid_argument if read_latency < 1.
RomSchedule rom_latency_model(int read_latency);

}  // namespace w1a8
