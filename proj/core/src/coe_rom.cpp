#include "w1a8/coe_rom.hpp"

#include <cctype>
#include <sstream>

namespace w1a8 {

namespace {

void check_word_width(int word_width) {
  if (word_width != 8 && word_width != 16 && word_width != 32) {
    throw std::invalid_argument("word width must be 8, 16 or 32, got " +
                                std::to_string(word_width));
  }
}

uint64_t word_mask(int width) {
  return width >= 64 ? ~uint64_t{0} : (uint64_t{1} << width) - 1;
}

}  // namespace

uint64_t AddressMap::bit_offset(int o, int i, int ky, int kx) const {
  const uint64_t e = entry_index(o, i, ky, kx);
  if (entry_bits == 1) return e;
  return e * static_cast<uint64_t>(words_per_entry()) * word_width;
}

size_t AddressMap::depth() const {
  if (entry_bits == 1) return (entries() + word_width - 1) / word_width;
  return entries() * words_per_entry();
}

RomImage pack_signs(const BinaryWeight& signs, int word_width) {
  check_word_width(word_width);
  RomImage img;
  img.word_width = word_width;
  img.words.assign((signs.size() + word_width - 1) / word_width, 0);
  for (size_t i = 0; i < signs.size(); ++i) {
    if (signs.bits[i]) img.words[i / word_width] |= uint64_t{1} << (i % word_width);
  }
  return img;
}

BinaryWeight unpack_signs(const RomImage& img, int out_channels, int in_channels, int kernel) {
  BinaryWeight b(out_channels, in_channels, kernel);
  const size_t need = (b.size() + img.word_width - 1) / img.word_width;
  if (img.depth() != need) {
    throw std::invalid_argument("unpack_signs: ROM depth " + std::to_string(img.depth()) +
                                " does not hold " + std::to_string(b.size()) + " bits");
  }
  for (size_t i = 0; i < b.size(); ++i) {
    b.bits[i] = (img.words[i / img.word_width] >> (i % img.word_width)) & 1u;
  }
  return b;
}

RomImage pack_fixed(std::span<const int64_t> raws, const QFormat& fmt, int word_width) {
  check_word_width(word_width);
  const int width = fmt.width();
  const int wpe = (width + word_width - 1) / word_width;
  const uint64_t mask = word_mask(word_width);
  RomImage img;
  img.word_width = word_width;
  img.words.reserve(raws.size() * wpe);
  for (int64_t raw : raws) {
    if (!fmt.contains_raw(raw)) {
      throw std::invalid_argument("pack_fixed: raw value " + std::to_string(raw) +
                                  " outside " + fmt.to_string());
    }
    // Arithmetic shifts of the 64-bit value give the sign extension.
    for (int k = 0; k < wpe; ++k) {
      img.words.push_back(static_cast<uint64_t>(raw >> (k * word_width)) & mask);
    }
  }
  return img;
}

std::vector<int64_t> unpack_fixed(const RomImage& img, size_t count, const QFormat& fmt) {
  const int width = fmt.width();
  const int wpe = (width + img.word_width - 1) / img.word_width;
  if (img.depth() != count * wpe) {
    throw std::invalid_argument("unpack_fixed: ROM depth does not match entry count");
  }
  std::vector<int64_t> out;
  out.reserve(count);
  for (size_t e = 0; e < count; ++e) {
    uint64_t u = 0;
    for (int k = 0; k < wpe; ++k) u |= img.words[e * wpe + k] << (k * img.word_width);
    u &= word_mask(width);
    int64_t v = static_cast<int64_t>(u);
    if (fmt.is_signed && (u >> (width - 1)) & 1u) v -= int64_t{1} << width;
    out.push_back(v);
  }
  return out;
}

RomImage pack_weights(const DeployedLayer& layer, int word_width) {
  if (layer.spec.is_binary()) return pack_signs(layer.signs, word_width);
  return pack_fixed(layer.weights, *layer.spec.weight_fmt, word_width);
}

std::vector<NamedRom> build_rom_set(const DeployedModel& model, int word_width, int radix) {
  if (radix != 2 && radix != 16) throw std::invalid_argument("radix must be 2 or 16");
  std::vector<NamedRom> roms;
  auto add = [&](std::string name, RomImage img, int entry_bits, size_t entries) {
    img.radix = radix;
    roms.push_back(NamedRom{std::move(name), std::move(img), entry_bits, entries});
  };
  for (const auto& d : model.layers) {
    const LayerSpec& s = d.spec;
    if (s.is_binary()) {
      add(s.name + "_w", pack_signs(d.signs, word_width), 1, d.signs.size());
    } else {
      add(s.name + "_w", pack_fixed(d.weights, *s.weight_fmt, word_width),
          s.weight_fmt->width(), d.weights.size());
    }
    add(s.name + "_b", pack_fixed(d.bias, *s.bias_fmt, word_width), s.bias_fmt->width(),
        d.bias.size());
    if (s.uses_mul_prev()) {
      const auto raw = d.mul_raw();
      add(s.name + "_mul", pack_fixed(raw, d.mul_fmt, word_width), d.mul_fmt.width(), raw.size());
    }
    if (s.uses_div_current()) {
      const auto raw = d.div_raw();
      add(s.name + "_div", pack_fixed(raw, d.div_fmt, word_width), d.div_fmt.width(), raw.size());
    }
  }
  return roms;
}

std::string emit_coe(const RomImage& img) {
  std::ostringstream os;
  os << "memory_initialization_radix=" << img.radix << ";\n";
  os << "memory_initialization_vector=\n";
  const int digits = img.radix == 2 ? img.word_width : (img.word_width + 3) / 4;
  static constexpr char kHex[] = "0123456789abcdef";
  for (size_t i = 0; i < img.words.size(); ++i) {
    std::string w(static_cast<size_t>(digits), '0');
    uint64_t v = img.words[i];
    const int shift = img.radix == 2 ? 1 : 4;
    const uint64_t digit_mask = img.radix == 2 ? 1u : 15u;
    for (int d = digits - 1; d >= 0; --d) {
      w[static_cast<size_t>(d)] = kHex[v & digit_mask];
      v >>= shift;
    }
    os << w << (i + 1 == img.words.size() ? "" : ",\n");
  }
  os << ";\n";
  return os.str();
}

CoeParseError::CoeParseError(int line, int column, const std::string& what)
    : std::runtime_error("coe:" + std::to_string(line) + ":" + std::to_string(column) + ": " +
                         what),
      line_(line), column_(column) {}

namespace {

class CoeLexer {
 public:
  explicit CoeLexer(std::string_view text) : text_(text) {}

  int line() const { return line_; }
  int column() const { return col_; }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  // Skips whitespace and, when allowed, comment lines introduced by ';'.
  void skip_space(bool allow_comments) {
    while (!at_end()) {
      const char c = peek();
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (allow_comments && c == ';') {
        while (!at_end() && peek() != '\n') advance();
      } else {
        break;
      }
    }
  }

  std::string word() {
    std::string w;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) {
      w.push_back(peek());
      advance();
    }
    return w;
  }

  void expect(char c, const char* what) {
    if (peek() != c) throw CoeParseError(line_, col_, std::string("expected ") + what);
    advance();
  }

 private:
  std::string_view text_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

RomImage parse_coe(std::string_view text, int word_width) {
  if (word_width < 1 || word_width > 64) throw std::invalid_argument("bad word width");
  CoeLexer lx(text);
  RomImage img;
  img.word_width = word_width;
  bool have_radix = false;
  bool have_vector = false;

  while (true) {
    lx.skip_space(true);
    if (lx.at_end()) break;
    const int kl = lx.line();
    const int kc = lx.column();
    const std::string key = lower(lx.word());
    if (key.empty()) throw CoeParseError(kl, kc, "unexpected character");
    lx.skip_space(false);
    lx.expect('=', "'='");
    lx.skip_space(false);

    if (key == "memory_initialization_radix") {
      const int vl = lx.line();
      const int vc = lx.column();
      const std::string v = lx.word();
      if (v != "2" && v != "16") {
        throw CoeParseError(vl, vc, "unsupported radix '" + v + "' (expected 2 or 16)");
      }
      img.radix = std::stoi(v);
      have_radix = true;
      lx.skip_space(false);
      lx.expect(';', "';' after radix");
    } else if (key == "memory_initialization_vector") {
      if (!have_radix) throw CoeParseError(kl, kc, "vector before radix");
      const uint64_t limit_mask = word_width >= 64 ? ~uint64_t{0} : (uint64_t{1} << word_width) - 1;
      bool terminated = false;
      while (!lx.at_end()) {
        lx.skip_space(false);
        if (lx.peek() == ';') {
          lx.advance();
          terminated = true;
          break;
        }
        const int wl = lx.line();
        const int wc = lx.column();
        const std::string w = lx.word();
        if (w.empty()) throw CoeParseError(wl, wc, "expected a word");
        uint64_t value = 0;
        for (char ch : w) {
          const auto uch = static_cast<unsigned char>(ch);
          int digit = -1;
          if (std::isdigit(uch)) {
            digit = ch - '0';
          } else if (std::isalpha(uch)) {
            digit = std::tolower(uch) - 'a' + 10;
          }
          if (digit < 0 || digit >= img.radix) {
            throw CoeParseError(wl, wc, "invalid digit '" + std::string(1, ch) + "' for radix " +
                                            std::to_string(img.radix));
          }
          if (value > (limit_mask >> (img.radix == 2 ? 1 : 4))) {
            throw CoeParseError(wl, wc, "word '" + w + "' exceeds " + std::to_string(word_width) +
                                            " bits");
          }
          value = value * static_cast<uint64_t>(img.radix) + static_cast<uint64_t>(digit);
        }
        if (value > limit_mask) {
          throw CoeParseError(wl, wc, "word '" + w + "' exceeds " + std::to_string(word_width) +
                                          " bits");
        }
        img.words.push_back(value);
        lx.skip_space(false);
        if (lx.peek() == ',') {
          lx.advance();
        } else if (lx.peek() != ';') {
          throw CoeParseError(lx.line(), lx.column(), "expected ',' or ';'");
        }
      }
      if (!terminated) throw CoeParseError(lx.line(), lx.column(), "missing ';' terminator");
      have_vector = true;
    } else {
      throw CoeParseError(kl, kc, "unknown key '" + key + "'");
    }
  }
  if (!have_radix) throw CoeParseError(lx.line(), lx.column(), "missing memory_initialization_radix");
  if (!have_vector) {
    throw CoeParseError(lx.line(), lx.column(), "missing memory_initialization_vector");
  }
  return img;
}

RomSchedule rom_latency_model(int read_latency) {
  if (read_latency < 1) throw std::invalid_argument("ROM read latency must be >= 1");
  return RomSchedule{read_latency};
}

}  // namespace w1a8
