#include "w1a8/fixedpoint.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace w1a8 {

namespace {

__extension__ typedef __int128 i128;

constexpr int kCarrierBits = 48;
constexpr int kMaxProductFrac = 40;

double round_double(double s, Rounding mode) {
  switch (mode) {
    case Rounding::kNearestAway:
      return std::round(s);
    case Rounding::kNearestEven: {
      const double f = std::floor(s);
      const double d = s - f;
      if (d > 0.5) return f + 1.0;
      if (d < 0.5) return f;
      return std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
    }
    case Rounding::kFloor:
      return std::floor(s);
  }
  return s;
}

int parse_int(std::string_view s, std::string_view whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("malformed Q format '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

double QFormat::max_value() const { return std::ldexp(static_cast<double>(max_raw()), -frac_bits); }
double QFormat::min_value() const { return std::ldexp(static_cast<double>(min_raw()), -frac_bits); }

std::string QFormat::to_string() const {
  return std::string(is_signed ? "Q" : "UQ") + std::to_string(int_bits) + "." +
         std::to_string(frac_bits);
}

QFormat QFormat::parse(std::string_view text) {
  std::string_view rest = text;
  bool is_signed = true;
  if (rest.starts_with("UQ") || rest.starts_with("uq")) {
    is_signed = false;
    rest.remove_prefix(2);
  } else if (rest.starts_with("Q") || rest.starts_with("q")) {
    rest.remove_prefix(1);
  } else {
    throw std::invalid_argument("unknown Q format '" + std::string(text) + "'");
  }
  const auto dot = rest.find('.');
  if (dot == std::string_view::npos) {
    throw std::invalid_argument("malformed Q format '" + std::string(text) + "'");
  }
  QFormat fmt{is_signed, parse_int(rest.substr(0, dot), text), parse_int(rest.substr(dot + 1), text)};
  if (!fmt.valid()) {
    throw std::invalid_argument("Q format out of bounds '" + std::string(text) + "'");
  }
  return fmt;
}

int64_t saturate_raw(int64_t raw, const QFormat& fmt) {
  return std::clamp(raw, fmt.min_raw(), fmt.max_raw());
}

int64_t round_shift_right(int64_t raw, int shift, Rounding mode) {
  if (shift < 0 || shift > 62) throw std::invalid_argument("round_shift_right: bad shift");
  if (shift == 0) return raw;
  const int64_t one = int64_t{1} << shift;
  const int64_t half = one >> 1;
  switch (mode) {
    case Rounding::kNearestAway: {
      // Sign-magnitude rounding keeps the operation odd-symmetric.
      const int64_t mag = raw < 0 ? -raw : raw;
      const int64_t q = (mag + half) >> shift;
      return raw < 0 ? -q : q;
    }
    case Rounding::kNearestEven: {
      const int64_t floor_q = raw >> shift;  // arithmetic shift is floor
      const int64_t rem = raw - (floor_q << shift);
      if (rem > half) return floor_q + 1;
      if (rem < half) return floor_q;
      return (floor_q & 1) ? floor_q + 1 : floor_q;
    }
    case Rounding::kFloor:
      return raw >> shift;
  }
  return raw;
}

FxValue to_fixed(double x, const QFormat& fmt, Rounding mode) {
  if (!fmt.valid()) throw std::invalid_argument("to_fixed: invalid format " + fmt.to_string());
  if (std::isnan(x)) throw std::invalid_argument("to_fixed: NaN input");
  const double scaled = round_double(std::ldexp(x, fmt.frac_bits), mode);
  const double hi = static_cast<double>(fmt.max_raw());
  const double lo = static_cast<double>(fmt.min_raw());
  int64_t raw;
  if (scaled >= hi) {
    raw = fmt.max_raw();
  } else if (scaled <= lo) {
    raw = fmt.min_raw();
  } else {
    raw = static_cast<int64_t>(scaled);
  }
  return FxValue{raw, fmt};
}

double from_fixed(const FxValue& v) { return std::ldexp(static_cast<double>(v.raw), -v.fmt.frac_bits); }

FxValue fx_mul(const FxValue& a, const FxValue& b) {
  const int frac = a.fmt.frac_bits + b.fmt.frac_bits;
  if (frac > kMaxProductFrac) {
    throw std::invalid_argument("fx_mul: combined fraction bits " + std::to_string(frac) +
                                " exceed 40");
  }
  const i128 p = static_cast<i128>(a.raw) * static_cast<i128>(b.raw);
  const i128 limit = static_cast<i128>(1) << (kCarrierBits - 1);
  if (p >= limit || p < -limit) {
    throw std::overflow_error("fx_mul: product leaves the 48-bit carrier");
  }
  QFormat fmt;
  fmt.is_signed = a.fmt.is_signed || b.fmt.is_signed;
  fmt.frac_bits = frac;
  const int natural_int =
      a.fmt.int_bits + b.fmt.int_bits + (a.fmt.is_signed && b.fmt.is_signed ? 1 : 0);
  fmt.int_bits = std::min(natural_int, kCarrierBits - (fmt.is_signed ? 1 : 0) - frac);
  return FxValue{static_cast<int64_t>(p), fmt};
}

FxValue fx_rescale(const FxValue& v, int target_frac, const QFormat& saturate_to, Rounding mode) {
  if (target_frac > v.fmt.frac_bits || target_frac < 0) {
    throw std::invalid_argument("fx_rescale: target fraction must not exceed source fraction");
  }
  if (saturate_to.frac_bits != target_frac || !saturate_to.valid()) {
    throw std::invalid_argument("fx_rescale: saturation format must carry the target fraction");
  }
  const int64_t shifted = round_shift_right(v.raw, v.fmt.frac_bits - target_frac, mode);
  return FxValue{saturate_raw(shifted, saturate_to), saturate_to};
}

uint8_t requantize_u8(const FxValue& acc, const FxValue& div) {
  const int frac = acc.fmt.frac_bits + div.fmt.frac_bits;
  if (frac > kMaxRequantFrac) {
    throw std::invalid_argument("requantize_u8: combined fraction bits " + std::to_string(frac) +
                                " exceed " + std::to_string(kMaxRequantFrac));
  }
  if (div.raw <= 0) return 0;
  // |acc| >= limit already rounds past 255 (or below 0); limit * div < 2^(frac+8) + div.
  const i128 full = static_cast<i128>(1) << (frac + 8);
  const auto limit = static_cast<int64_t>((full + div.raw - 1) / div.raw);
  const FxValue clamped{std::clamp(acc.raw, -limit, limit), acc.fmt};
  return static_cast<uint8_t>(fx_rescale(fx_mul(clamped, div), 0, kU8).raw);
}

}  // namespace w1a8
