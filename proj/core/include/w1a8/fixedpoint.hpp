#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace w1a8 {

// Qm.n: m integer bits, n fraction bits, sign bit extra for signed formats.
// Q5.11 is therefore a 17-bit signed quantity; UQ0.16 a 16-bit unsigned one.
struct QFormat {
  bool is_signed = true;
  int int_bits = 0;
  int frac_bits = 0;

  static constexpr int kMaxWidth = 48;

  constexpr int width() const { return int_bits + frac_bits + (is_signed ? 1 : 0); }
  constexpr bool valid() const {
    return int_bits >= 0 && frac_bits >= 0 && width() >= 1 && width() <= kMaxWidth;
  }
  constexpr int64_t max_raw() const { return (int64_t{1} << (int_bits + frac_bits)) - 1; }
  constexpr int64_t min_raw() const {
    return is_signed ? -(int64_t{1} << (int_bits + frac_bits)) : 0;
  }
  constexpr bool contains_raw(int64_t raw) const { return raw >= min_raw() && raw <= max_raw(); }

  double max_value() const;
  double min_value() const;

  // "Q5.11" (signed) or "UQ0.16" (unsigned).
  std::string to_string() const;
  static QFormat parse(std::string_view text);  // throws std::invalid_argument

  friend constexpr bool operator==(const QFormat&, const QFormat&) = default;
};

constexpr QFormat signed_q(int m, int n) { return QFormat{true, m, n}; }
constexpr QFormat unsigned_q(int m, int n) { return QFormat{false, m, n}; }

// Formats named by the deployment tables.
inline constexpr QFormat kQ0_8U = unsigned_q(0, 8);    // input pixels, p / 256
inline constexpr QFormat kQ5_11 = signed_q(5, 11);     // Conv1 weights
inline constexpr QFormat kQ2_14 = signed_q(2, 14);     // Conv1 bias, Mul_prev default
inline constexpr QFormat kQ1_15 = signed_q(1, 15);     // Conv11 weights
inline constexpr QFormat kQ4_12 = signed_q(4, 12);     // Conv11 bias
inline constexpr QFormat kQ0_16U = unsigned_q(0, 16);  // Div_current default
inline constexpr QFormat kHeadOut = signed_q(16, 15);  // signed int32, 15 fraction bits
inline constexpr QFormat kU8 = unsigned_q(8, 0);       // 8-bit activation grid

enum class Rounding {
  kNearestAway,  // round half away from zero (default everywhere)
  kNearestEven,
  kFloor,
};

struct FxValue {
  int64_t raw = 0;
  QFormat fmt{};

  friend constexpr bool operator==(const FxValue&, const FxValue&) = default;
};

int64_t saturate_raw(int64_t raw, const QFormat& fmt);

// Divides raw by 2^shift with the given rounding. shift >= 0.
int64_t round_shift_right(int64_t raw, int shift, Rounding mode = Rounding::kNearestAway);

FxValue to_fixed(double x, const QFormat& fmt, Rounding mode = Rounding::kNearestAway);
double from_fixed(const FxValue& v);

// Exact product. Throws std::overflow_error if the product leaves the 48-bit
// working carrier, std::invalid_argument if combined fraction bits exceed 40.
FxValue fx_mul(const FxValue& a, const FxValue& b);

FxValue fx_rescale(const FxValue& v, int target_frac, const QFormat& saturate_to,
                   Rounding mode = Rounding::kNearestAway);

// acc * div, rounded to an integer and clipped to [0, 255]. An accumulator
// beyond the clip point is clamped before the multiply, which cannot change
// the result and keeps the product inside the carrier. Throws
// std::invalid_argument if the combined fraction exceeds kMaxRequantFrac.
uint8_t requantize_u8(const FxValue& acc, const FxValue& div);

inline constexpr int kMaxRequantFrac = 38;

}  // namespace w1a8
