#include "fgp/fxp.hpp"

#include <cmath>
#include <cstdio>

namespace fgp::fxp {

namespace {

thread_local bool g_overflow = false;

using int128 = __int128;

// Requantize a value held at `shift` extra fractional bits down to the
// format's scale, applying the rounding mode, then the overflow policy.
std::int64_t shift_round(int128 v, int shift, Rounding mode) {
  if (shift == 0) return std::int64_t(v);
  int128 floor = v >> shift;
  if (mode == Rounding::RoundNearestEven) {
    int128 rem = v - (floor << shift);
    int128 half = int128{1} << (shift - 1);
    if (rem > half || (rem == half && (floor & 1))) floor += 1;
  }
  return std::int64_t(floor);
}

std::int32_t clamp_raw(std::int64_t raw, const FxFormat& fmt) {
  if (raw > fmt.raw_max() || raw < fmt.raw_min()) {
    g_overflow = true;
    if (fmt.overflow == Overflow::Saturate) {
      return std::int32_t(raw > 0 ? fmt.raw_max() : fmt.raw_min());
    }
    // Wrap: keep the low total_bits, sign-extended.
    const int tb = fmt.total_bits();
    std::uint64_t mask = (tb >= 64) ? ~0ull : ((1ull << tb) - 1);
    std::uint64_t low = std::uint64_t(raw) & mask;
    if (tb < 64 && (low & (1ull << (tb - 1)))) low |= ~mask;
    return std::int32_t(std::int64_t(low));
  }
  return std::int32_t(raw);
}

void check_same_format(const FxFormat& a, const FxFormat& b,
                       const char* where) {
  if (!(a == b)) {
    throw DimensionError(std::string(where) + ": operand formats differ");
  }
}

}  // namespace

FxFormat parse_format(const std::string& name) {
  int ib = 0, fb = 0;
  char q = 0;
  if (std::sscanf(name.c_str(), "%c%d.%d", &q, &ib, &fb) != 3 ||
      (q != 'Q' && q != 'q')) {
    throw Error(ErrorCode::Argument, "bad fixed-point format '" + name +
                                         "', expected Qi.f such as Q8.24");
  }
  if (ib < 1 || fb < 0 || ib + fb > 32) {
    throw Error(ErrorCode::Argument,
                "fixed-point format out of range: " + name);
  }
  FxFormat fmt;
  fmt.int_bits = ib;
  fmt.frac_bits = fb;
  return fmt;
}

std::string format_name(const FxFormat& fmt) {
  return "Q" + std::to_string(fmt.int_bits) + "." +
         std::to_string(fmt.frac_bits);
}

bool overflow_flag() { return g_overflow; }
void clear_overflow_flag() { g_overflow = false; }

std::int32_t quantize_real(double v, const FxFormat& fmt) {
  if (!std::isfinite(v)) {
    g_overflow = true;
    return std::int32_t(v > 0 ? fmt.raw_max() : fmt.raw_min());
  }
  double scaled = std::ldexp(v, fmt.frac_bits);
  double rounded = fmt.rounding == Rounding::RoundNearestEven
                       ? std::nearbyint(scaled)
                       : std::floor(scaled);
  if (rounded >= -9.0e18 && rounded <= 9.0e18) {
    return clamp_raw(std::int64_t(rounded), fmt);
  }
  g_overflow = true;
  return std::int32_t(rounded > 0 ? fmt.raw_max() : fmt.raw_min());
}

double real_value(std::int32_t raw, const FxFormat& fmt) {
  return std::ldexp(double(raw), -fmt.frac_bits);
}

FixedComplex quantize(std::complex<double> v, const FxFormat& fmt) {
  return {quantize_real(v.real(), fmt), quantize_real(v.imag(), fmt), fmt};
}

std::complex<double> to_complex(const FixedComplex& v) {
  return {real_value(v.re, v.fmt), real_value(v.im, v.fmt)};
}

FixedComplex fx_zero(const FxFormat& fmt) { return {0, 0, fmt}; }

FixedComplex fx_neg(FixedComplex a) {
  return {clamp_raw(-std::int64_t(a.re), a.fmt),
          clamp_raw(-std::int64_t(a.im), a.fmt), a.fmt};
}

FixedComplex fx_conj(FixedComplex a) {
  return {a.re, clamp_raw(-std::int64_t(a.im), a.fmt), a.fmt};
}

FixedComplex fx_add(FixedComplex a, FixedComplex b, bool subtract) {
  check_same_format(a.fmt, b.fmt, "fx_add");
  std::int64_t sign = subtract ? -1 : 1;
  return {clamp_raw(std::int64_t(a.re) + sign * b.re, a.fmt),
          clamp_raw(std::int64_t(a.im) + sign * b.im, a.fmt), a.fmt};
}

FixedComplex fx_mac(FixedComplex acc, FixedComplex a, FixedComplex b,
                    bool subtract) {
  check_same_format(acc.fmt, a.fmt, "fx_mac");
  check_same_format(a.fmt, b.fmt, "fx_mac");
  const FxFormat& fmt = acc.fmt;
  const int f = fmt.frac_bits;
  // Full-precision product at 2f fractional bits; the accumulator is
  // promoted to the same scale so only one rounding happens at the end.
  int128 pre = int128(std::int64_t(a.re) * b.re) - int128(std::int64_t(a.im) * b.im);
  int128 pim = int128(std::int64_t(a.re) * b.im) + int128(std::int64_t(a.im) * b.re);
  int128 sign = subtract ? -1 : 1;
  int128 re2f = (int128(acc.re) << f) + sign * pre;
  int128 im2f = (int128(acc.im) << f) + sign * pim;
  return {clamp_raw(shift_round(re2f, f, fmt.rounding), fmt),
          clamp_raw(shift_round(im2f, f, fmt.rounding), fmt), fmt};
}

DivResult fx_div_radix2(FixedComplex num, FixedComplex den) {
  check_same_format(num.fmt, den.fmt, "fx_div_radix2");
  const FxFormat& fmt = num.fmt;
  const int f = fmt.frac_bits;
  int128 d = int128(std::int64_t(den.re) * den.re) +
             int128(std::int64_t(den.im) * den.im);  // scale 2f
  if (d == 0) {
    throw DivideByZeroError("fx_div_radix2: zero denominator");
  }
  int128 nre = int128(std::int64_t(num.re) * den.re) +
               int128(std::int64_t(num.im) * den.im);
  int128 nim = int128(std::int64_t(num.im) * den.re) -
               int128(std::int64_t(num.re) * den.im);
  // (n/d) is scale-free, so the raw quotient is n*2^f/d, truncated
  // toward zero exactly as the sequential divider would.
  std::int64_t qre = std::int64_t((nre << f) / d);
  std::int64_t qim = std::int64_t((nim << f) / d);
  FixedComplex q{clamp_raw(qre, fmt), clamp_raw(qim, fmt), fmt};
  return {q, 2 * kDivCyclesPerRealDivision};
}

std::int32_t fx_abs2(FixedComplex a) {
  const FxFormat& fmt = a.fmt;
  int128 v = int128(std::int64_t(a.re) * a.re) +
             int128(std::int64_t(a.im) * a.im);
  return clamp_raw(shift_round(v, fmt.frac_bits, fmt.rounding), fmt);
}

FxMatrix::FxMatrix(int rows, int cols, const FxFormat& fmt)
    : rows_(rows), cols_(cols), fmt_(fmt),
      data_(size_t(rows) * size_t(cols), fx_zero(fmt)) {}

FxMatrix FxMatrix::conj_transpose() const {
  FxMatrix out(cols_, rows_, fmt_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) out.at(c, r) = fx_conj(at(r, c));
  return out;
}

FxMatrix FxMatrix::negated() const {
  FxMatrix out(rows_, cols_, fmt_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) out.at(r, c) = fx_neg(at(r, c));
  return out;
}

bool FxMatrix::operator==(const FxMatrix& o) const {
  if (rows_ != o.rows_ || cols_ != o.cols_ || !(fmt_ == o.fmt_)) return false;
  for (size_t i = 0; i < data_.size(); ++i) {
    if (!(data_[i] == o.data_[i])) return false;
  }
  return true;
}

FxMatrix quantize_matrix(const std::vector<std::complex<double>>& values,
                         int rows, int cols, const FxFormat& fmt) {
  if (values.size() != size_t(rows) * size_t(cols)) {
    throw DimensionError("quantize_matrix: element count mismatch");
  }
  FxMatrix out(rows, cols, fmt);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out.at(r, c) = quantize(values[size_t(r) * cols + c], fmt);
  return out;
}

}  // namespace fgp::fxp
