#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "fgp/errors.hpp"

namespace fgp::fxp {

enum class Rounding { Truncate, RoundNearestEven };
enum class Overflow { Saturate, Wrap };

// Two's-complement fixed-point format. int_bits includes the sign bit,
// so Q8.24 spans [-128, 128) with 24 fractional bits in a 32-bit word.
struct FxFormat {
  int int_bits = 8;
  int frac_bits = 24;
  Rounding rounding = Rounding::RoundNearestEven;
  Overflow overflow = Overflow::Saturate;

  int total_bits() const { return int_bits + frac_bits; }
  std::int64_t raw_max() const {
    return (std::int64_t{1} << (total_bits() - 1)) - 1;
  }
  std::int64_t raw_min() const {
    return -(std::int64_t{1} << (total_bits() - 1));
  }
  double resolution() const { return 1.0 / double(std::int64_t{1} << frac_bits); }

  bool operator==(const FxFormat&) const = default;
};

// Parses "Q8.24" style names; rounding/overflow keep their defaults.
FxFormat parse_format(const std::string& name);
std::string format_name(const FxFormat& fmt);

// Sticky overflow flag, set whenever a result had to be saturated or
// wrapped. Thread-local so concurrent simulators do not interfere.
bool overflow_flag();
void clear_overflow_flag();

struct FixedComplex {
  std::int32_t re = 0;  // raw value, scaled by 2^frac_bits
  std::int32_t im = 0;
  FxFormat fmt;

  bool operator==(const FixedComplex& o) const {
    return re == o.re && im == o.im && fmt == o.fmt;
  }
};

std::int32_t quantize_real(double v, const FxFormat& fmt);
double real_value(std::int32_t raw, const FxFormat& fmt);
FixedComplex quantize(std::complex<double> v, const FxFormat& fmt);
std::complex<double> to_complex(const FixedComplex& v);

FixedComplex fx_zero(const FxFormat& fmt);
FixedComplex fx_neg(FixedComplex a);
FixedComplex fx_conj(FixedComplex a);
FixedComplex fx_add(FixedComplex a, FixedComplex b, bool subtract = false);

// acc +/- a*b with a single rounding applied after the full-precision
// complex product; the only multiply primitive of the datapath.
FixedComplex fx_mac(FixedComplex acc, FixedComplex a, FixedComplex b,
                    bool subtract = false);

inline constexpr int kDivCyclesPerRealDivision = 4;

struct DivResult {
  FixedComplex value;
  int cycles = 0;  // sequential divider occupancy for the whole quotient
};

// Complex quotient via (ac+bd)/(c^2+d^2) + i(bc-ad)/(c^2+d^2); the two
// real divisions are modeled as exact quotients truncated toward zero,
// which matches a radix-2 non-restoring divider at the same width.
DivResult fx_div_radix2(FixedComplex num, FixedComplex den);

// re^2 + im^2 as a real raw value; pivot comparisons use this.
std::int32_t fx_abs2(FixedComplex a);

// Dense row-major matrix of FixedComplex; the simulator's working type.
class FxMatrix {
 public:
  FxMatrix() = default;
  FxMatrix(int rows, int cols, const FxFormat& fmt);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const FxFormat& fmt() const { return fmt_; }

  FixedComplex& at(int r, int c) { return data_[size_t(r) * cols_ + c]; }
  const FixedComplex& at(int r, int c) const {
    return data_[size_t(r) * cols_ + c];
  }

  FxMatrix conj_transpose() const;
  FxMatrix negated() const;

  bool operator==(const FxMatrix& o) const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  FxFormat fmt_;
  std::vector<FixedComplex> data_;
};

FxMatrix quantize_matrix(const std::vector<std::complex<double>>& values,
                         int rows, int cols, const FxFormat& fmt);

}  // namespace fgp::fxp
