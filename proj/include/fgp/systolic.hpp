#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "fgp/fxp.hpp"

namespace fgp::systolic {

// Frozen cycle accounting. The per-primitive costs come from the
// datapath (4-cycle complex MAC, 4-cycle radix-2 real division); the
// closed forms below are the model's contract and are asserted by
// regression tests.
struct CycleModel {
  int mac_cycles = 4;
  int div_cycles = 4;
  int instr_overhead = 2;  // fetch + decode per instruction (machine level)

  // result r x c, inner dimension k; same form for multiply-shift
  std::uint64_t matmul_cycles(int r, int c, int k) const {
    return std::uint64_t(mac_cycles) * k + (r - 1) + (c - 1) +
           (std::max(r, c) - 1);
  }
  // pivot block q x q with m total appended columns; row swaps cost one
  // extra cycle each
  std::uint64_t faddeev_cycles(int q, int m, int swaps) const {
    return std::uint64_t(q) * (div_cycles + mac_cycles * (q + m)) +
           2 * std::uint64_t(q > 0 ? q - 1 : 0) + swaps;
  }
  // draining an r x c result block through the data port
  std::uint64_t store_cycles(int r, int c) const {
    return std::uint64_t(r) * c + (r - 1);
  }

  bool operator==(const CycleModel&) const = default;
};

enum class PEMode { Idle, Mult, Accum, Shift, Eliminate, SwapRows };
enum class BorderMode { Idle, Pivot, Divide };

const char* pe_mode_name(PEMode m);
const char* border_mode_name(BorderMode m);

struct PEMultState {
  fxp::FixedComplex state_reg;
  fxp::FixedComplex accumulator;
  fxp::FixedComplex in_north, in_west, out_south, out_east;
  PEMode mode = PEMode::Idle;
};

// Border column PE: pivot magnitude and division for the Faddeev pass;
// the mean column of augmented operands also rides through here.
struct PEBorderState {
  std::int32_t pivot_mag2 = 0;
  fxp::FixedComplex recip;
  fxp::FixedComplex mean_state;
  fxp::FixedComplex mean_acc;
  int divider_busy = 0;  // remaining cycles of the current real division
  BorderMode mode = BorderMode::Idle;
};

struct FeederEntry {
  std::uint64_t cycle;
  fxp::FixedComplex value;
};

struct ArrayState {
  std::vector<PEMultState> grid;      // size x size, row-major
  std::vector<PEBorderState> border;  // one per row
  std::uint64_t cycle = 0;
  std::deque<FeederEntry> feeder_north;
  std::deque<FeederEntry> feeder_west;
  std::deque<FeederEntry> drain;
};

struct Flags {
  bool herm = false;
  bool neg = false;
};

// Which side of the product the array-resident block sits on in a
// multiply-shift: Acc = init +/- S*other (Left) or init +/- other*S.
enum class ResidentSide { Left, Right };

struct StoreResult {
  fxp::FxMatrix cov;
  std::vector<fxp::FixedComplex> mean;
  std::uint64_t cycles = 0;
};

// Cycle-level model of the rectangular PEmult array with its border
// column. Macro-operations compute their results in the documented
// sequential operand order (bit-exact against a plain fixed-point
// evaluation of the same order) and play them out cycle by cycle
// through the wavefront schedule, so single stepping, tracing and
// one-shot execution always agree.
class SystolicArray {
 public:
  SystolicArray(int size, const fxp::FxFormat& fmt, CycleModel model = {});

  int size() const { return size_; }
  const fxp::FxFormat& fmt() const { return fmt_; }
  const CycleModel& cycle_model() const { return model_; }
  const ArrayState& state() const { return state_; }
  bool busy() const { return state_.cycle < schedule_end_; }

  void set_trace(std::ostream* os);

  // One cycle of lockstep advance; a no-op (except the counter) when idle.
  void step();
  // Steps until the in-flight macro-operation retires.
  std::uint64_t run_to_completion();

  // StateReg <- f(lhs) * f(rhs); optional mean column rides through the
  // border PEs: mean_state <- f(lhs) * rhs_mean.
  std::uint64_t matmul(const fxp::FxMatrix& lhs, Flags lhs_flags,
                       const fxp::FxMatrix& rhs, Flags rhs_flags,
                       const std::vector<fxp::FixedComplex>* rhs_mean);

  // Acc <- init +/- S*f(other) (or f(other)*S), using the resident
  // StateReg block; mean path: mean_acc <- init_mean + mean_state, with
  // negate_init_mean flipping the streamed mean's sign.
  std::uint64_t matmul_shift(const fxp::FxMatrix& init,
                             const std::vector<fxp::FixedComplex>* init_mean,
                             bool negate_init_mean, const fxp::FxMatrix& other,
                             Flags other_flags, ResidentSide side,
                             bool negate_product);

  // Schur complement of the resident blocks: a = Acc (q x q), c = S^H
  // via the Transpose unit, b = [S | mean_acc]; d streams in. Partial
  // pivoting by fx_abs2 with row swaps handled by the PEmult grid; the
  // border divider produces the elimination multipliers. The result
  // block (d's shape) replaces Acc / mean_acc.
  std::uint64_t faddeev(const fxp::FxMatrix& d,
                        const std::vector<fxp::FixedComplex>* d_mean,
                        bool negate_d);

  // Drains the resident result (Acc or StateReg) through the data port.
  StoreResult store(bool from_state_reg, bool with_mean);

  // Resident blocks, for inspection; valid when the array is idle.
  fxp::FxMatrix state_block() const;
  fxp::FxMatrix acc_block() const;
  std::vector<fxp::FixedComplex> state_mean() const;
  std::vector<fxp::FixedComplex> acc_mean() const;
  bool state_has_mean() const { return state_mean_valid_; }
  bool acc_has_mean() const { return acc_mean_valid_; }

 private:
  struct TraceEvent {
    std::uint64_t cycle;
    int row, col;  // col == size_ addresses the border PE
    PEMode mode;
    BorderMode bmode;
  };
  struct Commit {
    std::uint64_t cycle;
    int row, col;
    bool to_state;  // state_reg vs accumulator (grid), mean regs (border)
    fxp::FixedComplex value;
  };

  void require_idle(const char* op) const;
  void check_dims(int rows, int cols, const char* op) const;
  void begin_schedule();
  void finish_launch(std::uint64_t cycles);
  void push_mac_window(std::uint64_t base, int row, int col, PEMode mode);
  void emit_trace(const TraceEvent& ev) const;

  int size_;
  fxp::FxFormat fmt_;
  CycleModel model_;
  ArrayState state_;
  std::ostream* trace_ = nullptr;
  bool trace_header_done_ = false;

  std::uint64_t schedule_start_ = 0;
  std::uint64_t schedule_end_ = 0;
  std::vector<TraceEvent> events_;
  std::vector<Commit> commits_;
  std::size_t next_event_ = 0;
  std::size_t next_commit_ = 0;

  int state_rows_ = 0, state_cols_ = 0;
  int acc_rows_ = 0, acc_cols_ = 0;
  bool state_mean_valid_ = false;
  bool acc_mean_valid_ = false;
};

}  // namespace fgp::systolic
