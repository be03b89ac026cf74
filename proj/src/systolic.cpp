#include "fgp/systolic.hpp"

#include <algorithm>
#include <cstdio>

namespace fgp::systolic {

using fxp::FixedComplex;
using fxp::FxMatrix;

namespace {

FxMatrix apply_flags(const FxMatrix& m, Flags f) {
  FxMatrix out = f.herm ? m.conj_transpose() : m;
  if (f.neg) out = out.negated();
  return out;
}

}  // namespace

const char* pe_mode_name(PEMode m) {
  switch (m) {
    case PEMode::Idle: return "idle";
    case PEMode::Mult: return "mult";
    case PEMode::Accum: return "accum";
    case PEMode::Shift: return "shift";
    case PEMode::Eliminate: return "eliminate";
    case PEMode::SwapRows: return "swaprows";
  }
  return "?";
}

const char* border_mode_name(BorderMode m) {
  switch (m) {
    case BorderMode::Idle: return "idle";
    case BorderMode::Pivot: return "pivot";
    case BorderMode::Divide: return "divide";
  }
  return "?";
}

SystolicArray::SystolicArray(int size, const fxp::FxFormat& fmt,
                             CycleModel model)
    : size_(size), fmt_(fmt), model_(model) {
  if (size < 1 || size > 8) {
    throw SizeError("array size must be in 1..8");
  }
  state_.grid.assign(size_t(size) * size, PEMultState{});
  state_.border.assign(size, PEBorderState{});
  for (auto& pe : state_.grid) {
    pe.state_reg = fxp::fx_zero(fmt);
    pe.accumulator = fxp::fx_zero(fmt);
    pe.in_north = pe.in_west = pe.out_south = pe.out_east = fxp::fx_zero(fmt);
  }
  for (auto& pe : state_.border) {
    pe.recip = pe.mean_state = pe.mean_acc = fxp::fx_zero(fmt);
  }
}

void SystolicArray::set_trace(std::ostream* os) { trace_ = os; }

void SystolicArray::require_idle(const char* op) const {
  if (busy()) {
    throw BusyError(std::string(op) + ": macro-operation already in flight");
  }
}

void SystolicArray::check_dims(int rows, int cols, const char* op) const {
  if (rows < 1 || cols < 1 || rows > size_ || cols > size_) {
    throw SizeError(std::string(op) + ": operand exceeds the " +
                    std::to_string(size_) + "x" + std::to_string(size_) +
                    " array");
  }
}

void SystolicArray::begin_schedule() {
  events_.clear();
  commits_.clear();
  next_event_ = 0;
  next_commit_ = 0;
  schedule_start_ = state_.cycle;
  state_.feeder_north.clear();
  state_.feeder_west.clear();
}

void SystolicArray::finish_launch(std::uint64_t cycles) {
  schedule_end_ = schedule_start_ + cycles;
  // register updates land no later than the retiring cycle
  for (auto& c : commits_) c.cycle = std::min(c.cycle, schedule_end_ - 1);
  auto by_cycle = [](const auto& a, const auto& b) { return a.cycle < b.cycle; };
  std::stable_sort(events_.begin(), events_.end(), by_cycle);
  std::stable_sort(commits_.begin(), commits_.end(), by_cycle);
  std::stable_sort(state_.feeder_west.begin(), state_.feeder_west.end(),
                   by_cycle);
  std::stable_sort(state_.feeder_north.begin(), state_.feeder_north.end(),
                   by_cycle);
}

void SystolicArray::push_mac_window(std::uint64_t base, int row, int col,
                                    PEMode mode) {
  for (int t = 0; t < model_.mac_cycles; ++t) {
    events_.push_back({base + t, row, col, mode, BorderMode::Idle});
  }
}

void SystolicArray::emit_trace(const TraceEvent& ev) const {
  if (!trace_) return;
  char buf[96];
  FixedComplex acc;
  const char* mode;
  if (ev.col == size_) {
    acc = state_.border[ev.row].mean_acc;
    mode = border_mode_name(ev.bmode);
  } else {
    acc = state_.grid[size_t(ev.row) * size_ + ev.col].accumulator;
    mode = pe_mode_name(ev.mode);
  }
  std::snprintf(buf, sizeof(buf), "cycle=%llu pe=%d,%d mode=%s acc=%08x%08x\n",
                (unsigned long long)ev.cycle, ev.row, ev.col, mode,
                std::uint32_t(acc.re), std::uint32_t(acc.im));
  *trace_ << buf;
}

void SystolicArray::step() {
  const std::uint64_t now = state_.cycle;
  if (busy()) {
    // retire commits scheduled for this cycle, then report activity
    while (next_commit_ < commits_.size() && commits_[next_commit_].cycle <= now) {
      const Commit& c = commits_[next_commit_++];
      if (c.col == size_) {
        if (c.to_state) {
          state_.border[c.row].mean_state = c.value;
        } else {
          state_.border[c.row].mean_acc = c.value;
        }
      } else {
        auto& pe = state_.grid[size_t(c.row) * size_ + c.col];
        (c.to_state ? pe.state_reg : pe.accumulator) = c.value;
      }
    }
    for (auto& pe : state_.grid) pe.mode = PEMode::Idle;
    for (auto& pe : state_.border) {
      pe.mode = BorderMode::Idle;
      if (pe.divider_busy > 0) --pe.divider_busy;
    }
    while (next_event_ < events_.size() && events_[next_event_].cycle == now) {
      const TraceEvent& ev = events_[next_event_++];
      if (ev.col == size_) {
        auto& pe = state_.border[ev.row];
        pe.mode = ev.bmode;
        if (ev.bmode == BorderMode::Divide && pe.divider_busy == 0) {
          pe.divider_busy = model_.div_cycles;
        }
      } else {
        state_.grid[size_t(ev.row) * size_ + ev.col].mode = ev.mode;
      }
      emit_trace(ev);
    }
    while (!state_.feeder_west.empty() &&
           state_.feeder_west.front().cycle <= now) {
      state_.feeder_west.pop_front();
    }
    while (!state_.feeder_north.empty() &&
           state_.feeder_north.front().cycle <= now) {
      state_.feeder_north.pop_front();
    }
    while (!state_.drain.empty() && state_.drain.front().cycle <= now) {
      state_.drain.pop_front();
    }
  }
  ++state_.cycle;
}

std::uint64_t SystolicArray::run_to_completion() {
  std::uint64_t steps = 0;
  while (busy()) {
    step();
    ++steps;
  }
  return steps;
}

std::uint64_t SystolicArray::matmul(const FxMatrix& lhs, Flags lhs_flags,
                                    const FxMatrix& rhs, Flags rhs_flags,
                                    const std::vector<FixedComplex>* rhs_mean) {
  require_idle("matmul");
  FxMatrix l = apply_flags(lhs, lhs_flags);
  FxMatrix r = apply_flags(rhs, rhs_flags);
  if (l.cols() != r.rows()) {
    throw DimensionError("matmul: inner dimensions do not conform");
  }
  if (rhs_mean && int(rhs_mean->size()) != r.rows()) {
    throw DimensionError("matmul: mean column does not conform");
  }
  const int rows = l.rows(), cols = r.cols(), k = l.cols();
  check_dims(rows, cols, "matmul");
  check_dims(k, k, "matmul");

  begin_schedule();
  if (trace_ && !trace_header_done_) {
    *trace_ << "# cyclemodel mac=" << model_.mac_cycles
            << " div=" << model_.div_cycles
            << " overhead=" << model_.instr_overhead << "\n";
    trace_header_done_ = true;
  }

  // PE(i,j) consumes operand pair w at cycle (i+j) + mac*w; one MAC per
  // window, one rounding per MAC. Sequential order: w ascending.
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      FixedComplex acc = fxp::fx_zero(fmt_);
      for (int w = 0; w < k; ++w) {
        acc = fxp::fx_mac(acc, l.at(i, w), r.at(w, j));
        std::uint64_t base = schedule_start_ + i + j +
                             std::uint64_t(model_.mac_cycles) * w;
        push_mac_window(base, i, j, PEMode::Mult);
        commits_.push_back({base + model_.mac_cycles - 1, i, j, false, acc});
      }
      // transfer to StateReg once the column's wavefront settles
      commits_.push_back(
          {schedule_start_ + i + j + std::uint64_t(model_.mac_cycles) * k, i,
           j, true, acc});
    }
  }
  if (rhs_mean) {
    for (int i = 0; i < rows; ++i) {
      FixedComplex acc = fxp::fx_zero(fmt_);
      for (int w = 0; w < k; ++w) {
        acc = fxp::fx_mac(acc, l.at(i, w), (*rhs_mean)[w]);
        std::uint64_t base = schedule_start_ + i + cols +
                             std::uint64_t(model_.mac_cycles) * w;
        events_.push_back({base, i, size_, PEMode::Idle, BorderMode::Pivot});
      }
      commits_.push_back(
          {schedule_start_ + i + cols + std::uint64_t(model_.mac_cycles) * k,
           i, size_, true, acc});
    }
  }
  // skewed feeder queues: west carries the left operand rows, north the
  // right operand columns
  for (int i = 0; i < rows; ++i)
    for (int w = 0; w < k; ++w)
      state_.feeder_west.push_back(
          {schedule_start_ + i + std::uint64_t(model_.mac_cycles) * w,
           l.at(i, w)});
  for (int j = 0; j < cols; ++j)
    for (int w = 0; w < k; ++w)
      state_.feeder_north.push_back(
          {schedule_start_ + j + std::uint64_t(model_.mac_cycles) * w,
           r.at(w, j)});

  state_rows_ = rows;
  state_cols_ = cols;
  state_mean_valid_ = rhs_mean != nullptr;
  const std::uint64_t cycles = model_.matmul_cycles(rows, cols, k);
  finish_launch(cycles);
  return cycles;
}

std::uint64_t SystolicArray::matmul_shift(
    const FxMatrix& init, const std::vector<FixedComplex>* init_mean,
    bool negate_init_mean, const FxMatrix& other, Flags other_flags,
    ResidentSide side, bool negate_product) {
  require_idle("matmul_shift");
  if (state_rows_ == 0) {
    throw DimensionError("matmul_shift: no resident StateReg block");
  }
  FxMatrix o = apply_flags(other, other_flags);
  FxMatrix s = state_block();
  int rows, cols, k;
  if (side == ResidentSide::Left) {
    if (s.cols() != o.rows()) {
      throw DimensionError("matmul_shift: resident block does not conform");
    }
    rows = s.rows();
    cols = o.cols();
    k = s.cols();
  } else {
    if (o.cols() != s.rows()) {
      throw DimensionError("matmul_shift: resident block does not conform");
    }
    rows = o.rows();
    cols = s.cols();
    k = o.cols();
  }
  if (init.rows() != rows || init.cols() != cols) {
    throw DimensionError("matmul_shift: init block does not conform");
  }
  if (init_mean && (!state_mean_valid_ || int(init_mean->size()) != rows)) {
    throw DimensionError("matmul_shift: mean column does not conform");
  }
  check_dims(rows, cols, "matmul_shift");

  begin_schedule();
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      FixedComplex acc = init.at(i, j);
      commits_.push_back({schedule_start_ + i + j, i, j, false, acc});
      for (int w = 0; w < k; ++w) {
        acc = side == ResidentSide::Left
                  ? fxp::fx_mac(acc, s.at(i, w), o.at(w, j), negate_product)
                  : fxp::fx_mac(acc, o.at(i, w), s.at(w, j), negate_product);
        std::uint64_t base = schedule_start_ + i + j +
                             std::uint64_t(model_.mac_cycles) * w;
        push_mac_window(base, i, j, PEMode::Shift);
        commits_.push_back({base + model_.mac_cycles - 1, i, j, false, acc});
      }
      state_.feeder_west.push_back({schedule_start_ + i + j, init.at(i, j)});
    }
  }
  if (init_mean) {
    // mean path uses the spare adder slots: a single add per row
    for (int i = 0; i < rows; ++i) {
      FixedComplex m =
          negate_init_mean
              ? fxp::fx_add(state_.border[i].mean_state, (*init_mean)[i], true)
              : fxp::fx_add((*init_mean)[i], state_.border[i].mean_state);
      events_.push_back({schedule_start_ + std::uint64_t(i) + cols, i, size_,
                         PEMode::Idle, BorderMode::Pivot});
      commits_.push_back(
          {schedule_start_ + std::uint64_t(i) + cols, i, size_, false, m});
    }
  }
  acc_rows_ = rows;
  acc_cols_ = cols;
  acc_mean_valid_ = init_mean != nullptr;
  const std::uint64_t cycles = model_.matmul_cycles(rows, cols, k);
  finish_launch(cycles);
  return cycles;
}

std::uint64_t SystolicArray::faddeev(const FxMatrix& d,
                                     const std::vector<FixedComplex>* d_mean,
                                     bool negate_d) {
  require_idle("faddeev");
  if (acc_rows_ == 0 || state_rows_ == 0) {
    throw DimensionError("faddeev: resident blocks missing");
  }
  const int q = acc_rows_;  // pivot block dimension
  if (acc_cols_ != q) {
    throw DimensionError("faddeev: pivot block must be square");
  }
  if (state_rows_ != q) {
    throw DimensionError("faddeev: StateReg block does not conform");
  }
  const int n = state_cols_;  // c-rows, also the result dimension
  if (d.rows() != n || d.cols() != n) {
    throw DimensionError("faddeev: d block does not conform");
  }
  const bool with_mean = d_mean != nullptr;
  if (with_mean && (!acc_mean_valid_ || int(d_mean->size()) != n)) {
    throw DimensionError("faddeev: mean column does not conform");
  }
  const int mcols = n + (with_mean ? 1 : 0);  // appended columns of b and d
  const int total_rows = q + n;
  const int total_cols = q + mcols;

  // assemble [a b; c d]: a = Acc, b = [S | mean_acc], c = S^H (via the
  // Transpose unit), d streamed from memory
  FxMatrix s = state_block();
  FxMatrix sh = s.conj_transpose();
  FxMatrix blk(total_rows, total_cols, fmt_);
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) {
      blk.at(i, j) = state_.grid[size_t(i) * size_ + j].accumulator;
    }
    for (int j = 0; j < n; ++j) blk.at(i, q + j) = s.at(i, j);
    if (with_mean) blk.at(i, q + n) = state_.border[i].mean_acc;
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < q; ++j) blk.at(q + i, j) = sh.at(i, j);
    for (int j = 0; j < n; ++j) {
      blk.at(q + i, q + j) =
          negate_d ? fxp::fx_neg(d.at(i, j)) : d.at(i, j);
    }
    if (with_mean) {
      blk.at(q + i, q + n) =
          negate_d ? fxp::fx_neg((*d_mean)[i]) : (*d_mean)[i];
    }
  }

  begin_schedule();
  int swaps = 0;
  std::uint64_t t = schedule_start_;
  for (int stepi = 0; stepi < q; ++stepi) {
    // pivot search by squared magnitude over the remaining a-rows
    int best = stepi;
    std::int32_t best_mag = fxp::fx_abs2(blk.at(stepi, stepi));
    for (int r = stepi + 1; r < q; ++r) {
      std::int32_t mag = fxp::fx_abs2(blk.at(r, stepi));
      if (mag > best_mag) {
        best = r;
        best_mag = mag;
      }
    }
    FixedComplex pivot = blk.at(best, stepi);
    if (pivot.re == 0 && pivot.im == 0) {
      throw SingularError("faddeev: zero pivot column at step " +
                          std::to_string(stepi));
    }
    state_.border[stepi % size_].pivot_mag2 = best_mag;
    if (best != stepi) {
      for (int col = 0; col < total_cols; ++col) {
        std::swap(blk.at(stepi, col), blk.at(best, col));
      }
      events_.push_back({t, stepi % size_, 0, PEMode::SwapRows,
                         BorderMode::Idle});
      events_.push_back({t, best % size_, 0, PEMode::SwapRows,
                         BorderMode::Idle});
      ++swaps;
      ++t;
    }
    pivot = blk.at(stepi, stepi);
    for (int dc = 0; dc < model_.div_cycles; ++dc) {
      events_.push_back({t + dc, stepi % size_, size_, PEMode::Idle,
                         BorderMode::Divide});
    }
    bool first_row = true;
    for (int r = stepi + 1; r < total_rows; ++r) {
      FixedComplex mult = fxp::fx_div_radix2(blk.at(r, stepi), pivot).value;
      if (first_row) {
        state_.border[stepi % size_].recip = mult;
        first_row = false;
      }
      for (int col = stepi + 1; col < total_cols; ++col) {
        blk.at(r, col) = fxp::fx_mac(blk.at(r, col), mult, blk.at(stepi, col),
                                     true);
      }
      blk.at(r, stepi) = fxp::fx_zero(fmt_);
    }
    // row-parallel elimination wavefront
    std::uint64_t elim_base = t + model_.div_cycles;
    for (int w = 0; w < q + mcols; ++w) {
      for (int rr = 0; rr < std::min(total_rows, size_); ++rr) {
        push_mac_window(elim_base + std::uint64_t(model_.mac_cycles) * w,
                        rr, std::min(stepi, size_ - 1), PEMode::Eliminate);
      }
    }
    t = elim_base + std::uint64_t(model_.mac_cycles) * (q + mcols);
  }

  // result block replaces Acc (and the border mean registers)
  const std::uint64_t done =
      schedule_start_ + model_.faddeev_cycles(q, mcols, swaps) - 1;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      commits_.push_back({done, i, j, false, blk.at(q + i, q + j)});
    }
    if (with_mean) {
      commits_.push_back({done, i, size_, false, blk.at(q + i, q + n)});
    }
  }
  acc_rows_ = n;
  acc_cols_ = n;
  acc_mean_valid_ = with_mean;
  const std::uint64_t cycles = model_.faddeev_cycles(q, mcols, swaps);
  finish_launch(cycles);
  return cycles;
}

StoreResult SystolicArray::store(bool from_state_reg, bool with_mean) {
  require_idle("store");
  const int rows = from_state_reg ? state_rows_ : acc_rows_;
  const int cols = from_state_reg ? state_cols_ : acc_cols_;
  if (rows == 0) {
    throw DimensionError("store: no resident result");
  }
  if (with_mean &&
      !(from_state_reg ? state_mean_valid_ : acc_mean_valid_)) {
    throw DimensionError("store: resident result has no mean column");
  }
  StoreResult out;
  out.cov = FxMatrix(rows, cols, fmt_);
  begin_schedule();
  std::uint64_t t = schedule_start_;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const auto& pe = state_.grid[size_t(i) * size_ + j];
      out.cov.at(i, j) = from_state_reg ? pe.state_reg : pe.accumulator;
      events_.push_back({t, i, j, PEMode::Accum, BorderMode::Idle});
      state_.drain.push_back({t, out.cov.at(i, j)});
      ++t;
    }
    if (with_mean) {
      out.mean.push_back(from_state_reg ? state_.border[i].mean_state
                                        : state_.border[i].mean_acc);
    }
  }
  const int total_cols = cols + (with_mean ? 1 : 0);
  out.cycles = model_.store_cycles(rows, total_cols);
  finish_launch(out.cycles);
  run_to_completion();
  return out;
}

FxMatrix SystolicArray::state_block() const {
  FxMatrix out(state_rows_, state_cols_, fmt_);
  for (int i = 0; i < state_rows_; ++i)
    for (int j = 0; j < state_cols_; ++j)
      out.at(i, j) = state_.grid[size_t(i) * size_ + j].state_reg;
  return out;
}

FxMatrix SystolicArray::acc_block() const {
  FxMatrix out(acc_rows_, acc_cols_, fmt_);
  for (int i = 0; i < acc_rows_; ++i)
    for (int j = 0; j < acc_cols_; ++j)
      out.at(i, j) = state_.grid[size_t(i) * size_ + j].accumulator;
  return out;
}

std::vector<FixedComplex> SystolicArray::state_mean() const {
  std::vector<FixedComplex> out;
  for (int i = 0; i < state_rows_; ++i)
    out.push_back(state_.border[i].mean_state);
  return out;
}

std::vector<FixedComplex> SystolicArray::acc_mean() const {
  std::vector<FixedComplex> out;
  for (int i = 0; i < acc_rows_; ++i) out.push_back(state_.border[i].mean_acc);
  return out;
}

}  // namespace fgp::systolic
