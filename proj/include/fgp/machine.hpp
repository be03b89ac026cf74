#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fgp/gmp.hpp"
#include "fgp/isa.hpp"
#include "fgp/systolic.hpp"

namespace fgp::machine {

// One message-memory slot: a dim x dim covariance plus a mean vector.
// dim == 0 means never written (reads back as zero fill).
struct MsgSlot {
  int dim = 0;
  fxp::FxMatrix cov;
  std::vector<fxp::FixedComplex> mean;
};

struct AmatSlot {
  int rows = 0;
  int cols = 0;
  fxp::FxMatrix m;
};

MsgSlot quantize_message(const gmp::GaussianMessage& msg,
                         const fxp::FxFormat& fmt);
gmp::GaussianMessage dequantize_message(const MsgSlot& slot);
AmatSlot quantize_state_matrix(const gmp::CMatrix& m, const fxp::FxFormat& fmt);
gmp::CMatrix dequantize_state_matrix(const AmatSlot& slot);

// Raw dump layout: msg = [dim][cov re,im row-major][mean re,im],
// amat = [(rows<<16)|cols][data re,im row-major].
std::vector<std::uint32_t> msg_slot_words(const MsgSlot& slot);
MsgSlot msg_slot_from_words(const std::vector<std::uint32_t>& words,
                            const fxp::FxFormat& fmt);
std::vector<std::uint32_t> amat_slot_words(const AmatSlot& slot);
AmatSlot amat_slot_from_words(const std::vector<std::uint32_t>& words,
                              const fxp::FxFormat& fmt);

struct Config {
  int array_size = 4;
  fxp::FxFormat fmt;
  systolic::CycleModel cycle_model;
};

enum class Fsm { Idle, Fetch, Decode, Execute, Reply };

struct Status {
  bool ok = true;
  ErrorCode code = ErrorCode::Runtime;
  std::string detail;
  int pc = -1;

  static Status okay(std::string detail = "") { return {true, ErrorCode::Runtime, std::move(detail), -1}; }
  static Status fail(ErrorCode code, std::string detail, int pc = -1) {
    return {false, code, std::move(detail), pc};
  }
  // "OK <detail>" or "ERR <CODE> <detail>", one line per command
  std::string reply() const;
};

struct InstrCycles {
  int pc = 0;
  isa::Opcode opcode{};
  std::uint64_t cycles = 0;
};

struct RunResult {
  Status status;
  std::uint64_t total_cycles = 0;
  std::uint64_t instructions = 0;
  std::vector<InstrCycles> breakdown;
};

inline constexpr std::uint64_t kMsgMemBits = 65536;  // 64 kbit budget
inline constexpr int kMsgSlots = 64;
inline constexpr int kAmatSlots = 16;
inline constexpr int kProgramMemWords = 256;

// The full processor model: program memory, message and state-matrix
// memories, the systolic array, and FSM-driven execution. Commands are
// processed one at a time; every command yields exactly one status.
class Machine {
 public:
  explicit Machine(Config cfg = {});

  const Config& config() const { return cfg_; }
  systolic::SystolicArray& array() { return array_; }
  const systolic::SystolicArray& array() const { return array_; }
  Fsm fsm() const { return fsm_; }
  void set_trace(std::ostream* os) { array_.set_trace(os); }

  Status load_program(const isa::ProgramImage& img);
  RunResult start_program(int index, int sections);

  // Stepped execution: begin, then one instruction per call until the
  // program halts or faults; run_state() accumulates the result.
  Status begin_program(int index, int sections);
  bool step_instruction();
  const RunResult& run_state() const { return run_; }

  Status write_message(std::uint8_t addr, const gmp::GaussianMessage& msg);
  Status write_state_matrix(std::uint8_t addr, const gmp::CMatrix& m);
  Status write_words(isa::Bank bank, std::uint8_t addr,
                     const std::vector<std::uint32_t>& words);
  struct ReadResult {
    Status status;
    std::vector<std::uint32_t> words;
  };
  ReadResult read_words(isa::Bank bank, std::uint8_t addr) const;

  const MsgSlot* msg_slot(std::uint8_t addr) const;
  std::uint64_t msg_footprint_bits() const;
  std::string status_line() const;

 private:
  struct Halt {};  // internal sentinel for end-of-program

  Status execute_one(std::uint64_t* cycles_out);
  fxp::FxMatrix fetch_matrix(const isa::Operand& op, bool flags_applied,
                             const MsgSlot** msg_out);
  std::uint8_t effective_addr(const isa::Operand& op) const;
  void check_msg_capacity(std::uint8_t addr, const MsgSlot& incoming) const;
  void store_result(const isa::Instruction& instr, std::uint64_t* cycles);

  Config cfg_;
  systolic::SystolicArray array_;
  isa::ProgramImage pm_;
  std::vector<MsgSlot> msg_mem_;
  std::vector<AmatSlot> amat_mem_;
  Fsm fsm_ = Fsm::Idle;

  // execution registers
  int pc_ = 0;
  int start_pc_ = 0;
  int sections_ = 0;
  bool loop_active_ = false;
  int loop_start_ = 0, loop_end_ = 0;
  int loop_iter_ = 0, loop_total_ = 0, loop_done_ = 0;
  RunResult run_;
};

// Line-delimited external command protocol:
//   LOAD <file> | START <prg> <sections> | WRITE <bank> <addr> <file> |
//   READ <bank> <addr> | STATUS
// Every reply starts with "OK ..." or "ERR <code> ..."; READ appends the
// hex dump after its reply line.
class TextPort {
 public:
  explicit TextPort(Machine& m) : machine_(m) {}
  std::string handle_line(const std::string& line);
  // Runs a whole script, writing one reply (plus payload) per command.
  void run_script(std::istream& in, std::ostream& out);

 private:
  Machine& machine_;
};

}  // namespace fgp::machine
