#include "fgp/machine.hpp"

#include <sstream>

#include "fgp/msgio.hpp"

namespace fgp::machine {

using fxp::FixedComplex;
using fxp::FxMatrix;

MsgSlot quantize_message(const gmp::GaussianMessage& msg,
                         const fxp::FxFormat& fmt) {
  MsgSlot slot;
  slot.dim = int(msg.dim());
  slot.cov = FxMatrix(slot.dim, slot.dim, fmt);
  for (int r = 0; r < slot.dim; ++r)
    for (int c = 0; c < slot.dim; ++c)
      slot.cov.at(r, c) = fxp::quantize(msg.cov(r, c), fmt);
  for (int i = 0; i < slot.dim; ++i)
    slot.mean.push_back(fxp::quantize(msg.mean(i), fmt));
  return slot;
}

gmp::GaussianMessage dequantize_message(const MsgSlot& slot) {
  gmp::CVector mean(slot.dim);
  gmp::CMatrix cov(slot.dim, slot.dim);
  for (int i = 0; i < slot.dim; ++i) mean(i) = fxp::to_complex(slot.mean[i]);
  for (int r = 0; r < slot.dim; ++r)
    for (int c = 0; c < slot.dim; ++c)
      cov(r, c) = fxp::to_complex(slot.cov.at(r, c));
  return {std::move(mean), std::move(cov), gmp::Param::MeanCov};
}

AmatSlot quantize_state_matrix(const gmp::CMatrix& m,
                               const fxp::FxFormat& fmt) {
  AmatSlot slot;
  slot.rows = int(m.rows());
  slot.cols = int(m.cols());
  slot.m = FxMatrix(slot.rows, slot.cols, fmt);
  for (int r = 0; r < slot.rows; ++r)
    for (int c = 0; c < slot.cols; ++c)
      slot.m.at(r, c) = fxp::quantize(m(r, c), fmt);
  return slot;
}

gmp::CMatrix dequantize_state_matrix(const AmatSlot& slot) {
  gmp::CMatrix m(slot.rows, slot.cols);
  for (int r = 0; r < slot.rows; ++r)
    for (int c = 0; c < slot.cols; ++c)
      m(r, c) = fxp::to_complex(slot.m.at(r, c));
  return m;
}

std::vector<std::uint32_t> msg_slot_words(const MsgSlot& slot) {
  std::vector<std::uint32_t> words;
  words.push_back(std::uint32_t(slot.dim));
  for (int r = 0; r < slot.dim; ++r)
    for (int c = 0; c < slot.dim; ++c) {
      words.push_back(std::uint32_t(slot.cov.at(r, c).re));
      words.push_back(std::uint32_t(slot.cov.at(r, c).im));
    }
  for (int i = 0; i < slot.dim; ++i) {
    words.push_back(std::uint32_t(slot.mean[i].re));
    words.push_back(std::uint32_t(slot.mean[i].im));
  }
  return words;
}

MsgSlot msg_slot_from_words(const std::vector<std::uint32_t>& words,
                            const fxp::FxFormat& fmt) {
  if (words.empty()) throw Error(ErrorCode::Io, "empty msg dump");
  int dim = int(words[0]);
  if (dim < 0 || dim > 8 ||
      words.size() != 1 + 2 * size_t(dim) * dim + 2 * size_t(dim)) {
    throw Error(ErrorCode::Io, "msg dump word count mismatch");
  }
  MsgSlot slot;
  slot.dim = dim;
  slot.cov = FxMatrix(dim, dim, fmt);
  size_t i = 1;
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) {
      slot.cov.at(r, c) = {std::int32_t(words[i]), std::int32_t(words[i + 1]),
                           fmt};
      i += 2;
    }
  for (int k = 0; k < dim; ++k) {
    slot.mean.push_back(
        {std::int32_t(words[i]), std::int32_t(words[i + 1]), fmt});
    i += 2;
  }
  return slot;
}

std::vector<std::uint32_t> amat_slot_words(const AmatSlot& slot) {
  std::vector<std::uint32_t> words;
  words.push_back((std::uint32_t(slot.rows) << 16) | std::uint32_t(slot.cols));
  for (int r = 0; r < slot.rows; ++r)
    for (int c = 0; c < slot.cols; ++c) {
      words.push_back(std::uint32_t(slot.m.at(r, c).re));
      words.push_back(std::uint32_t(slot.m.at(r, c).im));
    }
  return words;
}

AmatSlot amat_slot_from_words(const std::vector<std::uint32_t>& words,
                              const fxp::FxFormat& fmt) {
  if (words.empty()) throw Error(ErrorCode::Io, "empty amat dump");
  int rows = int(words[0] >> 16);
  int cols = int(words[0] & 0xffff);
  if (rows < 0 || rows > 8 || cols < 0 || cols > 8 ||
      words.size() != 1 + 2 * size_t(rows) * cols) {
    throw Error(ErrorCode::Io, "amat dump word count mismatch");
  }
  AmatSlot slot;
  slot.rows = rows;
  slot.cols = cols;
  slot.m = FxMatrix(rows, cols, fmt);
  size_t i = 1;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      slot.m.at(r, c) = {std::int32_t(words[i]), std::int32_t(words[i + 1]),
                         fmt};
      i += 2;
    }
  return slot;
}

std::string Status::reply() const {
  if (ok) return detail.empty() ? "OK" : "OK " + detail;
  std::string r = std::string("ERR ") + error_code_name(code);
  if (!detail.empty()) r += " " + detail;
  if (pc >= 0) r += " (pc=" + std::to_string(pc) + ")";
  return r;
}

Machine::Machine(Config cfg)
    : cfg_(cfg), array_(cfg.array_size, cfg.fmt, cfg.cycle_model) {
  msg_mem_.assign(kMsgSlots, MsgSlot{});
  amat_mem_.assign(kAmatSlots, AmatSlot{});
}

Status Machine::load_program(const isa::ProgramImage& img) {
  if (fsm_ != Fsm::Idle) {
    return Status::fail(ErrorCode::Busy, "machine not idle");
  }
  if (img.words.size() > kProgramMemWords) {
    return Status::fail(ErrorCode::Capacity,
                        "image exceeds program memory (" +
                            std::to_string(img.words.size()) + " > " +
                            std::to_string(kProgramMemWords) + " words)");
  }
  pm_ = img;  // last write wins
  std::string info = "loaded " + std::to_string(img.words.size()) +
                     " words, programs=" +
                     std::to_string(img.program_table.size());
  return Status::okay(info);
}

std::uint64_t Machine::msg_footprint_bits() const {
  std::uint64_t bits = 0;
  for (const auto& slot : msg_mem_) {
    std::uint64_t entries = std::uint64_t(slot.dim) * slot.dim + slot.dim;
    bits += entries * 2 * cfg_.fmt.total_bits();
  }
  return bits;
}

void Machine::check_msg_capacity(std::uint8_t addr,
                                 const MsgSlot& incoming) const {
  std::uint64_t entries =
      std::uint64_t(incoming.dim) * incoming.dim + incoming.dim;
  std::uint64_t incoming_bits = entries * 2 * cfg_.fmt.total_bits();
  const MsgSlot& old = msg_mem_[addr];
  std::uint64_t old_bits =
      (std::uint64_t(old.dim) * old.dim + old.dim) * 2 * cfg_.fmt.total_bits();
  if (msg_footprint_bits() - old_bits + incoming_bits > kMsgMemBits) {
    throw CapacityError("message memory footprint would exceed " +
                        std::to_string(kMsgMemBits) + " bits");
  }
}

Status Machine::write_message(std::uint8_t addr,
                              const gmp::GaussianMessage& msg) {
  try {
    if (fsm_ != Fsm::Idle) throw BusyError("machine not idle");
    if (addr >= kMsgSlots) {
      throw AddressFault("msg address out of range");
    }
    if (msg.dim() < 1 || msg.dim() > cfg_.array_size) {
      throw SizeError("message dimension exceeds array size");
    }
    MsgSlot slot = quantize_message(msg, cfg_.fmt);
    check_msg_capacity(addr, slot);
    msg_mem_[addr] = std::move(slot);
    return Status::okay();
  } catch (const Error& e) {
    return Status::fail(e.code(), e.what());
  }
}

Status Machine::write_state_matrix(std::uint8_t addr, const gmp::CMatrix& m) {
  try {
    if (fsm_ != Fsm::Idle) throw BusyError("machine not idle");
    if (addr >= kAmatSlots) {
      throw AddressFault("amat address out of range");
    }
    if (m.rows() < 1 || m.cols() < 1 || m.rows() > cfg_.array_size ||
        m.cols() > cfg_.array_size) {
      throw SizeError("state matrix exceeds array size");
    }
    amat_mem_[addr] = quantize_state_matrix(m, cfg_.fmt);
    return Status::okay();
  } catch (const Error& e) {
    return Status::fail(e.code(), e.what());
  }
}

Status Machine::write_words(isa::Bank bank, std::uint8_t addr,
                            const std::vector<std::uint32_t>& words) {
  try {
    if (fsm_ != Fsm::Idle) throw BusyError("machine not idle");
    if (bank == isa::Bank::MessageMem) {
      if (addr >= kMsgSlots) throw AddressFault("msg address out of range");
      MsgSlot slot = msg_slot_from_words(words, cfg_.fmt);
      if (slot.dim > cfg_.array_size) {
        throw SizeError("message dimension exceeds array size");
      }
      check_msg_capacity(addr, slot);
      msg_mem_[addr] = std::move(slot);
    } else {
      if (addr >= kAmatSlots) throw AddressFault("amat address out of range");
      AmatSlot slot = amat_slot_from_words(words, cfg_.fmt);
      if (slot.rows > cfg_.array_size || slot.cols > cfg_.array_size) {
        throw SizeError("state matrix exceeds array size");
      }
      amat_mem_[addr] = std::move(slot);
    }
    return Status::okay(std::to_string(words.size()) + " words");
  } catch (const Error& e) {
    return Status::fail(e.code(), e.what());
  }
}

Machine::ReadResult Machine::read_words(isa::Bank bank,
                                        std::uint8_t addr) const {
  ReadResult out;
  try {
    if (bank == isa::Bank::MessageMem) {
      if (addr >= kMsgSlots) throw AddressFault("msg address out of range");
      out.words = msg_slot_words(msg_mem_[addr]);
    } else {
      if (addr >= kAmatSlots) throw AddressFault("amat address out of range");
      out.words = amat_slot_words(amat_mem_[addr]);
    }
    out.status = Status::okay(std::to_string(out.words.size()));
  } catch (const Error& e) {
    out.status = Status::fail(e.code(), e.what());
  }
  return out;
}

const MsgSlot* Machine::msg_slot(std::uint8_t addr) const {
  if (addr >= kMsgSlots) return nullptr;
  return &msg_mem_[addr];
}

std::string Machine::status_line() const {
  const char* fsm = fsm_ == Fsm::Idle ? "idle" : "execute";
  return std::string("fsm=") + fsm + " fmt=" + fxp::format_name(cfg_.fmt) +
         " array=" + std::to_string(cfg_.array_size) +
         " footprint_bits=" + std::to_string(msg_footprint_bits()) +
         " cycles=" + std::to_string(run_.total_cycles);
}

Status Machine::begin_program(int index, int sections) {
  if (fsm_ != Fsm::Idle) {
    return Status::fail(ErrorCode::Busy, "machine not idle");
  }
  auto it = pm_.program_table.find(index);
  if (it == pm_.program_table.end()) {
    return Status::fail(ErrorCode::AddressFault,
                        "unknown program " + std::to_string(index));
  }
  if (sections < 0) {
    return Status::fail(ErrorCode::Argument, "sections must be >= 0");
  }
  pc_ = start_pc_ = int(it->second);
  sections_ = sections;
  loop_active_ = false;
  loop_iter_ = 0;
  run_ = RunResult{};
  fsm_ = Fsm::Execute;
  return Status::okay();
}

bool Machine::step_instruction() {
  if (fsm_ != Fsm::Execute) return false;
  if (pc_ >= int(pm_.words.size())) {
    fsm_ = Fsm::Idle;
    run_.status = Status::okay("cycles=" + std::to_string(run_.total_cycles));
    return false;
  }
  isa::Instruction instr;
  try {
    instr = isa::decode(pm_.words[pc_]);
  } catch (const Error& e) {
    fsm_ = Fsm::Idle;
    run_.status = Status::fail(e.code(), e.what(), pc_);
    return false;
  }
  if (instr.opcode == isa::Opcode::PRG && pc_ != start_pc_) {
    fsm_ = Fsm::Idle;  // next program begins here
    run_.status = Status::okay("cycles=" + std::to_string(run_.total_cycles));
    return false;
  }
  const int fetch_pc = pc_;
  std::uint64_t cycles = 0;
  Status st = execute_one(&cycles);
  run_.total_cycles += cycles;
  run_.instructions += 1;
  run_.breakdown.push_back({fetch_pc, instr.opcode, cycles});
  if (!st.ok) {
    fsm_ = Fsm::Idle;
    run_.status = st;
    return false;
  }
  // advance pc and handle the loop back-edge
  ++pc_;
  if (loop_active_ && pc_ == loop_end_) {
    ++loop_done_;
    if (loop_done_ < loop_total_) {
      ++loop_iter_;
      pc_ = loop_start_;
    } else {
      loop_active_ = false;
    }
  }
  if (pc_ >= int(pm_.words.size())) {
    fsm_ = Fsm::Idle;
    run_.status = Status::okay("cycles=" + std::to_string(run_.total_cycles));
    return false;
  }
  return true;
}

RunResult Machine::start_program(int index, int sections) {
  Status st = begin_program(index, sections);
  if (!st.ok) {
    RunResult r;
    r.status = st;
    return r;
  }
  while (step_instruction()) {
  }
  return run_;
}

std::uint8_t Machine::effective_addr(const isa::Operand& op) const {
  int addr = op.addr;
  if (op.stream) addr += loop_iter_;
  if (addr > isa::kMaxAddr) {
    throw AddressFault("streamed address beyond bank range");
  }
  return std::uint8_t(addr);
}

FxMatrix Machine::fetch_matrix(const isa::Operand& op, bool flags_applied,
                               const MsgSlot** msg_out) {
  std::uint8_t addr = effective_addr(op);
  if (msg_out) *msg_out = nullptr;
  FxMatrix m;
  if (op.bank == isa::Bank::MessageMem) {
    if (addr >= kMsgSlots) throw AddressFault("msg address out of range");
    const MsgSlot& slot = msg_mem_[addr];
    if (slot.dim == 0) {
      throw Error(ErrorCode::Runtime,
                  "read of empty message slot " + std::to_string(addr));
    }
    if (msg_out) *msg_out = &slot;
    m = slot.cov;
  } else {
    if (addr >= kAmatSlots) throw AddressFault("amat address out of range");
    const AmatSlot& slot = amat_mem_[addr];
    if (slot.rows == 0) {
      throw Error(ErrorCode::Runtime,
                  "read of empty state-matrix slot " + std::to_string(addr));
    }
    m = slot.m;
  }
  if (flags_applied) {
    if (op.herm) m = m.conj_transpose();
    if (op.neg) m = m.negated();
  }
  return m;
}

void Machine::store_result(const isa::Instruction& instr,
                           std::uint64_t* cycles) {
  if (instr.a.bank != isa::Bank::MessageMem) {
    throw Error(ErrorCode::Runtime, "smm destination must be message memory");
  }
  std::uint8_t addr = effective_addr(instr.a);
  if (addr >= kMsgSlots) throw AddressFault("msg address out of range");
  auto res = array_.store(instr.from_state_reg, instr.mean_part);
  *cycles += res.cycles;
  if (res.cov.rows() != res.cov.cols()) {
    throw Error(ErrorCode::Runtime, "smm of a non-square result block");
  }
  MsgSlot slot;
  slot.dim = res.cov.rows();
  slot.cov = res.cov;
  slot.mean = instr.mean_part
                  ? res.mean
                  : std::vector<FixedComplex>(slot.dim, fxp::fx_zero(cfg_.fmt));
  check_msg_capacity(addr, slot);
  msg_mem_[addr] = std::move(slot);
}

Status Machine::execute_one(std::uint64_t* cycles_out) {
  const int pc = pc_;
  std::uint64_t cycles = cfg_.cycle_model.instr_overhead;
  isa::Instruction instr = isa::decode(pm_.words[pc]);
  try {
    switch (instr.opcode) {
      case isa::Opcode::MMA: {
        const MsgSlot* bmsg = nullptr;
        FxMatrix lhs = fetch_matrix(instr.a, false, nullptr);
        FxMatrix rhs = fetch_matrix(instr.b, false, &bmsg);
        std::vector<FixedComplex> mean;
        const std::vector<FixedComplex>* mean_ptr = nullptr;
        if (instr.mean_part) {
          if (!bmsg) {
            throw Error(ErrorCode::Runtime,
                        "mma mean part requires a message operand");
          }
          mean = bmsg->mean;
          if (instr.b.neg) {
            for (auto& v : mean) v = fxp::fx_neg(v);
          }
          mean_ptr = &mean;
        }
        cycles += array_.matmul(lhs, {instr.a.herm, instr.a.neg}, rhs,
                                {instr.b.herm, instr.b.neg}, mean_ptr);
        array_.run_to_completion();
        break;
      }
      case isa::Opcode::MMS: {
        const MsgSlot* bmsg = nullptr;
        FxMatrix other = fetch_matrix(instr.a, false, nullptr);
        FxMatrix init = fetch_matrix(instr.b, false, &bmsg);
        if (instr.b.herm) init = init.conj_transpose();
        std::vector<FixedComplex> mean;
        const std::vector<FixedComplex>* mean_ptr = nullptr;
        if (instr.mean_part) {
          if (!bmsg) {
            throw Error(ErrorCode::Runtime,
                        "mms mean part requires a message operand");
          }
          mean = bmsg->mean;
          mean_ptr = &mean;
        }
        cycles += array_.matmul_shift(
            init, mean_ptr, instr.b.neg, other, {instr.a.herm, false},
            instr.resident_left ? systolic::ResidentSide::Left
                                : systolic::ResidentSide::Right,
            instr.a.neg);
        array_.run_to_completion();
        break;
      }
      case isa::Opcode::FAD: {
        const MsgSlot* dmsg = nullptr;
        FxMatrix d = fetch_matrix(instr.a, false, &dmsg);
        std::vector<FixedComplex> mean;
        const std::vector<FixedComplex>* mean_ptr = nullptr;
        if (instr.mean_part) {
          if (!dmsg) {
            throw Error(ErrorCode::Runtime,
                        "fad mean part requires a message operand");
          }
          mean = dmsg->mean;
          mean_ptr = &mean;
        }
        cycles += array_.faddeev(d, mean_ptr, instr.a.neg);
        array_.run_to_completion();
        break;
      }
      case isa::Opcode::SMM:
        store_result(instr, &cycles);
        break;
      case isa::Opcode::LOOP: {
        if (loop_active_) {
          throw Error(ErrorCode::Runtime, "nested loop not supported");
        }
        loop_total_ = instr.loop_count ? instr.loop_count : sections_;
        int extent = instr.imm;
        if (pc + 1 + extent > int(pm_.words.size())) {
          throw Error(ErrorCode::Runtime, "loop extent beyond program end");
        }
        if (loop_total_ == 0) {
          pc_ += extent;  // skip the body entirely
        } else {
          loop_active_ = true;
          loop_start_ = pc + 1;
          loop_end_ = pc + 1 + extent;
          loop_iter_ = 0;
          loop_done_ = 0;
        }
        break;
      }
      case isa::Opcode::PRG:
        break;  // start marker, no datapath effect
    }
  } catch (const Error& e) {
    *cycles_out = cycles;
    return Status::fail(e.code(), e.what(), pc);
  }
  *cycles_out = cycles;
  return Status::okay();
}

namespace {

isa::Bank parse_bank(const std::string& tok) {
  if (tok == "msg" || tok == "1") return isa::Bank::MessageMem;
  if (tok == "amat" || tok == "0") return isa::Bank::StateMatrixMem;
  throw Error(ErrorCode::Argument, "bad bank '" + tok + "' (msg|amat)");
}

std::uint8_t parse_addr(const std::string& tok) {
  char* end = nullptr;
  long v = std::strtol(tok.c_str(), &end, 16);
  if (end == tok.c_str() || *end != '\0' || v < 0 || v > isa::kMaxAddr) {
    throw Error(ErrorCode::Argument, "bad address '" + tok + "'");
  }
  return std::uint8_t(v);
}

}  // namespace

std::string TextPort::handle_line(const std::string& line) {
  std::istringstream is(line);
  std::string cmd;
  if (!(is >> cmd) || cmd.empty() || cmd[0] == '#') {
    return "";  // blank/comment lines get no reply
  }
  try {
    if (cmd == "LOAD") {
      std::string path;
      if (!(is >> path)) throw Error(ErrorCode::Argument, "LOAD <file>");
      isa::ProgramImage img = isa::load_image(path);
      return machine_.load_program(img).reply();
    }
    if (cmd == "START") {
      int prg = 0, sections = 0;
      if (!(is >> prg >> sections)) {
        throw Error(ErrorCode::Argument, "START <prg> <sections>");
      }
      RunResult r = machine_.start_program(prg, sections);
      if (!r.status.ok) return r.status.reply();
      return Status::okay("cycles=" + std::to_string(r.total_cycles) +
                          " instructions=" + std::to_string(r.instructions))
          .reply();
    }
    if (cmd == "WRITE") {
      std::string bank_tok, addr_tok, path;
      if (!(is >> bank_tok >> addr_tok >> path)) {
        throw Error(ErrorCode::Argument, "WRITE <bank> <addr> <file>");
      }
      isa::Bank bank = parse_bank(bank_tok);
      std::uint8_t addr = parse_addr(addr_tok);
      std::string text = msgio::load_file(path);
      std::istringstream ts(text);
      std::string first;
      ts >> first;
      if (first == "msg") {
        if (bank != isa::Bank::MessageMem) {
          throw Error(ErrorCode::Argument, "msg file into amat bank");
        }
        return machine_
            .write_message(addr, msgio::message_from_string(text))
            .reply();
      }
      if (first == "mat") {
        if (bank != isa::Bank::StateMatrixMem) {
          throw Error(ErrorCode::Argument, "mat file into msg bank");
        }
        return machine_
            .write_state_matrix(addr, msgio::matrix_from_string(text))
            .reply();
      }
      return machine_.write_words(bank, addr, msgio::hex_to_words(text))
          .reply();
    }
    if (cmd == "READ") {
      std::string bank_tok, addr_tok;
      if (!(is >> bank_tok >> addr_tok)) {
        throw Error(ErrorCode::Argument, "READ <bank> <addr>");
      }
      auto r = machine_.read_words(parse_bank(bank_tok), parse_addr(addr_tok));
      if (!r.status.ok) return r.status.reply();
      return r.status.reply() + "\n" + msgio::words_to_hex(r.words);
    }
    if (cmd == "STATUS") {
      return Status::okay(machine_.status_line()).reply();
    }
    throw Error(ErrorCode::Argument, "unknown command '" + cmd + "'");
  } catch (const Error& e) {
    return Status::fail(e.code(), e.what()).reply();
  } catch (const std::exception& e) {
    return Status::fail(ErrorCode::Runtime, e.what()).reply();
  }
}

void TextPort::run_script(std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    std::string reply = handle_line(line);
    if (!reply.empty()) {
      out << reply;
      if (reply.back() != '\n') out << '\n';
    }
  }
}

}  // namespace fgp::machine
