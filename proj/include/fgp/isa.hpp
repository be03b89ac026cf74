#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fgp/errors.hpp"

namespace fgp::isa {

// The six instructions. mma/mms/fad drive the systolic array; smm, loop
// and prg control program flow and memory traffic.
enum class Opcode : std::uint8_t {
  MMA = 1,  // matrix multiplication & accumulate (result -> StateReg)
  MMS = 2,  // matrix multiplication & shift (opB +/- StateReg product -> Acc)
  FAD = 3,  // Faddeev algorithm (Schur complement of resident blocks)
  SMM = 4,  // store array result in memory
  LOOP = 5, // repeat the next <extent> instructions <count> times
  PRG = 6,  // program start marker
};

enum class Bank : std::uint8_t {
  StateMatrixMem = 0,
  MessageMem = 1,
};

struct Operand {
  Bank bank = Bank::StateMatrixMem;
  std::uint8_t addr = 0;  // 6-bit slot address
  bool herm = false;      // route through the Transpose unit
  bool neg = false;       // negate the operand
  bool stream = false;    // address advances with the loop iteration

  bool operator==(const Operand&) const = default;
};

// One decoded instruction. Field use depends on the opcode:
//   mma/mms: a, b, mean_part; mms additionally resident_left
//   fad:     a = streamed d block, a.neg negates it, mean_part
//   smm:     a = destination slot, from_state_reg, mean_part
//   loop:    loop_count (0 = take the section count at start_program), imm = extent
//   prg:     imm = program index
struct Instruction {
  Opcode opcode = Opcode::PRG;
  Operand a;
  Operand b;
  bool mean_part = false;      // operate on [V | m] instead of V alone
  bool from_state_reg = false; // smm: drain StateReg instead of Acc
  bool resident_left = false;  // mms: Acc = opB +/- S*f(opA) instead of f(opA)*S
  std::uint8_t loop_count = 0;
  std::uint8_t imm = 0;

  bool operator==(const Instruction&) const = default;
};

inline constexpr int kAddrBits = 6;
inline constexpr std::uint8_t kMaxAddr = (1u << kAddrBits) - 1;
inline constexpr std::uint32_t kImageMagic = 0x46475030;  // "FGP0"

// Bit layout (see docs/formats.md):
//   [31:28] opcode  [27] part  [26] aux  [25:24] bankA  [23:18] addrA
//   [17] hermA  [16] negA  [15:14] bankB  [13:8] addrB  [7] hermB
//   [6] negB  [5:0] imm
std::uint32_t encode(const Instruction& instr);
Instruction decode(std::uint32_t word);  // throws DecodeError

struct ProgramImage {
  std::vector<std::uint32_t> words;
  std::map<int, std::size_t> program_table;  // prg index -> word offset

  bool operator==(const ProgramImage& o) const { return words == o.words; }
};

// Rebuilds the program table by decoding every word; validates that prg
// indices are unique.
ProgramImage image_from_words(std::vector<std::uint32_t> words);

// Binary container: magic word, word count, then the little-endian words.
std::vector<std::uint8_t> image_to_bytes(const ProgramImage& img);
ProgramImage image_from_bytes(const std::vector<std::uint8_t>& bytes);
void save_image(const std::string& path, const ProgramImage& img);
ProgramImage load_image(const std::string& path);

// Assembly text: one instruction per line, '#' comments, addresses in
// lowercase hex. Field orders:
//   mma|mms <hermA> <bankA> <addrA> <negA> <bankB> <addrB> <hermB> <negB> <mode>
//   fad <bank> <addr> <mode> <negd>
//   smm <bank> <addr> <mode> <src>
//   loop <count> <extent>
//   prg <index>
// mode = bit0 mean part, bit1 stream A, bit2 stream B, bit3 (mms only)
// resident-left product; fad/smm use bit0 only.
ProgramImage assemble(const std::string& text);
std::string disassemble(const ProgramImage& img);
std::string disassemble_instruction(const Instruction& instr);

const char* opcode_name(Opcode op);

}  // namespace fgp::isa
