#include "fgp/isa.hpp"

#include <cstdio>
#include <sstream>

#include "fgp/msgio.hpp"

namespace fgp::isa {

namespace {

constexpr std::uint32_t kOpcodeShift = 28;
constexpr std::uint32_t kPartBit = 1u << 27;
constexpr std::uint32_t kAuxBit = 1u << 26;
constexpr std::uint32_t kBankAShift = 24;
constexpr std::uint32_t kAddrAShift = 18;
constexpr std::uint32_t kHermABit = 1u << 17;
constexpr std::uint32_t kNegABit = 1u << 16;
constexpr std::uint32_t kBankBShift = 14;
constexpr std::uint32_t kAddrBShift = 8;
constexpr std::uint32_t kHermBBit = 1u << 7;
constexpr std::uint32_t kNegBBit = 1u << 6;
constexpr std::uint32_t kImmMask = 0x3f;
constexpr std::uint32_t kStreamABit = 1u << 0;  // inside imm for mma/mms
constexpr std::uint32_t kStreamBBit = 1u << 1;

std::uint32_t pack_operand_a(const Operand& op) {
  return (std::uint32_t(op.bank) << kBankAShift) |
         (std::uint32_t(op.addr) << kAddrAShift) |
         (op.herm ? kHermABit : 0) | (op.neg ? kNegABit : 0);
}

std::uint32_t pack_operand_b(const Operand& op) {
  return (std::uint32_t(op.bank) << kBankBShift) |
         (std::uint32_t(op.addr) << kAddrBShift) |
         (op.herm ? kHermBBit : 0) | (op.neg ? kNegBBit : 0);
}

void require(bool ok, const char* what) {
  if (!ok) throw DecodeError(std::string("invalid instruction: ") + what);
}

Bank bank_from_bits(std::uint32_t bits, const char* which) {
  require(bits <= 1, which);
  return Bank(bits);
}

}  // namespace

std::uint32_t encode(const Instruction& instr) {
  require(instr.a.addr <= kMaxAddr && instr.b.addr <= kMaxAddr,
          "address out of range");
  std::uint32_t w = std::uint32_t(instr.opcode) << kOpcodeShift;
  switch (instr.opcode) {
    case Opcode::MMA:
    case Opcode::MMS:
      require(instr.opcode == Opcode::MMS || !instr.resident_left,
              "resident side flag is mms-only");
      w |= pack_operand_a(instr.a) | pack_operand_b(instr.b);
      if (instr.mean_part) w |= kPartBit;
      if (instr.resident_left) w |= kAuxBit;
      if (instr.a.stream) w |= kStreamABit;
      if (instr.b.stream) w |= kStreamBBit;
      break;
    case Opcode::FAD:
      require(!instr.a.herm && !instr.a.stream, "fad operand flags");
      w |= pack_operand_a(instr.a);
      if (instr.mean_part) w |= kPartBit;
      break;
    case Opcode::SMM:
      require(!instr.a.herm && !instr.a.neg && !instr.a.stream,
              "smm operand flags");
      w |= pack_operand_a(instr.a);
      if (instr.mean_part) w |= kPartBit;
      if (instr.from_state_reg) w |= kAuxBit;
      break;
    case Opcode::LOOP:
      require(instr.loop_count <= kMaxAddr, "loop count out of range");
      require(instr.imm >= 1 && instr.imm <= kImmMask, "loop extent");
      w |= std::uint32_t(instr.loop_count) << kAddrAShift;
      w |= instr.imm;
      break;
    case Opcode::PRG:
      require(instr.imm >= 1 && instr.imm <= kImmMask, "prg index");
      w |= instr.imm;
      break;
    default:
      require(false, "unknown opcode");
  }
  return w;
}

Instruction decode(std::uint32_t word) {
  const std::uint32_t opbits = word >> kOpcodeShift;
  require(opbits >= 1 && opbits <= 6, "bad opcode nibble");
  Instruction instr;
  instr.opcode = Opcode(opbits);

  const bool part = word & kPartBit;
  const bool aux = word & kAuxBit;
  Operand a{bank_from_bits((word >> kBankAShift) & 3, "bank A"),
            std::uint8_t((word >> kAddrAShift) & kMaxAddr),
            bool(word & kHermABit), bool(word & kNegABit), false};
  Operand b{bank_from_bits((word >> kBankBShift) & 3, "bank B"),
            std::uint8_t((word >> kAddrBShift) & kMaxAddr),
            bool(word & kHermBBit), bool(word & kNegBBit), false};
  const std::uint32_t imm = word & kImmMask;

  auto b_is_zero = [&] {
    return b.bank == Bank::StateMatrixMem && b.addr == 0 && !b.herm && !b.neg;
  };
  auto a_flags_zero = [&] { return !a.herm && !a.neg; };

  switch (instr.opcode) {
    case Opcode::MMA:
    case Opcode::MMS:
      require(instr.opcode == Opcode::MMS || !aux, "aux bit set");
      require((imm & ~(kStreamABit | kStreamBBit)) == 0, "imm bits set");
      a.stream = imm & kStreamABit;
      b.stream = imm & kStreamBBit;
      instr.a = a;
      instr.b = b;
      instr.mean_part = part;
      instr.resident_left = aux;
      break;
    case Opcode::FAD:
      require(!aux && b_is_zero() && imm == 0 && !a.herm, "fad fields");
      instr.a = a;
      instr.mean_part = part;
      break;
    case Opcode::SMM:
      require(b_is_zero() && imm == 0 && a_flags_zero(), "smm fields");
      instr.a = a;
      instr.mean_part = part;
      instr.from_state_reg = aux;
      break;
    case Opcode::LOOP:
      require(!part && !aux && a_flags_zero() && b_is_zero(), "loop fields");
      require(imm >= 1, "loop extent must be >= 1");
      require(a.bank == Bank::StateMatrixMem, "loop fields");
      instr.loop_count = a.addr;
      instr.imm = std::uint8_t(imm);
      break;
    case Opcode::PRG:
      require(!part && !aux && a.bank == Bank::StateMatrixMem && a.addr == 0 &&
                  a_flags_zero() && b_is_zero(),
              "prg fields");
      require(imm >= 1, "prg index must be >= 1");
      instr.imm = std::uint8_t(imm);
      break;
    default:
      require(false, "unknown opcode");
  }
  return instr;
}

ProgramImage image_from_words(std::vector<std::uint32_t> words) {
  ProgramImage img;
  img.words = std::move(words);
  for (std::size_t i = 0; i < img.words.size(); ++i) {
    Instruction instr = decode(img.words[i]);
    if (instr.opcode == Opcode::PRG) {
      auto [it, inserted] = img.program_table.emplace(instr.imm, i);
      (void)it;
      if (!inserted) {
        throw DecodeError("duplicate prg index " + std::to_string(instr.imm) +
                          " at word " + std::to_string(i));
      }
    }
  }
  return img;
}

std::vector<std::uint8_t> image_to_bytes(const ProgramImage& img) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(8 + 4 * img.words.size());
  auto put_word = [&](std::uint32_t w) {
    bytes.push_back(w & 0xff);
    bytes.push_back((w >> 8) & 0xff);
    bytes.push_back((w >> 16) & 0xff);
    bytes.push_back((w >> 24) & 0xff);
  };
  put_word(kImageMagic);
  put_word(std::uint32_t(img.words.size()));
  for (std::uint32_t w : img.words) put_word(w);
  return bytes;
}

ProgramImage image_from_bytes(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || bytes.size() % 4 != 0) {
    throw DecodeError("image truncated");
  }
  auto get_word = [&](std::size_t i) {
    return std::uint32_t(bytes[4 * i]) | (std::uint32_t(bytes[4 * i + 1]) << 8) |
           (std::uint32_t(bytes[4 * i + 2]) << 16) |
           (std::uint32_t(bytes[4 * i + 3]) << 24);
  };
  if (get_word(0) != kImageMagic) {
    throw DecodeError("bad image magic");
  }
  const std::uint32_t count = get_word(1);
  if (bytes.size() != 8 + 4 * std::size_t(count)) {
    throw DecodeError("image word count mismatch");
  }
  std::vector<std::uint32_t> words(count);
  for (std::uint32_t i = 0; i < count; ++i) words[i] = get_word(2 + i);
  return image_from_words(std::move(words));
}

void save_image(const std::string& path, const ProgramImage& img) {
  auto bytes = image_to_bytes(img);
  msgio::save_file(path,
                   std::string(reinterpret_cast<const char*>(bytes.data()),
                               bytes.size()));
}

ProgramImage load_image(const std::string& path) {
  std::string text = msgio::load_file(path);
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  return image_from_bytes(bytes);
}

namespace {

struct FieldParser {
  int line;
  const std::vector<std::string>& fields;
  std::size_t next = 1;  // fields[0] is the mnemonic

  std::uint32_t take(const char* what, std::uint32_t max_value, int base) {
    if (next >= fields.size()) {
      throw SyntaxError(line, std::string("missing field <") + what + ">");
    }
    const std::string& tok = fields[next++];
    char* end = nullptr;
    long v = std::strtol(tok.c_str(), &end, base);
    if (end == tok.c_str() || *end != '\0' || v < 0) {
      throw SyntaxError(line, std::string("bad value '") + tok + "' for <" +
                                  what + ">");
    }
    if (std::uint32_t(v) > max_value) {
      throw SyntaxError(line, std::string("<") + what + "> out of range: '" +
                                  tok + "'");
    }
    return std::uint32_t(v);
  }

  std::uint32_t flag(const char* what) { return take(what, 1, 10); }
  std::uint32_t addr(const char* what) { return take(what, kMaxAddr, 16); }
};

Operand parse_operand(FieldParser& p, bool leading_herm) {
  Operand op;
  if (leading_herm) op.herm = p.flag("herm");
  op.bank = Bank(p.flag("bank"));
  op.addr = std::uint8_t(p.addr("addr"));
  if (leading_herm) op.neg = p.flag("neg");
  return op;
}

}  // namespace

ProgramImage assemble(const std::string& text) {
  std::vector<std::uint32_t> words;
  std::istringstream is(text);
  std::string raw_line;
  int line_no = 0;
  while (std::getline(is, raw_line)) {
    ++line_no;
    std::string line = raw_line.substr(0, raw_line.find('#'));
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string tok;
    while (ls >> tok) fields.push_back(tok);
    if (fields.empty()) continue;

    FieldParser p{line_no, fields};
    Instruction instr;
    const std::string& mnem = fields[0];
    if (mnem == "mma" || mnem == "mms") {
      instr.opcode = mnem == "mma" ? Opcode::MMA : Opcode::MMS;
      instr.a = parse_operand(p, true);
      instr.b.bank = Bank(p.flag("bank"));
      instr.b.addr = std::uint8_t(p.addr("addr"));
      instr.b.herm = p.flag("herm");
      instr.b.neg = p.flag("neg");
      std::uint32_t mode =
          p.take("mode", instr.opcode == Opcode::MMS ? 15 : 7, 10);
      instr.mean_part = mode & 1;
      instr.a.stream = mode & 2;
      instr.b.stream = mode & 4;
      instr.resident_left = mode & 8;
    } else if (mnem == "fad") {
      instr.opcode = Opcode::FAD;
      instr.a = parse_operand(p, false);
      instr.mean_part = p.take("mode", 1, 10);
      instr.a.neg = p.flag("negd");
    } else if (mnem == "smm") {
      instr.opcode = Opcode::SMM;
      instr.a = parse_operand(p, false);
      instr.mean_part = p.take("mode", 1, 10);
      instr.from_state_reg = p.flag("src");
    } else if (mnem == "loop") {
      instr.opcode = Opcode::LOOP;
      instr.loop_count = std::uint8_t(p.take("count", kMaxAddr, 10));
      instr.imm = std::uint8_t(p.take("extent", kImmMask, 10));
      if (instr.imm < 1) throw SyntaxError(line_no, "loop extent must be >= 1");
    } else if (mnem == "prg") {
      instr.opcode = Opcode::PRG;
      instr.imm = std::uint8_t(p.take("index", kImmMask, 10));
      if (instr.imm < 1) throw SyntaxError(line_no, "prg index must be >= 1");
    } else {
      throw SyntaxError(line_no, "unknown opcode '" + mnem + "'");
    }
    if (p.next != fields.size()) {
      throw SyntaxError(line_no, "trailing fields after '" + mnem + "'");
    }
    try {
      words.push_back(encode(instr));
    } catch (const DecodeError& e) {
      throw SyntaxError(line_no, e.what());
    }
  }
  try {
    return image_from_words(std::move(words));
  } catch (const DecodeError& e) {
    throw SyntaxError(line_no, e.what());
  }
}

std::string disassemble_instruction(const Instruction& instr) {
  char buf[96];
  auto hex = [](std::uint8_t v) {
    char b[8];
    std::snprintf(b, sizeof(b), "%x", v);
    return std::string(b);
  };
  switch (instr.opcode) {
    case Opcode::MMA:
    case Opcode::MMS: {
      int mode = (instr.mean_part ? 1 : 0) | (instr.a.stream ? 2 : 0) |
                 (instr.b.stream ? 4 : 0) | (instr.resident_left ? 8 : 0);
      std::snprintf(buf, sizeof(buf), "%s %d %d %s %d %d %s %d %d %d",
                    opcode_name(instr.opcode), instr.a.herm ? 1 : 0,
                    int(instr.a.bank), hex(instr.a.addr).c_str(),
                    instr.a.neg ? 1 : 0, int(instr.b.bank),
                    hex(instr.b.addr).c_str(), instr.b.herm ? 1 : 0,
                    instr.b.neg ? 1 : 0, mode);
      break;
    }
    case Opcode::FAD:
      std::snprintf(buf, sizeof(buf), "fad %d %s %d %d", int(instr.a.bank),
                    hex(instr.a.addr).c_str(), instr.mean_part ? 1 : 0,
                    instr.a.neg ? 1 : 0);
      break;
    case Opcode::SMM:
      std::snprintf(buf, sizeof(buf), "smm %d %s %d %d", int(instr.a.bank),
                    hex(instr.a.addr).c_str(), instr.mean_part ? 1 : 0,
                    instr.from_state_reg ? 1 : 0);
      break;
    case Opcode::LOOP:
      std::snprintf(buf, sizeof(buf), "loop %d %d", instr.loop_count,
                    instr.imm);
      break;
    case Opcode::PRG:
      std::snprintf(buf, sizeof(buf), "prg %d", instr.imm);
      break;
    default:
      throw DecodeError("unknown opcode");
  }
  return buf;
}

std::string disassemble(const ProgramImage& img) {
  std::string out;
  for (std::size_t i = 0; i < img.words.size(); ++i) {
    Instruction instr = decode(img.words[i]);
    out += disassemble_instruction(instr);
    out += '\n';
  }
  return out;
}

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::MMA: return "mma";
    case Opcode::MMS: return "mms";
    case Opcode::FAD: return "fad";
    case Opcode::SMM: return "smm";
    case Opcode::LOOP: return "loop";
    case Opcode::PRG: return "prg";
  }
  return "?";
}

}  // namespace fgp::isa
