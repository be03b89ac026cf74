#pragma once

#include <string>
#include <vector>

#include "fgp/gmp.hpp"
#include "fgp/isa.hpp"

namespace fgp::compiler {

// ---- graph program front end (.fgg) ----------------------------------
//
//   graph <name>
//   msg <name> <dim> [stream <k>]
//   amat <name> <rows> <cols> [stream <k>]
//   in <name>...
//   out <name>...
//   repeat <k>
//     <out> = <verb>(<args>)
//   end
//
// Verbs: add_f, add_b, mult_eq_f, mult_f, mult_b, eq. Statements may
// also appear outside a repeat block; at most one repeat block.

struct MsgDecl {
  std::string name;
  int dim = 0;
  int stream = 0;  // 0 = plain, k>0 = stream of k instances
};

struct AmatDecl {
  std::string name;
  int rows = 0, cols = 0;
  int stream = 0;
};

struct Statement {
  std::string output;
  std::string verb;
  std::vector<std::string> args;
  int line = 0;
};

struct GraphProgram {
  std::string name;
  std::vector<MsgDecl> msgs;
  std::vector<AmatDecl> amats;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<Statement> head;  // before the repeat block
  std::vector<Statement> body;  // inside the repeat block
  std::vector<Statement> tail;  // after the repeat block
  int repeat_count = 0;         // 0 = no repeat block
};

GraphProgram parse_graph(const std::string& text);

// ---- schedule IR ------------------------------------------------------

struct MessageInfo {
  std::string name;  // versioned debug name, e.g. "x.1" or "obs[0]"
  int dim = 0;
  bool external_in = false;
  bool external_out = false;
  int stream_group = -1;  // index into stream group table, -1 = plain
  int stream_pos = 0;
  int def_step = -1;   // -1: defined before program start
  int last_use = -1;   // last step reading this id (liveness)
  int storage = -1;    // identifier after memory optimization
  int slot = -1;       // message-memory address (assigned at emit)
};

struct AmatInfo {
  std::string name;
  int rows = 0, cols = 0;
  int stream_group = -1;
  int stream_pos = 0;
  int slot = -1;
};

struct ScheduleStep {
  gmp::NodeKind kind{};
  gmp::Direction direction = gmp::Direction::Forward;
  std::vector<int> inputs;  // message ids
  int output = -1;          // message id
  int amat = -1;            // AmatInfo index, -1 = none
  int section = -1;         // unrolled repeat iteration, -1 outside
};

struct Schedule {
  std::vector<MessageInfo> messages;
  std::vector<AmatInfo> amats;
  std::vector<ScheduleStep> steps;
  // unroll provenance of the repeat block (used by liveness analysis)
  int repeat_start = -1;
  int repeat_len = 0;
  int repeat_count = 1;

  int distinct_storage_count() const;
};

struct LoopInfo {
  int start = 0;   // first folded step
  int period = 0;  // steps per iteration
  int count = 1;   // detected repetitions
  bool folded() const { return count > 1 && period > 0; }
};

// One step per node update, program order, repeat blocks unrolled.
Schedule build_schedule(const GraphProgram& g);

// Fills def_step/last_use. Identifiers read by more than one unrolled
// iteration are loop-invariant live-ins and stay live through the
// whole repeat region.
void analyze_liveness(Schedule& s);

// Remaps output identifiers onto dead ones (highest score = latest
// death step, ties to the lowest identifier). Stream-bound identifiers
// are never reuse targets, so folded loop bodies stay address-identical.
void optimize_memory(Schedule& s);

// Finds the maximal contiguous repetition (identical up to stream
// indices advancing by one per block).
LoopInfo compress_loops(const Schedule& s);

// Expands a folded region back into explicit steps (storage-level view).
std::vector<ScheduleStep> expand_loop(const Schedule& s, const LoopInfo& loop);

struct Binding {
  std::string name;
  isa::Bank bank{};
  int addr = 0;
  int stream_count = 0;  // >0: consecutive slots starting at addr
  bool is_input = false;
  bool is_output = false;
};

struct InitDirective {
  isa::Bank bank{};
  int addr = 0;
  bool identity = false;  // identity state matrix vs zero message
  int rows = 0, cols = 0;
};

struct CompileOptions {
  bool optimize = true;
  bool fold_loops = true;
};

struct CompileResult {
  Schedule schedule;
  Schedule unoptimized;
  LoopInfo loop;
  std::vector<isa::Instruction> instructions;
  std::string assembly;
  isa::ProgramImage image;
  std::vector<Binding> bindings;
  std::vector<InitDirective> inits;
  std::string schedule_dump;  // textual before/after view
};

// Assigns memory slots and lowers the schedule to FGP assembly
// (prg/loop prologue plus per-node instruction groups).
CompileResult lower(Schedule s, const LoopInfo& loop, CompileOptions opts);

CompileResult compile_graph(const std::string& fgg_text,
                            CompileOptions opts = {});

// Interface-file text (.fgi): init directives plus input/output slot
// bindings, consumed by the run/demo front ends.
std::string interface_to_string(const CompileResult& r);
struct InterfaceFile {
  std::vector<InitDirective> inits;
  std::vector<Binding> bindings;
};
InterfaceFile interface_from_string(const std::string& text);

}  // namespace fgp::compiler
