#pragma once

#include <string>
#include <vector>

#include "fgp/machine.hpp"

namespace fgp::report {

// Technology normalization used by the throughput comparison: the
// reference DSP figure is quoted at a 40 nm node, this design at 180 nm,
// and delay scales roughly with feature size (180/40 = 4.5).
inline constexpr double kTechScaleFactor = 4.5;
// External comparison constant: published compound-node update cycle
// count of the reference DSP implementation.
inline constexpr std::uint64_t kDspReferenceCycles = 1076;

struct RunReport {
  std::uint64_t total_cycles = 0;
  std::uint64_t instructions = 0;
  std::uint64_t cycles_per_compound_node = 0;
  double clock_mhz = 130.0;
  double max_abs_error_vs_oracle = 0.0;
  bool has_oracle = false;
  std::vector<machine::InstrCycles> breakdown;

  // compound-node updates per second at the configured clock
  double throughput() const {
    return cycles_per_compound_node
               ? clock_mhz * 1e6 / double(cycles_per_compound_node)
               : 0.0;
  }
  // throughput scaled to the reference DSP's technology node
  double normalized_throughput() const {
    return kTechScaleFactor * throughput();
  }

  std::string to_text() const;
  std::string to_key_values() const;
};

// The canonical 4x4 compound-node microprogram (prg, mma, mms, fad,
// smm) with a fixed well-conditioned fixture; the regression anchor for
// cycle accounting.
isa::ProgramImage compound_microprogram();
void load_compound_fixture(machine::Machine& m);
std::uint64_t compound_node_cycles(const machine::Config& cfg);

}  // namespace fgp::report
