#include "fgp/report.hpp"

#include <cstdio>
#include <sstream>

namespace fgp::report {

std::string RunReport::to_text() const {
  char buf[128];
  std::ostringstream os;
  os << "run report\n";
  os << "  total_cycles             = " << total_cycles << "\n";
  os << "  instructions             = " << instructions << "\n";
  os << "  cycles_per_compound_node = " << cycles_per_compound_node << "\n";
  std::snprintf(buf, sizeof(buf), "  clock_mhz                = %g\n",
                clock_mhz);
  os << buf;
  std::snprintf(buf, sizeof(buf), "  throughput_cn_per_s      = %.6g\n",
                throughput());
  os << buf;
  std::snprintf(buf, sizeof(buf),
                "  normalized_throughput    = %.6g  (delay-scaled x%.1f to "
                "the 40 nm node)\n",
                normalized_throughput(), kTechScaleFactor);
  os << buf;
  if (has_oracle) {
    std::snprintf(buf, sizeof(buf), "  max_abs_error_vs_oracle  = %.6g\n",
                  max_abs_error_vs_oracle);
    os << buf;
  }
  os << "  reference_dsp_cycles     = " << kDspReferenceCycles
     << "  (published figure, external comparison constant)\n";
  if (!breakdown.empty()) {
    os << "breakdown (per executed instruction):\n";
    for (const auto& b : breakdown) {
      os << "  pc=" << b.pc << " " << isa::opcode_name(b.opcode)
         << " cycles=" << b.cycles << "\n";
    }
  }
  return os.str();
}

std::string RunReport::to_key_values() const {
  char buf[96];
  std::ostringstream os;
  os << "total_cycles=" << total_cycles << "\n";
  os << "instructions=" << instructions << "\n";
  os << "cycles_per_compound_node=" << cycles_per_compound_node << "\n";
  std::snprintf(buf, sizeof(buf), "clock_mhz=%g\n", clock_mhz);
  os << buf;
  std::snprintf(buf, sizeof(buf), "throughput_cn_per_s=%.9g\n", throughput());
  os << buf;
  std::snprintf(buf, sizeof(buf), "normalized_throughput_cn_per_s=%.9g\n",
                normalized_throughput());
  os << buf;
  std::snprintf(buf, sizeof(buf), "max_abs_error_vs_oracle=%.9g\n",
                max_abs_error_vs_oracle);
  os << buf;
  os << "reference_dsp_cycles=" << kDspReferenceCycles << "\n";
  return os.str();
}

isa::ProgramImage compound_microprogram() {
  // prg 1; mma A*x; mms y + S A^H; fad d=x; smm -> slot 2
  return isa::assemble(
      "prg 1\n"
      "mma 0 0 0 0 1 0 0 0 1\n"
      "mms 1 0 0 0 1 1 0 1 9\n"
      "fad 1 0 1 0\n"
      "smm 1 2 1 0\n");
}

void load_compound_fixture(machine::Machine& m) {
  const int n = 4;  // the metric is defined on the 4x4 compound node
  gmp::CMatrix a = gmp::CMatrix::Identity(n, n);
  gmp::CVector mx(n), my(n);
  for (int i = 0; i < n; ++i) {
    mx(i) = gmp::Complex(0.25 + 0.05 * i, -0.125);
    my(i) = gmp::Complex(0.5, 0.03 * i);
  }
  gmp::CMatrix vx = gmp::CMatrix::Identity(n, n);
  gmp::CMatrix vy = 0.5 * gmp::CMatrix::Identity(n, n);
  m.write_message(0, gmp::mean_cov(mx, vx));
  m.write_message(1, gmp::mean_cov(my, vy));
  m.write_state_matrix(0, a);
}

std::uint64_t compound_node_cycles(const machine::Config& cfg) {
  machine::Config c = cfg;
  c.array_size = std::max(c.array_size, 4);
  machine::Machine m(c);
  load_compound_fixture(m);
  m.load_program(compound_microprogram());
  auto r = m.start_program(1, 0);
  if (!r.status.ok) {
    throw Error(r.status.code,
                "compound microprogram failed: " + r.status.detail);
  }
  return r.total_cycles;
}

}  // namespace fgp::report
