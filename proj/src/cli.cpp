#include "fgp/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "fgp/compiler.hpp"
#include "fgp/msgio.hpp"
#include "fgp/report.hpp"

namespace fgp::cli {

namespace {

struct GlobalOpts {
  std::string fxformat = "Q8.24";
  int array_size = 4;
  bool trace = false;
  std::uint64_t seed = 1;
  double clock_mhz = 130.0;
};

machine::Config make_config(const GlobalOpts& g) {
  machine::Config cfg;
  cfg.fmt = fxp::parse_format(g.fxformat);
  cfg.array_size = g.array_size;
  return cfg;
}

std::string stem_of(const std::string& path) {
  auto slash = path.find_last_of('/');
  auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return path;
  }
  return path.substr(0, dot);
}

// ------------------------------------------------------------- compile

int cmd_compile(const std::string& input, const std::string& out_base,
                bool no_optimize, bool no_fold, bool dump_schedule) {
  compiler::CompileOptions opts;
  opts.optimize = !no_optimize;
  opts.fold_loops = !no_fold;
  compiler::CompileResult r =
      compiler::compile_graph(msgio::load_file(input), opts);
  std::string base = out_base.empty() ? stem_of(input) : out_base;
  msgio::save_file(base + ".fga", r.assembly);
  isa::save_image(base + ".fgb", r.image);
  msgio::save_file(base + ".fgi", compiler::interface_to_string(r));
  if (dump_schedule) std::cout << r.schedule_dump;
  std::cout << "compiled " << input << ": " << r.instructions.size()
            << " instructions, " << r.schedule.distinct_storage_count()
            << " identifiers -> " << base << ".fga/.fgb/.fgi\n";
  return 0;
}

// ------------------------------------------------------------ asm/disasm

int cmd_asm(const std::string& input, std::string output) {
  isa::ProgramImage img = isa::assemble(msgio::load_file(input));
  if (output.empty()) output = stem_of(input) + ".fgb";
  isa::save_image(output, img);
  std::cout << "assembled " << img.words.size() << " words -> " << output
            << "\n";
  return 0;
}

int cmd_disasm(const std::string& input, const std::string& output) {
  std::string text = isa::disassemble(isa::load_image(input));
  if (output.empty()) {
    std::cout << text;
  } else {
    msgio::save_file(output, text);
  }
  return 0;
}

// ----------------------------------------------------------------- run

void apply_interface_inits(machine::Machine& m,
                           const compiler::InterfaceFile& iface) {
  for (const auto& init : iface.inits) {
    if (init.identity) {
      gmp::CMatrix eye = gmp::CMatrix::Identity(init.rows, init.rows);
      auto st = m.write_state_matrix(std::uint8_t(init.addr), eye);
      if (!st.ok) throw Error(st.code, st.detail);
    } else {
      gmp::GaussianMessage zero = gmp::mean_cov(
          gmp::CVector::Zero(init.rows),
          gmp::CMatrix::Zero(init.rows, init.rows));
      auto st = m.write_message(std::uint8_t(init.addr), zero);
      if (!st.ok) throw Error(st.code, st.detail);
    }
  }
}

struct WriteSpec {
  isa::Bank bank;
  std::uint8_t addr;
  std::string file;
};

WriteSpec parse_write_spec(const std::string& spec) {
  auto p1 = spec.find(':');
  auto p2 = spec.find(':', p1 == std::string::npos ? p1 : p1 + 1);
  if (p1 == std::string::npos || p2 == std::string::npos) {
    throw Error(ErrorCode::Argument,
                "expected bank:addr:file, got '" + spec + "'");
  }
  std::string bank_tok = spec.substr(0, p1);
  WriteSpec w;
  if (bank_tok == "msg") {
    w.bank = isa::Bank::MessageMem;
  } else if (bank_tok == "amat") {
    w.bank = isa::Bank::StateMatrixMem;
  } else {
    throw Error(ErrorCode::Argument, "bad bank '" + bank_tok + "'");
  }
  w.addr = std::uint8_t(std::stoul(spec.substr(p1 + 1, p2 - p1 - 1), nullptr, 16));
  w.file = spec.substr(p2 + 1);
  return w;
}

void machine_write_file(machine::Machine& m, const WriteSpec& w) {
  std::string text = msgio::load_file(w.file);
  std::istringstream ts(text);
  std::string first;
  ts >> first;
  machine::Status st;
  if (first == "msg") {
    st = m.write_message(w.addr, msgio::message_from_string(text));
  } else if (first == "mat") {
    st = m.write_state_matrix(w.addr, msgio::matrix_from_string(text));
  } else {
    st = m.write_words(w.bank, w.addr, msgio::hex_to_words(text));
  }
  if (!st.ok) throw Error(st.code, w.file + ": " + st.detail);
}

int cmd_run(const GlobalOpts& g, const std::string& image_path,
            const std::string& script, int prg, int sections,
            const std::string& init_file,
            const std::vector<std::string>& writes,
            const std::vector<std::string>& reads,
            const std::string& report_file, const std::string& expect_spec) {
  machine::Machine m(make_config(g));
  if (g.trace) m.set_trace(&std::cout);

  if (!script.empty()) {
    machine::TextPort port(m);
    std::ifstream in(script);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + script + "'");
    port.run_script(in, std::cout);
    return 0;
  }

  if (image_path.empty()) {
    throw Error(ErrorCode::Argument, "run needs an image or --script");
  }
  auto st = m.load_program(isa::load_image(image_path));
  if (!st.ok) throw Error(st.code, st.detail);
  if (!init_file.empty()) {
    apply_interface_inits(
        m, compiler::interface_from_string(msgio::load_file(init_file)));
  }
  for (const auto& w : writes) machine_write_file(m, parse_write_spec(w));

  machine::RunResult res = m.start_program(prg, sections);
  if (!res.status.ok) {
    std::cerr << res.status.reply() << "\n";
    return 1;
  }

  report::RunReport rep;
  rep.total_cycles = res.total_cycles;
  rep.instructions = res.instructions;
  rep.clock_mhz = g.clock_mhz;
  rep.breakdown = res.breakdown;
  rep.cycles_per_compound_node = report::compound_node_cycles(make_config(g));

  if (!expect_spec.empty()) {
    auto colon = expect_spec.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::Argument, "expected addr:file for --expect");
    }
    std::uint8_t addr =
        std::uint8_t(std::stoul(expect_spec.substr(0, colon), nullptr, 16));
    gmp::GaussianMessage want = msgio::message_from_string(
        msgio::load_file(expect_spec.substr(colon + 1)));
    const machine::MsgSlot* slot = m.msg_slot(addr);
    if (!slot || slot->dim == 0) {
      throw Error(ErrorCode::AddressFault, "expected slot is empty");
    }
    gmp::GaussianMessage got = machine::dequantize_message(*slot);
    double err = (got.mean - want.mean).cwiseAbs().maxCoeff();
    err = std::max(err, (got.cov - want.cov).cwiseAbs().maxCoeff());
    rep.max_abs_error_vs_oracle = err;
    rep.has_oracle = true;
  }

  for (const auto& r : reads) {
    auto colon = r.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::Argument, "expected bank:addr for --read");
    }
    std::string bank_tok = r.substr(0, colon);
    isa::Bank bank = bank_tok == "amat" ? isa::Bank::StateMatrixMem
                                        : isa::Bank::MessageMem;
    std::uint8_t addr =
        std::uint8_t(std::stoul(r.substr(colon + 1), nullptr, 16));
    auto rr = m.read_words(bank, addr);
    if (!rr.status.ok) throw Error(rr.status.code, rr.status.detail);
    std::cout << "# " << bank_tok << " " << r.substr(colon + 1) << "\n"
              << msgio::words_to_hex(rr.words);
  }

  std::cout << rep.to_text();
  if (!report_file.empty()) msgio::save_file(report_file, rep.to_key_values());
  return 0;
}

// -------------------------------------------------------------- verify

gmp::CMatrix random_matrix(std::mt19937_64& rng, int rows, int cols,
                           double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  gmp::CMatrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = gmp::Complex(dist(rng), dist(rng));
  return m;
}

gmp::CMatrix random_spd(std::mt19937_64& rng, int n, double scale = 1.0) {
  gmp::CMatrix m = random_matrix(rng, n, n, scale);
  return gmp::hermitianize(m * m.adjoint() / double(n)) +
         0.25 * scale * gmp::CMatrix::Identity(n, n);
}

// well-conditioned general matrix: random + dominant diagonal
gmp::CMatrix random_well_conditioned(std::mt19937_64& rng, int n) {
  return random_matrix(rng, n, n, 0.5) + 2.0 * gmp::CMatrix::Identity(n, n);
}

// independent full-pivot Gauss-Jordan inverse used as the verify oracle
gmp::CMatrix gauss_jordan_inverse(gmp::CMatrix a) {
  const int n = int(a.rows());
  gmp::CMatrix inv = gmp::CMatrix::Identity(n, n);
  for (int col = 0; col < n; ++col) {
    int best = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(best, col))) best = r;
    }
    if (a(best, col) == gmp::Complex(0, 0)) {
      throw SingularError("gauss_jordan_inverse: singular");
    }
    a.row(col).swap(a.row(best));
    inv.row(col).swap(inv.row(best));
    gmp::Complex p = a(col, col);
    a.row(col) /= p;
    inv.row(col) /= p;
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      gmp::Complex f = a(r, col);
      a.row(r) -= f * a.row(col);
      inv.row(r) -= f * inv.row(col);
    }
  }
  return inv;
}

int cmd_verify(const GlobalOpts& g, int trials, bool inject_fault) {
  std::mt19937_64 rng(g.seed);
  bool all_ok = true;
  auto report = [&](const char* name, bool ok, double worst,
                    const char* unit) {
    std::printf("%-34s %s  worst=%.3g %s\n", name, ok ? "PASS" : "FAIL",
                worst, unit);
    all_ok = all_ok && ok;
  };

  {  // faddeev vs direct-inverse oracle
    double worst = 0;
    std::uniform_int_distribution<int> dim(1, 8);
    for (int t = 0; t < trials; ++t) {
      int q = dim(rng), p = dim(rng), mm = dim(rng);
      gmp::CMatrix a = random_well_conditioned(rng, q);
      gmp::CMatrix b = random_matrix(rng, q, mm);
      gmp::CMatrix c = random_matrix(rng, p, q);
      gmp::CMatrix d = random_matrix(rng, p, mm);
      gmp::CMatrix got = gmp::faddeev(a, b, c, d);
      gmp::CMatrix want = d - c * gauss_jordan_inverse(a) * b;
      double err = (got - want).norm() / std::max(1e-30, want.norm());
      worst = std::max(worst, err);
    }
    report("faddeev vs direct inverse", worst <= 1e-9, worst, "rel");
  }

  {  // compound update: direct vs faddeev block form
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
      int n = 4;
      gmp::CMatrix a = random_matrix(rng, n, n, 0.5);
      gmp::GaussianMessage x =
          gmp::mean_cov(random_matrix(rng, n, 1, 0.5), random_spd(rng, n));
      gmp::GaussianMessage y =
          gmp::mean_cov(random_matrix(rng, n, 1, 0.5), random_spd(rng, n));
      gmp::GaussianMessage direct =
          gmp::compound_mult_eq_update(x, y, {a});
      gmp::CMatrix pivot = y.cov + a * x.cov * a.adjoint();
      gmp::CMatrix bb(n, n + 1);
      bb << a * x.cov, a * x.mean - y.mean;
      gmp::CMatrix dd(n, n + 1);
      dd << x.cov, x.mean;
      gmp::CMatrix res = gmp::faddeev(pivot, bb, x.cov * a.adjoint(), dd);
      double err = (res.leftCols(n) - direct.cov).cwiseAbs().maxCoeff();
      err = std::max(err,
                     (res.col(n) - direct.mean).cwiseAbs().maxCoeff());
      worst = std::max(worst, err);
    }
    report("compound direct vs faddeev", worst <= 1e-9, worst, "abs");
  }

  {  // fixed-point machine vs floating reference on the compound node
    double worst = 0;
    bool deterministic = true;
    machine::Config cfg = make_config(g);
    cfg.array_size = std::max(cfg.array_size, 4);
    std::vector<std::uint32_t> first_dump;
    const int runs = std::max(1, trials / 50);
    for (int t = 0; t < runs; ++t) {
      machine::Machine m(cfg);
      report::load_compound_fixture(m);
      gmp::GaussianMessage x =
          machine::dequantize_message(*m.msg_slot(0));
      gmp::GaussianMessage y =
          machine::dequantize_message(*m.msg_slot(1));
      m.load_program(report::compound_microprogram());
      auto r = m.start_program(1, 0);
      if (!r.status.ok) throw Error(r.status.code, r.status.detail);
      auto dump = m.read_words(isa::Bank::MessageMem, 2).words;
      if (inject_fault && t == 0 && dump.size() > 3) dump[3] ^= 0x400;
      if (t == 0) {
        first_dump = dump;
      } else if (dump != first_dump) {
        deterministic = false;
      }
      gmp::GaussianMessage got =
          machine::dequantize_message(machine::msg_slot_from_words(
              dump, cfg.fmt));
      gmp::CMatrix eye = gmp::CMatrix::Identity(4, 4);
      gmp::GaussianMessage want = gmp::compound_mult_eq_update(x, y, {eye});
      double err = (got.mean - want.mean).cwiseAbs().maxCoeff();
      err = std::max(err, (got.cov - want.cov).cwiseAbs().maxCoeff());
      worst = std::max(worst, err);
    }
    bool ok = worst <= 1e-3 && deterministic;
    report("machine vs floating oracle", ok, worst, "abs");
    if (!deterministic) std::printf("  reruns were not bit-identical\n");
    if (inject_fault && !ok) {
      std::printf("  counterexample dump (word 3 corrupted):\n");
      for (size_t i = 0; i < std::min<size_t>(first_dump.size(), 8); ++i) {
        std::printf("    %08x\n", first_dump[i]);
      }
    }
  }

  std::printf(inject_fault ? "verify: fault injection %s\n"
                           : "verify: %s\n",
              all_ok ? "PASS" : "FAIL");
  return all_ok ? 0 : 1;
}

// ------------------------------------------------------------ demo-rls

struct RlsProblem {
  int taps = 4;
  int sections = 2;
  gmp::GaussianMessage prior;
  gmp::GaussianMessage noise;
  std::vector<gmp::StateMatrix> rows;      // 1 x taps training rows
  std::vector<gmp::GaussianMessage> obs;   // scalar observations
  gmp::CVector channel;
};

RlsProblem make_rls_problem(std::uint64_t seed, int sections) {
  std::mt19937_64 rng(seed);
  RlsProblem p;
  p.sections = sections;
  std::uniform_int_distribution<int> bit(0, 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  p.channel = gmp::CVector(p.taps);
  for (int i = 0; i < p.taps; ++i) {
    p.channel(i) = gmp::Complex(gauss(rng) * 0.25, gauss(rng) * 0.25);
  }
  p.prior = gmp::mean_cov(gmp::CVector::Zero(p.taps),
                          gmp::CMatrix::Identity(p.taps, p.taps));
  const double noise_var = 0.1;
  p.noise = gmp::mean_cov(gmp::CVector::Zero(1),
                          noise_var * gmp::CMatrix::Identity(1, 1));
  for (int k = 0; k < sections; ++k) {
    gmp::CMatrix u(1, p.taps);
    for (int i = 0; i < p.taps; ++i) {
      u(0, i) = gmp::Complex(bit(rng) ? 0.5 : -0.5, bit(rng) ? 0.5 : -0.5);
    }
    p.rows.push_back({u});
    gmp::Complex noise_sample(gauss(rng) * std::sqrt(noise_var / 2),
                              gauss(rng) * std::sqrt(noise_var / 2));
    gmp::Complex y = (u * p.channel)(0, 0) + noise_sample;
    gmp::CVector my(1);
    my(0) = y;
    p.obs.push_back(gmp::mean_cov(my, gmp::CMatrix::Zero(1, 1)));
  }
  return p;
}

std::string rls_graph_text(int sections) {
  std::ostringstream os;
  os << "# recursive least-squares channel estimation\n";
  os << "graph rls\n";
  os << "msg x 4\n";
  os << "msg noise 1\n";
  os << "msg obs 1 stream " << sections << "\n";
  os << "amat U 1 4 stream " << sections << "\n";
  os << "in x noise obs U\n";
  os << "out x\n";
  os << "repeat " << sections << "\n";
  os << "  y = add_b(obs, noise)\n";
  os << "  x = mult_eq_f(x, y, U)\n";
  os << "end\n";
  return os.str();
}

int cmd_demo_rls(const GlobalOpts& g, int sections,
                 const std::string& outdir, const std::string& report_file) {
  RlsProblem prob = make_rls_problem(g.seed, sections);

  std::string dir = outdir;
  if (!dir.empty() && dir.back() != '/') dir += '/';

  std::string fgg = rls_graph_text(sections);
  compiler::CompileResult comp = compiler::compile_graph(fgg);
  if (!dir.empty()) {
    msgio::save_file(dir + "rls.fgg", fgg);
    msgio::save_file(dir + "rls.fga", comp.assembly);
    isa::save_image(dir + "rls.fgb", comp.image);
    msgio::save_file(dir + "rls.fgi", compiler::interface_to_string(comp));
  }

  machine::Machine m(make_config(g));
  if (g.trace) m.set_trace(&std::cout);
  auto st = m.load_program(comp.image);
  if (!st.ok) throw Error(st.code, st.detail);
  compiler::InterfaceFile iface{comp.inits, comp.bindings};
  apply_interface_inits(m, iface);

  int out_addr = -1;
  for (const auto& b : comp.bindings) {
    machine::Status ws = machine::Status::okay();
    if (b.is_input && b.bank == isa::Bank::MessageMem) {
      if (b.name == "x") {
        ws = m.write_message(std::uint8_t(b.addr), prob.prior);
      } else if (b.name == "noise") {
        ws = m.write_message(std::uint8_t(b.addr), prob.noise);
      } else if (b.name == "obs") {
        for (int k = 0; k < sections; ++k) {
          ws = m.write_message(std::uint8_t(b.addr + k), prob.obs[k]);
          if (!ws.ok) break;
        }
      }
    } else if (b.is_input && b.bank == isa::Bank::StateMatrixMem &&
               b.name == "U") {
      for (int k = 0; k < sections; ++k) {
        ws = m.write_state_matrix(std::uint8_t(b.addr + k), prob.rows[k].a);
        if (!ws.ok) break;
      }
    }
    if (b.is_output) out_addr = b.addr;
    if (!ws.ok) throw Error(ws.code, b.name + ": " + ws.detail);
  }
  if (out_addr < 0) throw Error(ErrorCode::Runtime, "no output binding");

  machine::RunResult res = m.start_program(1, sections);
  if (!res.status.ok) {
    std::cerr << res.status.reply() << "\n";
    return 1;
  }

  // floating reference and batch solution
  auto posteriors =
      gmp::run_rls_reference(prob.rows, prob.obs, prob.prior, prob.noise);
  const gmp::GaussianMessage& want = posteriors.back();
  gmp::GaussianMessage got =
      machine::dequantize_message(*m.msg_slot(std::uint8_t(out_addr)));
  double err = (got.mean - want.mean).cwiseAbs().maxCoeff();
  err = std::max(err, (got.cov - want.cov).cwiseAbs().maxCoeff());

  report::RunReport rep;
  rep.total_cycles = res.total_cycles;
  rep.instructions = res.instructions;
  rep.clock_mhz = g.clock_mhz;
  rep.cycles_per_compound_node = report::compound_node_cycles(make_config(g));
  rep.max_abs_error_vs_oracle = err;
  rep.has_oracle = true;
  rep.breakdown = res.breakdown;

  std::cout << "rls demo: " << sections << " sections, seed " << g.seed
            << ", " << fxp::format_name(make_config(g).fmt) << "\n";
  std::cout << "  estimated channel:";
  for (int i = 0; i < prob.taps; ++i) {
    std::cout << " " << msgio::complex_token(got.mean(i));
  }
  std::cout << "\n  true channel:     ";
  for (int i = 0; i < prob.taps; ++i) {
    std::cout << " " << msgio::complex_token(prob.channel(i));
  }
  std::cout << "\n" << rep.to_text();
  if (!report_file.empty()) msgio::save_file(report_file, rep.to_key_values());
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"factor-graph processor toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--fxformat", g.fxformat, "fixed-point format, e.g. Q8.24");
  app.add_option("--array-size", g.array_size, "systolic array size (1..8)")
      ->check(CLI::Range(1, 8));
  app.add_flag("--trace", g.trace, "emit per-cycle PE activity");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--clock-mhz", g.clock_mhz, "clock for throughput reporting");

  auto* compile = app.add_subcommand("compile", "compile a .fgg graph program");
  std::string in_path, out_base;
  bool no_opt = false, no_fold = false, dump_sched = false;
  compile->add_option("input", in_path, "graph program (.fgg)")->required();
  compile->add_option("-o,--output", out_base, "output base name");
  compile->add_flag("--no-optimize", no_opt, "skip identifier remapping");
  compile->add_flag("--no-fold", no_fold, "skip loop compression");
  compile->add_flag("--dump-schedule", dump_sched,
                    "print before/after schedules");

  auto* asm_cmd = app.add_subcommand("asm", "assemble .fga to .fgb");
  std::string asm_in, asm_out;
  asm_cmd->add_option("input", asm_in, "assembly source (.fga)")->required();
  asm_cmd->add_option("-o,--output", asm_out, "binary image (.fgb)");

  auto* disasm_cmd = app.add_subcommand("disasm", "disassemble .fgb");
  std::string dis_in, dis_out;
  disasm_cmd->add_option("input", dis_in, "binary image (.fgb)")->required();
  disasm_cmd->add_option("-o,--output", dis_out, "assembly output");

  auto* run_cmd = app.add_subcommand("run", "execute a program image");
  std::string run_image, run_script, run_init, run_report, run_expect;
  int run_prg = 1, run_sections = 0;
  std::vector<std::string> run_writes, run_reads;
  run_cmd->add_option("image", run_image, "program image (.fgb)");
  run_cmd->add_option("--script", run_script,
                      "command protocol script (LOAD/START/WRITE/READ/STATUS)");
  run_cmd->add_option("--prg", run_prg, "program index");
  run_cmd->add_option("--sections", run_sections,
                      "section count for loop instructions with count 0");
  run_cmd->add_option("--init", run_init, "interface file (.fgi) to preload");
  run_cmd->add_option("--write", run_writes, "bank:addr:file input")
      ->take_all();
  run_cmd->add_option("--read", run_reads, "bank:addr to dump after the run")
      ->take_all();
  run_cmd->add_option("--report", run_report, "key=value report file");
  run_cmd->add_option("--expect", run_expect,
                      "addr:file floating reference for error reporting");

  auto* verify_cmd =
      app.add_subcommand("verify", "randomized oracle equivalence suites");
  int trials = 500;
  bool inject = false;
  verify_cmd->add_option("--trials", trials, "trial count");
  verify_cmd->add_flag("--inject-fault", inject,
                       "negative control: corrupt one result");

  auto* demo_cmd =
      app.add_subcommand("demo-rls", "channel-estimation demo, end to end");
  int demo_sections = 2;
  std::string demo_outdir, demo_report;
  demo_cmd->add_option("--sections", demo_sections, "number of FG sections")
      ->check(CLI::Range(1, 32));
  demo_cmd->add_option("--outdir", demo_outdir,
                       "directory for generated fgg/fga/fgb/fgi");
  demo_cmd->add_option("--report", demo_report, "key=value report file");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*compile) {
      return cmd_compile(in_path, out_base, no_opt, no_fold, dump_sched);
    }
    if (*asm_cmd) return cmd_asm(asm_in, asm_out);
    if (*disasm_cmd) return cmd_disasm(dis_in, dis_out);
    if (*run_cmd) {
      return cmd_run(g, run_image, run_script, run_prg, run_sections,
                     run_init, run_writes, run_reads, run_report, run_expect);
    }
    if (*verify_cmd) return cmd_verify(g, trials, inject);
    if (*demo_cmd) {
      return cmd_demo_rls(g, demo_sections, demo_outdir, demo_report);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << error_code_name(e.code()) << "] " << e.what()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.push_back(argv[i]);
  return run(args);
}

}  // namespace fgp::cli
