#include "fgp/compiler.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace fgp::compiler {

using gmp::Direction;
using gmp::NodeKind;

// ---------------------------------------------------------------- parse

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream is(line.substr(0, line.find('#')));
  std::vector<std::string> toks;
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

bool parse_int(const std::string& tok, int* out) {
  char* end = nullptr;
  long v = std::strtol(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0') return false;
  *out = int(v);
  return true;
}

// "<out> = <verb>(<a>, <b>, ...)"
Statement parse_statement(const std::vector<std::string>& toks, int line) {
  std::string joined;
  for (size_t i = 0; i < toks.size(); ++i) joined += toks[i] + (i + 1 < toks.size() ? " " : "");
  auto eq = joined.find('=');
  auto open = joined.find('(');
  auto close = joined.rfind(')');
  if (eq == std::string::npos || open == std::string::npos ||
      close == std::string::npos || close < open) {
    throw SyntaxError(line, "expected '<out> = <verb>(<args>)'");
  }
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t");
    size_t b = s.find_last_not_of(" \t");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  Statement st;
  st.line = line;
  st.output = trim(joined.substr(0, eq));
  st.verb = trim(joined.substr(eq + 1, open - eq - 1));
  std::string args = joined.substr(open + 1, close - open - 1);
  std::istringstream as(args);
  std::string arg;
  while (std::getline(as, arg, ',')) {
    arg = trim(arg);
    if (arg.empty()) throw SyntaxError(line, "empty argument");
    st.args.push_back(arg);
  }
  if (st.output.empty() || st.verb.empty()) {
    throw SyntaxError(line, "expected '<out> = <verb>(<args>)'");
  }
  return st;
}

}  // namespace

GraphProgram parse_graph(const std::string& text) {
  GraphProgram g;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  bool in_repeat = false;
  bool repeat_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    const std::string& kw = toks[0];
    if (kw == "graph") {
      if (toks.size() != 2) throw SyntaxError(line_no, "graph <name>");
      g.name = toks[1];
    } else if (kw == "msg") {
      MsgDecl d;
      if (toks.size() != 3 && !(toks.size() == 5 && toks[3] == "stream")) {
        throw SyntaxError(line_no, "msg <name> <dim> [stream <k>]");
      }
      d.name = toks[1];
      if (!parse_int(toks[2], &d.dim) || d.dim < 1 || d.dim > 8) {
        throw SyntaxError(line_no, "bad msg dimension '" + toks[2] + "'");
      }
      if (toks.size() == 5 &&
          (!parse_int(toks[4], &d.stream) || d.stream < 1)) {
        throw SyntaxError(line_no, "bad stream count '" + toks[4] + "'");
      }
      g.msgs.push_back(d);
    } else if (kw == "amat") {
      AmatDecl d;
      if (toks.size() != 4 && !(toks.size() == 6 && toks[4] == "stream")) {
        throw SyntaxError(line_no, "amat <name> <rows> <cols> [stream <k>]");
      }
      d.name = toks[1];
      if (!parse_int(toks[2], &d.rows) || !parse_int(toks[3], &d.cols) ||
          d.rows < 1 || d.cols < 1 || d.rows > 8 || d.cols > 8) {
        throw SyntaxError(line_no, "bad amat shape");
      }
      if (toks.size() == 6 &&
          (!parse_int(toks[5], &d.stream) || d.stream < 1)) {
        throw SyntaxError(line_no, "bad stream count '" + toks[5] + "'");
      }
      g.amats.push_back(d);
    } else if (kw == "in") {
      g.inputs.insert(g.inputs.end(), toks.begin() + 1, toks.end());
    } else if (kw == "out") {
      g.outputs.insert(g.outputs.end(), toks.begin() + 1, toks.end());
    } else if (kw == "repeat") {
      int k = 0;
      if (toks.size() != 2 || !parse_int(toks[1], &k) || k < 1) {
        throw SyntaxError(line_no, "repeat <count>");
      }
      if (repeat_seen) {
        throw SyntaxError(line_no, "only one repeat block is supported");
      }
      in_repeat = true;
      repeat_seen = true;
      g.repeat_count = k;
    } else if (kw == "end") {
      if (!in_repeat) throw SyntaxError(line_no, "'end' without repeat");
      in_repeat = false;
    } else {
      Statement st = parse_statement(toks, line_no);
      if (in_repeat) {
        g.body.push_back(st);
      } else if (repeat_seen) {
        g.tail.push_back(st);
      } else {
        g.head.push_back(st);
      }
    }
  }
  if (in_repeat) throw SyntaxError(line_no, "repeat block not closed");
  return g;
}

// ------------------------------------------------------- build_schedule

namespace {

struct Builder {
  const GraphProgram& g;
  Schedule s;
  std::map<std::string, int> msg_decl;       // name -> index in g.msgs
  std::map<std::string, int> amat_decl;      // name -> index in g.amats
  std::map<std::string, int> msg_group;      // name -> stream group id (msgs)
  std::map<std::string, int> amat_group;
  std::map<std::string, std::vector<int>> msg_instances;   // stream name -> ids
  std::map<std::string, std::vector<int>> amat_instances;  // stream name -> idx
  std::map<std::string, int> env;            // plain msg name -> current id
  std::map<std::string, int> amat_plain;     // plain amat name -> idx
  std::map<std::string, int> version;
  std::set<std::string> input_set, output_set;
  int next_group = 0;

  explicit Builder(const GraphProgram& graph) : g(graph) {
    input_set.insert(g.inputs.begin(), g.inputs.end());
    output_set.insert(g.outputs.begin(), g.outputs.end());
  }

  int new_message(const std::string& name, int dim, bool ext_in, int group,
                  int pos) {
    MessageInfo info;
    info.name = name;
    info.dim = dim;
    info.external_in = ext_in;
    info.stream_group = group;
    info.stream_pos = pos;
    s.messages.push_back(info);
    return int(s.messages.size()) - 1;
  }

  void declare() {
    for (size_t i = 0; i < g.msgs.size(); ++i) {
      const MsgDecl& d = g.msgs[i];
      if (msg_decl.count(d.name) || amat_decl.count(d.name)) {
        throw SyntaxError(0, "duplicate declaration '" + d.name + "'");
      }
      msg_decl[d.name] = int(i);
      bool ext_in = input_set.count(d.name) > 0;
      if (d.stream > 0) {
        if (!ext_in) {
          throw SyntaxError(0, "stream msg '" + d.name +
                                   "' must be an external input");
        }
        if (output_set.count(d.name)) {
          throw SyntaxError(0, "stream msg '" + d.name +
                                   "' cannot be an output");
        }
        int group = next_group++;
        msg_group[d.name] = group;
        for (int k = 0; k < d.stream; ++k) {
          msg_instances[d.name].push_back(
              new_message(d.name + "[" + std::to_string(k) + "]", d.dim,
                          true, group, k));
        }
      } else {
        env[d.name] = ext_in ? new_message(d.name + ".0", d.dim, true, -1, 0)
                             : -1;
        version[d.name] = 0;
      }
    }
    for (size_t i = 0; i < g.amats.size(); ++i) {
      const AmatDecl& d = g.amats[i];
      if (msg_decl.count(d.name) || amat_decl.count(d.name)) {
        throw SyntaxError(0, "duplicate declaration '" + d.name + "'");
      }
      amat_decl[d.name] = int(i);
      if (d.stream > 0) {
        int group = next_group++;
        amat_group[d.name] = group;
        for (int k = 0; k < d.stream; ++k) {
          AmatInfo info;
          info.name = d.name + "[" + std::to_string(k) + "]";
          info.rows = d.rows;
          info.cols = d.cols;
          info.stream_group = group;
          info.stream_pos = k;
          s.amats.push_back(info);
          amat_instances[d.name].push_back(int(s.amats.size()) - 1);
        }
      } else {
        AmatInfo info;
        info.name = d.name;
        info.rows = d.rows;
        info.cols = d.cols;
        s.amats.push_back(info);
        amat_plain[d.name] = int(s.amats.size()) - 1;
      }
    }
    for (const std::string& name : g.inputs) {
      if (!msg_decl.count(name) && !amat_decl.count(name)) {
        throw SyntaxError(0, "undeclared input '" + name + "'");
      }
    }
    for (const std::string& name : g.outputs) {
      if (!msg_decl.count(name)) {
        throw SyntaxError(0, "output '" + name + "' is not a msg");
      }
    }
  }

  int read_msg(const std::string& name, int section, int line) {
    auto gi = msg_group.find(name);
    if (gi != msg_group.end()) {
      if (section < 0) {
        throw SyntaxError(line, "stream msg '" + name +
                                    "' used outside repeat");
      }
      const auto& inst = msg_instances[name];
      if (section >= int(inst.size())) {
        throw SyntaxError(line, "stream msg '" + name + "' has only " +
                                    std::to_string(inst.size()) +
                                    " instances");
      }
      return inst[section];
    }
    auto it = env.find(name);
    if (it == env.end()) {
      throw SyntaxError(line, "unknown message '" + name + "'");
    }
    if (it->second < 0) {
      throw SyntaxError(line, "message '" + name + "' read before definition");
    }
    return it->second;
  }

  int read_amat(const std::string& name, int section, int line) {
    auto gi = amat_group.find(name);
    if (gi != amat_group.end()) {
      if (section < 0) {
        throw SyntaxError(line, "stream amat '" + name +
                                    "' used outside repeat");
      }
      const auto& inst = amat_instances[name];
      if (section >= int(inst.size())) {
        throw SyntaxError(line, "stream amat '" + name + "' has only " +
                                    std::to_string(inst.size()) +
                                    " instances");
      }
      return inst[section];
    }
    auto it = amat_plain.find(name);
    if (it == amat_plain.end()) {
      throw SyntaxError(line, "unknown state matrix '" + name + "'");
    }
    return it->second;
  }

  int write_msg(const std::string& name, int dim, int line) {
    if (msg_group.count(name)) {
      throw SyntaxError(line, "cannot assign to stream msg '" + name + "'");
    }
    if (amat_decl.count(name)) {
      throw SyntaxError(line, "cannot assign to state matrix '" + name + "'");
    }
    auto di = msg_decl.find(name);
    if (di != msg_decl.end() && g.msgs[di->second].dim != dim) {
      throw SyntaxError(line, "dimension mismatch assigning '" + name + "'");
    }
    int ver = ++version[name];
    int id = new_message(name + "." + std::to_string(ver), dim, false, -1, 0);
    env[name] = id;
    return id;
  }

  void add_step(const Statement& st, int section) {
    ScheduleStep step;
    step.section = section;
    const std::string& v = st.verb;
    auto need_args = [&](size_t n) {
      if (st.args.size() != n) {
        throw SyntaxError(st.line, v + " takes " + std::to_string(n) +
                                       " arguments");
      }
    };
    if (v == "add_f" || v == "add_b") {
      need_args(2);
      int a = read_msg(st.args[0], section, st.line);
      int b = read_msg(st.args[1], section, st.line);
      if (s.messages[a].dim != s.messages[b].dim) {
        throw SyntaxError(st.line, "adder operands differ in dimension");
      }
      step.kind = v == "add_f" ? NodeKind::Adder : NodeKind::CompoundAddObs;
      step.direction = v == "add_f" ? Direction::Forward : Direction::Backward;
      step.inputs = {a, b};
      step.output = write_msg(st.output, s.messages[a].dim, st.line);
    } else if (v == "mult_eq_f") {
      need_args(3);
      int x = read_msg(st.args[0], section, st.line);
      int y = read_msg(st.args[1], section, st.line);
      int a = read_amat(st.args[2], section, st.line);
      if (s.amats[a].cols != s.messages[x].dim ||
          s.amats[a].rows != s.messages[y].dim) {
        throw SyntaxError(st.line, "mult_eq_f operands do not conform");
      }
      step.kind = NodeKind::CompoundMultEq;
      step.inputs = {x, y};
      step.amat = a;
      step.output = write_msg(st.output, s.messages[x].dim, st.line);
    } else if (v == "mult_f" || v == "mult_b") {
      need_args(2);
      int x = read_msg(st.args[0], section, st.line);
      int a = read_amat(st.args[1], section, st.line);
      bool fwd = v == "mult_f";
      int in_dim = fwd ? s.amats[a].cols : s.amats[a].rows;
      int out_dim = fwd ? s.amats[a].rows : s.amats[a].cols;
      if (in_dim != s.messages[x].dim) {
        throw SyntaxError(st.line, v + " operands do not conform");
      }
      step.kind = NodeKind::MatrixMult;
      step.direction = fwd ? Direction::Forward : Direction::Backward;
      step.inputs = {x};
      step.amat = a;
      step.output = write_msg(st.output, out_dim, st.line);
    } else if (v == "eq") {
      need_args(2);
      int a = read_msg(st.args[0], section, st.line);
      int b = read_msg(st.args[1], section, st.line);
      if (s.messages[a].dim != s.messages[b].dim) {
        throw SyntaxError(st.line, "eq operands differ in dimension");
      }
      step.kind = NodeKind::Equality;
      step.inputs = {a, b};
      step.output = write_msg(st.output, s.messages[a].dim, st.line);
    } else {
      throw SyntaxError(st.line, "unknown node kind '" + v + "'");
    }
    s.steps.push_back(step);
  }

  Schedule run() {
    declare();
    for (const auto& st : g.head) add_step(st, -1);
    if (g.repeat_count > 0) {
      s.repeat_start = int(s.steps.size());
      s.repeat_len = int(g.body.size());
      s.repeat_count = g.repeat_count;
      for (int iter = 0; iter < g.repeat_count; ++iter) {
        for (const auto& st : g.body) add_step(st, iter);
      }
    }
    for (const auto& st : g.tail) add_step(st, -1);
    // bind outputs to the final version of each name
    for (const std::string& name : g.outputs) {
      auto it = env.find(name);
      if (it == env.end() || it->second < 0) {
        throw SyntaxError(0, "output '" + name + "' never defined");
      }
      s.messages[it->second].external_out = true;
    }
    for (auto& m : s.messages) m.storage = -1;
    return std::move(s);
  }
};

}  // namespace

Schedule build_schedule(const GraphProgram& g) { return Builder(g).run(); }

int Schedule::distinct_storage_count() const {
  std::set<int> st;
  for (const auto& m : messages) {
    st.insert(m.storage >= 0 ? m.storage : int(&m - messages.data()));
  }
  return int(st.size());
}

// -------------------------------------------------------------- passes

void analyze_liveness(Schedule& s) {
  const int len = int(s.steps.size());
  for (auto& m : s.messages) {
    m.def_step = m.external_in ? -1 : -2;  // -2: not yet defined
    m.last_use = -1;
  }
  std::map<int, std::set<int>> sections_reading;  // id -> sections
  for (int i = 0; i < len; ++i) {
    const auto& step = s.steps[i];
    for (int id : step.inputs) {
      s.messages[id].last_use = std::max(s.messages[id].last_use, i);
      if (step.section >= 0) sections_reading[id].insert(step.section);
    }
    if (s.messages[step.output].def_step == -2) {
      s.messages[step.output].def_step = i;
    }
  }
  // external outputs stay live past the last step
  for (auto& m : s.messages) {
    if (m.external_out) m.last_use = len;
    if (m.def_step == -2) m.def_step = -1;
  }
  // loop-invariant live-ins: read by several iterations, so under a
  // folded loop they must survive the whole repeat region
  if (s.repeat_start >= 0 && s.repeat_count > 1) {
    int region_end = s.repeat_start + s.repeat_len * s.repeat_count - 1;
    for (auto& [id, secs] : sections_reading) {
      if (secs.size() > 1 && s.messages[id].stream_group < 0) {
        s.messages[id].last_use = std::max(s.messages[id].last_use,
                                           region_end);
      }
    }
  }
}

void optimize_memory(Schedule& s) {
  analyze_liveness(s);
  const int n = int(s.messages.size());
  for (int i = 0; i < n; ++i) s.messages[i].storage = i;

  // per storage: member ids, updated as outputs get remapped
  std::vector<std::vector<int>> members(n);
  for (int i = 0; i < n; ++i) members[i].push_back(i);

  auto storage_dead_at = [&](int st, int step) {
    for (int id : members[st]) {
      if (s.messages[id].last_use > step) return false;
    }
    return !members[st].empty();
  };
  auto storage_streamed = [&](int st) {
    for (int id : members[st]) {
      if (s.messages[id].stream_group >= 0) return true;
    }
    return false;
  };
  auto death_step = [&](int st) {
    int d = -1;
    for (int id : members[st]) d = std::max(d, s.messages[id].last_use);
    return d;
  };

  for (int i = 0; i < int(s.steps.size()); ++i) {
    const int out = s.steps[i].output;
    int best = -1, best_death = -1;
    for (int st = 0; st < n; ++st) {
      if (st == out || members[st].empty()) continue;
      if (storage_streamed(st)) continue;
      if (!storage_dead_at(st, i)) continue;
      // defined before this step, so the identifier really exists
      bool materialized = false;
      for (int id : members[st]) {
        if (s.messages[id].def_step < i) materialized = true;
      }
      if (!materialized) continue;
      int d = death_step(st);
      if (d > best_death) {
        best = st;
        best_death = d;
      }
    }
    if (best >= 0) {
      members[best].push_back(out);
      members[out].clear();
      s.messages[out].storage = best;
    }
  }

  // remapping must be a valid coloring of the interference graph
  for (int st = 0; st < n; ++st) {
    const auto& ids = members[st];
    for (size_t a = 0; a < ids.size(); ++a) {
      for (size_t b = a + 1; b < ids.size(); ++b) {
        const auto& ma = s.messages[ids[a]];
        const auto& mb = s.messages[ids[b]];
        const auto& first = ma.def_step <= mb.def_step ? ma : mb;
        const auto& second = ma.def_step <= mb.def_step ? mb : ma;
        if (second.def_step < first.last_use) {
          throw Error(ErrorCode::Runtime,
                      "optimize_memory produced overlapping lifetimes for '" +
                          first.name + "' and '" + second.name + "'");
        }
      }
    }
  }
}

namespace {

bool step_equivalent(const Schedule& s, const ScheduleStep& a,
                     const ScheduleStep& b) {
  if (a.kind != b.kind || a.direction != b.direction) return false;
  if (a.inputs.size() != b.inputs.size()) return false;
  auto storage = [&](int id) {
    return s.messages[id].storage >= 0 ? s.messages[id].storage : id;
  };
  for (size_t i = 0; i < a.inputs.size(); ++i) {
    const auto& ma = s.messages[a.inputs[i]];
    const auto& mb = s.messages[b.inputs[i]];
    if (ma.stream_group >= 0 || mb.stream_group >= 0) {
      if (ma.stream_group != mb.stream_group ||
          mb.stream_pos != ma.stream_pos + 1) {
        return false;
      }
    } else if (storage(a.inputs[i]) != storage(b.inputs[i])) {
      return false;
    }
  }
  if (storage(a.output) != storage(b.output)) return false;
  if ((a.amat < 0) != (b.amat < 0)) return false;
  if (a.amat >= 0) {
    const auto& aa = s.amats[a.amat];
    const auto& ab = s.amats[b.amat];
    if (aa.stream_group >= 0 || ab.stream_group >= 0) {
      if (aa.stream_group != ab.stream_group ||
          ab.stream_pos != aa.stream_pos + 1) {
        return false;
      }
    } else if (a.amat != b.amat) {
      return false;
    }
  }
  // the fad/smm encodings carry no stream bit, so a folded body cannot
  // stream the compound state operand or the destination
  if ((a.kind == NodeKind::CompoundMultEq || a.kind == NodeKind::Equality) &&
      s.messages[a.inputs[0]].stream_group >= 0) {
    return false;
  }
  return true;
}

}  // namespace

LoopInfo compress_loops(const Schedule& s) {
  const int len = int(s.steps.size());
  LoopInfo best;
  for (int period = 1; period <= len / 2; ++period) {
    for (int start = 0; start + 2 * period <= len; ++start) {
      int count = 1;
      while (start + (count + 1) * period <= len) {
        bool eq = true;
        for (int i = 0; i < period && eq; ++i) {
          eq = step_equivalent(s, s.steps[start + (count - 1) * period + i],
                               s.steps[start + count * period + i]);
        }
        if (!eq) break;
        ++count;
      }
      if (count >= 2) {
        int covered = count * period;
        int best_covered = best.count * best.period;
        if (covered > best_covered ||
            (covered == best_covered &&
             (start < best.start ||
              (start == best.start && period < best.period)))) {
          best = {start, period, count};
        }
      }
    }
  }
  if (!best.folded()) return LoopInfo{};
  return best;
}

std::vector<ScheduleStep> expand_loop(const Schedule& s,
                                      const LoopInfo& loop) {
  if (!loop.folded()) return s.steps;
  std::vector<ScheduleStep> out;
  // ids of a stream group ordered by position
  std::map<int, std::vector<int>> group_msgs, group_amats;
  for (int i = 0; i < int(s.messages.size()); ++i) {
    if (s.messages[i].stream_group >= 0) {
      auto& v = group_msgs[s.messages[i].stream_group];
      v.resize(std::max<size_t>(v.size(), s.messages[i].stream_pos + 1));
      v[s.messages[i].stream_pos] = i;
    }
  }
  for (int i = 0; i < int(s.amats.size()); ++i) {
    if (s.amats[i].stream_group >= 0) {
      auto& v = group_amats[s.amats[i].stream_group];
      v.resize(std::max<size_t>(v.size(), s.amats[i].stream_pos + 1));
      v[s.amats[i].stream_pos] = i;
    }
  }
  for (int i = 0; i < loop.start; ++i) out.push_back(s.steps[i]);
  for (int iter = 0; iter < loop.count; ++iter) {
    for (int i = 0; i < loop.period; ++i) {
      ScheduleStep step = s.steps[loop.start + i];
      for (int& id : step.inputs) {
        const auto& m = s.messages[id];
        if (m.stream_group >= 0) {
          id = group_msgs[m.stream_group][m.stream_pos + iter];
        }
      }
      if (step.amat >= 0 && s.amats[step.amat].stream_group >= 0) {
        const auto& a = s.amats[step.amat];
        step.amat = group_amats[a.stream_group][a.stream_pos + iter];
      }
      step.section = iter;
      out.push_back(step);
    }
  }
  for (int i = loop.start + loop.period * loop.count; i < int(s.steps.size());
       ++i) {
    out.push_back(s.steps[i]);
  }
  return out;
}

// --------------------------------------------------------------- lower

namespace {

struct Lowering {
  Schedule& s;
  const LoopInfo& loop;
  CompileOptions opts;
  CompileResult result;

  std::vector<int> storage_slot;   // storage id -> msg slot
  std::vector<int> storage_dim;    // storage id -> max dim
  std::map<int, int> identity_slot;  // dim -> amat slot
  std::map<int, int> zero_slot;      // dim -> msg slot
  int next_msg_slot = 0;
  int next_amat_slot = 0;

  Lowering(Schedule& sched, const LoopInfo& l, CompileOptions o)
      : s(sched), loop(l), opts(o) {}

  int slot_of(int msg_id) {
    int st = s.messages[msg_id].storage >= 0 ? s.messages[msg_id].storage
                                             : msg_id;
    return storage_slot[st];
  }

  void assign_slots() {
    const int n = int(s.messages.size());
    storage_slot.assign(n, -1);
    storage_dim.assign(n, 0);
    for (int i = 0; i < n; ++i) {
      int st = s.messages[i].storage >= 0 ? s.messages[i].storage : i;
      storage_dim[st] = std::max(storage_dim[st], s.messages[i].dim);
      if (storage_slot[st] < 0) storage_slot[st] = next_msg_slot++;
      s.messages[i].slot = storage_slot[st];
    }
    for (auto& a : s.amats) a.slot = next_amat_slot++;
    // identity matrices for adder/equality nodes, zero messages for the
    // backward matrix-multiply path
    for (const auto& step : s.steps) {
      if (step.kind == NodeKind::Adder ||
          step.kind == NodeKind::CompoundAddObs ||
          step.kind == NodeKind::Equality) {
        int dim = s.messages[step.inputs[0]].dim;
        if (!identity_slot.count(dim)) {
          identity_slot[dim] = next_amat_slot++;
        }
      }
      if (step.kind == NodeKind::MatrixMult) {
        int dim = s.messages[step.output].dim;
        if (!zero_slot.count(dim)) zero_slot[dim] = next_msg_slot++;
      }
    }
    if (next_msg_slot > 64) {
      throw CapacityError("message memory needs " +
                          std::to_string(next_msg_slot) + " slots (max 64)");
    }
    if (next_amat_slot > 16) {
      throw CapacityError("state-matrix memory needs " +
                          std::to_string(next_amat_slot) + " slots (max 16)");
    }
    std::uint64_t bits = 0;
    std::string widest;
    int widest_dim = 0;
    for (int st = 0; st < n; ++st) {
      if (storage_slot[st] < 0 || storage_dim[st] == 0) continue;
      bits += (std::uint64_t(storage_dim[st]) * storage_dim[st] +
               storage_dim[st]) * 64;
      if (storage_dim[st] > widest_dim) {
        widest_dim = storage_dim[st];
        widest = s.messages[st].name;
      }
    }
    for (auto& [dim, slot] : zero_slot) {
      bits += (std::uint64_t(dim) * dim + dim) * 64;
    }
    if (bits > 65536) {
      throw CapacityError("message memory footprint " + std::to_string(bits) +
                          " bits exceeds 64 kbit at id '" + widest + "'");
    }
  }

  isa::Operand msg_operand(int id, bool streamed) {
    isa::Operand op;
    op.bank = isa::Bank::MessageMem;
    op.addr = std::uint8_t(slot_of(id));
    op.stream = streamed && s.messages[id].stream_group >= 0;
    return op;
  }

  isa::Operand amat_operand(int idx, bool streamed) {
    isa::Operand op;
    op.bank = isa::Bank::StateMatrixMem;
    op.addr = std::uint8_t(s.amats[idx].slot);
    op.stream = streamed && s.amats[idx].stream_group >= 0;
    return op;
  }

  isa::Operand identity_operand(int dim) {
    isa::Operand op;
    op.bank = isa::Bank::StateMatrixMem;
    op.addr = std::uint8_t(identity_slot.at(dim));
    return op;
  }

  void lower_step(const ScheduleStep& step, bool streamed,
                  std::vector<isa::Instruction>& out) {
    using isa::Instruction;
    using isa::Opcode;
    switch (step.kind) {
      case NodeKind::Adder:
      case NodeKind::CompoundAddObs: {
        int dim = s.messages[step.inputs[0]].dim;
        Instruction mma;
        mma.opcode = Opcode::MMA;
        mma.a = identity_operand(dim);
        mma.b = msg_operand(step.inputs[0], streamed);
        mma.mean_part = true;
        out.push_back(mma);
        Instruction mms;
        mms.opcode = Opcode::MMS;
        mms.a = identity_operand(dim);
        mms.b = msg_operand(step.inputs[1], streamed);
        mms.b.neg = step.direction == Direction::Backward;
        mms.mean_part = true;
        mms.resident_left = true;
        out.push_back(mms);
        push_store(step, out);
        break;
      }
      case NodeKind::CompoundMultEq:
      case NodeKind::Equality: {
        const bool eq = step.kind == NodeKind::Equality;
        Instruction mma;
        mma.opcode = Opcode::MMA;
        mma.a = eq ? identity_operand(s.messages[step.inputs[0]].dim)
                   : amat_operand(step.amat, streamed);
        mma.b = msg_operand(step.inputs[0], streamed);
        mma.mean_part = true;
        out.push_back(mma);
        Instruction mms;
        mms.opcode = Opcode::MMS;
        mms.a = mma.a;
        mms.a.herm = true;
        mms.b = msg_operand(step.inputs[1], streamed);
        mms.b.neg = true;
        mms.mean_part = true;
        mms.resident_left = true;
        out.push_back(mms);
        Instruction fad;
        fad.opcode = Opcode::FAD;
        fad.a = msg_operand(step.inputs[0], false);
        fad.a.stream = false;  // no stream bit in the fad encoding
        fad.mean_part = true;
        out.push_back(fad);
        push_store(step, out);
        break;
      }
      case NodeKind::MatrixMult: {
        // forward: S = A [V|m], Acc = 0 + S A^H; backward (weighted
        // form): S = A^H [W|Wm], Acc = 0 + S A
        const bool fwd = step.direction == Direction::Forward;
        Instruction mma;
        mma.opcode = Opcode::MMA;
        mma.a = amat_operand(step.amat, streamed);
        mma.a.herm = !fwd;
        mma.b = msg_operand(step.inputs[0], streamed);
        mma.mean_part = true;
        out.push_back(mma);
        Instruction mms;
        mms.opcode = Opcode::MMS;
        mms.a = amat_operand(step.amat, streamed);
        mms.a.herm = fwd;
        mms.b.bank = isa::Bank::MessageMem;
        mms.b.addr = std::uint8_t(zero_slot.at(s.messages[step.output].dim));
        mms.mean_part = true;
        mms.resident_left = true;
        out.push_back(mms);
        push_store(step, out);
        break;
      }
    }
  }

  void push_store(const ScheduleStep& step, std::vector<isa::Instruction>& out) {
    isa::Instruction smm;
    smm.opcode = isa::Opcode::SMM;
    smm.a = msg_operand(step.output, false);
    smm.a.stream = false;
    smm.mean_part = true;
    out.push_back(smm);
  }

  void emit_all() {
    auto& instrs = result.instructions;
    isa::Instruction prg;
    prg.opcode = isa::Opcode::PRG;
    prg.imm = 1;
    instrs.push_back(prg);

    const bool folded = opts.fold_loops && loop.folded();
    if (!folded) {
      for (const auto& step : s.steps) lower_step(step, false, instrs);
    } else {
      for (int i = 0; i < loop.start; ++i) {
        lower_step(s.steps[i], false, instrs);
      }
      std::vector<isa::Instruction> body;
      for (int i = 0; i < loop.period; ++i) {
        lower_step(s.steps[loop.start + i], true, body);
      }
      if (body.size() > isa::kMaxAddr) {
        throw CapacityError("loop body exceeds the loop extent field");
      }
      isa::Instruction lp;
      lp.opcode = isa::Opcode::LOOP;
      lp.loop_count = 0;  // take the section count at start_program
      lp.imm = std::uint8_t(body.size());
      instrs.push_back(lp);
      instrs.insert(instrs.end(), body.begin(), body.end());
      for (int i = loop.start + loop.period * loop.count;
           i < int(s.steps.size()); ++i) {
        lower_step(s.steps[i], false, instrs);
      }
    }

    std::vector<std::uint32_t> words;
    std::string text;
    for (const auto& instr : instrs) {
      words.push_back(isa::encode(instr));
      text += isa::disassemble_instruction(instr);
      text += '\n';
    }
    result.assembly = text;
    result.image = isa::image_from_words(std::move(words));
  }

  void collect_interface() {
    for (auto& [dim, slot] : identity_slot) {
      result.inits.push_back(
          {isa::Bank::StateMatrixMem, slot, true, dim, dim});
    }
    for (auto& [dim, slot] : zero_slot) {
      result.inits.push_back({isa::Bank::MessageMem, slot, false, dim, dim});
    }
    // bindings follow id creation order, so inputs come out in
    // declaration order
    std::set<std::string> seen;
    for (const auto& m : s.messages) {
      std::string base = m.name.substr(0, m.name.find_first_of(".["));
      if (m.external_in && !seen.count(base)) {
        seen.insert(base);
        Binding b;
        b.name = base;
        b.bank = isa::Bank::MessageMem;
        b.addr = m.slot;
        b.is_input = true;
        if (m.stream_group >= 0) {
          for (const auto& mm : s.messages) {
            if (mm.stream_group == m.stream_group) ++b.stream_count;
          }
        }
        result.bindings.push_back(b);
      }
    }
    std::set<std::string> seen_amat;
    for (const auto& a : s.amats) {
      std::string base = a.name.substr(0, a.name.find_first_of("["));
      if (seen_amat.count(base)) continue;
      seen_amat.insert(base);
      Binding b;
      b.name = base;
      b.bank = isa::Bank::StateMatrixMem;
      b.addr = a.slot;
      b.is_input = true;
      if (a.stream_group >= 0) {
        for (const auto& aa : s.amats) {
          if (aa.stream_group == a.stream_group) ++b.stream_count;
        }
      }
      result.bindings.push_back(b);
    }
    for (const auto& m : s.messages) {
      if (m.external_out) {
        std::string base = m.name.substr(0, m.name.find_first_of(".["));
        Binding b;
        b.name = base;
        b.bank = isa::Bank::MessageMem;
        b.addr = m.slot;
        b.is_output = true;
        result.bindings.push_back(b);
      }
    }
  }

  CompileResult run() {
    assign_slots();
    emit_all();
    collect_interface();
    result.loop = loop;
    return std::move(result);
  }
};

std::string dump_schedule(const Schedule& s, const char* title) {
  std::ostringstream os;
  os << title << " (" << s.steps.size() << " steps, "
     << s.distinct_storage_count() << " identifiers)\n";
  auto kind_name = [](NodeKind k, Direction d) {
    switch (k) {
      case NodeKind::Adder: return "add_f";
      case NodeKind::CompoundAddObs: return "add_b";
      case NodeKind::CompoundMultEq: return "mult_eq_f";
      case NodeKind::MatrixMult:
        return d == Direction::Forward ? "mult_f" : "mult_b";
      case NodeKind::Equality: return "eq";
    }
    return "?";
  };
  for (size_t i = 0; i < s.steps.size(); ++i) {
    const auto& st = s.steps[i];
    os << "  " << i << ": " << s.messages[st.output].name;
    if (s.messages[st.output].slot >= 0) {
      os << "@" << s.messages[st.output].slot;
    }
    os << " = " << kind_name(st.kind, st.direction) << "(";
    for (size_t k = 0; k < st.inputs.size(); ++k) {
      os << s.messages[st.inputs[k]].name;
      if (s.messages[st.inputs[k]].slot >= 0) {
        os << "@" << s.messages[st.inputs[k]].slot;
      }
      if (k + 1 < st.inputs.size()) os << ", ";
    }
    if (st.amat >= 0) os << "; " << s.amats[st.amat].name;
    os << ")\n";
  }
  return os.str();
}

}  // namespace

CompileResult lower(Schedule s, const LoopInfo& loop, CompileOptions opts) {
  Lowering l(s, loop, opts);
  CompileResult r = l.run();
  r.schedule = std::move(s);
  return r;
}

CompileResult compile_graph(const std::string& fgg_text, CompileOptions opts) {
  GraphProgram g = parse_graph(fgg_text);
  Schedule sched = build_schedule(g);
  analyze_liveness(sched);
  Schedule unopt = sched;
  for (int i = 0; i < int(unopt.messages.size()); ++i) {
    unopt.messages[i].storage = i;
  }
  if (opts.optimize) {
    optimize_memory(sched);
  } else {
    for (int i = 0; i < int(sched.messages.size()); ++i) {
      sched.messages[i].storage = i;
    }
  }
  LoopInfo loop = opts.fold_loops ? compress_loops(sched) : LoopInfo{};
  CompileResult r = lower(std::move(sched), loop, opts);
  r.unoptimized = std::move(unopt);
  std::string dump = dump_schedule(r.unoptimized, "schedule (unoptimized)");
  dump += dump_schedule(r.schedule, "schedule (optimized)");
  if (loop.folded()) {
    dump += "loop: start=" + std::to_string(loop.start) +
            " period=" + std::to_string(loop.period) +
            " count=" + std::to_string(loop.count) + "\n";
  } else {
    dump += "loop: none\n";
  }
  r.schedule_dump = dump;
  return r;
}

std::string interface_to_string(const CompileResult& r) {
  std::ostringstream os;
  os << "# fgp program interface\n";
  for (const auto& i : r.inits) {
    os << "init " << (i.bank == isa::Bank::MessageMem ? "msg" : "amat") << " "
       << std::hex << i.addr << std::dec << " "
       << (i.identity ? "identity" : "zero") << " " << i.rows << "\n";
  }
  for (const auto& b : r.bindings) {
    os << (b.is_output ? "out " : "in ")
       << (b.bank == isa::Bank::MessageMem ? "msg" : "amat") << " " << b.name
       << " " << std::hex << b.addr << std::dec;
    if (b.stream_count > 0) os << " stream " << b.stream_count;
    os << "\n";
  }
  return os.str();
}

InterfaceFile interface_from_string(const std::string& text) {
  InterfaceFile f;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    auto bank = [&](const std::string& t) {
      if (t == "msg") return isa::Bank::MessageMem;
      if (t == "amat") return isa::Bank::StateMatrixMem;
      throw SyntaxError(line_no, "bad bank '" + t + "'");
    };
    if (toks[0] == "init") {
      if (toks.size() != 5) throw SyntaxError(line_no, "bad init line");
      InitDirective d;
      d.bank = bank(toks[1]);
      d.addr = int(std::strtol(toks[2].c_str(), nullptr, 16));
      d.identity = toks[3] == "identity";
      d.rows = d.cols = std::stoi(toks[4]);
      f.inits.push_back(d);
    } else if (toks[0] == "in" || toks[0] == "out") {
      if (toks.size() != 4 && !(toks.size() == 6 && toks[4] == "stream")) {
        throw SyntaxError(line_no, "bad binding line");
      }
      Binding b;
      b.is_input = toks[0] == "in";
      b.is_output = toks[0] == "out";
      b.bank = bank(toks[1]);
      b.name = toks[2];
      b.addr = int(std::strtol(toks[3].c_str(), nullptr, 16));
      if (toks.size() == 6) b.stream_count = std::stoi(toks[5]);
      f.bindings.push_back(b);
    } else {
      throw SyntaxError(line_no, "bad interface line '" + toks[0] + "'");
    }
  }
  return f;
}

}  // namespace fgp::compiler
