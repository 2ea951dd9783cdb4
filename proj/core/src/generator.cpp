#include "fog/generator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "fog/rng.hpp"

namespace fog {

BenchmarkSpec standard_benchmark(std::uint64_t seed) {
  BenchmarkSpec s;
  s.seed = seed;
  return s;
}

BenchmarkSpec small_benchmark(std::uint64_t seed) {
  BenchmarkSpec s;
  s.seed = seed;
  Rng rng(seed, "small");
  int na = 1 + static_cast<int>(rng.below(3));
  s.objects_per_archive.assign(static_cast<std::size_t>(na), 1);
  s.functions_per_object = 2 + static_cast<int>(rng.below(3));
  s.min_segments = 2;
  s.max_segments = 5;
  s.layers = 2;
  s.duplicates = 2 + static_cast<int>(rng.below(4));
  s.duplicate_copies = 2;
  s.duplicate_spread = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(na, 2))));
  s.coverage.assign(static_cast<std::size_t>(na), 0.8);
  s.training_inputs = 4;
  s.measurement_inputs = 10;
  s.min_input_values = 3;
  s.max_input_values = 8;
  return s;
}

namespace {

constexpr Op kAluOps[] = {Op::ADD, Op::SUB, Op::MUL, Op::XOR, Op::AND, Op::OR, Op::SHL, Op::SHR};

// An ALU shape: opcode, register-or-immediate second source, flag-setting suffix.
struct Shape {
  Op op;
  bool imm;
  bool s;
  int index() const {
    int k = 0;
    while (kAluOps[k] != op) ++k;
    return k * 4 + (imm ? 2 : 0) + (s ? 1 : 0);
  }
};
Shape shape_of(int i) { return {kAluOps[i / 4], (i & 2) != 0, (i & 1) != 0}; }

// Loop-counter idioms; each is owned by exactly one archive.
struct Idiom {
  Shape shape;
  bool uses_cmp;
  bool shift;  // counts by shifting instead of decrementing
};
const Idiom kIdioms[] = {
    {{Op::SUB, true, true}, false, false}, {{Op::ADD, true, true}, false, false},
    {{Op::SUB, true, false}, true, false}, {{Op::ADD, true, false}, true, false},
    {{Op::SHR, true, true}, false, true},   {{Op::SHL, true, false}, true, true},
};
constexpr int kNumIdioms = 6;

std::string reg(int r) { return "r" + std::to_string(r); }

std::string mnemonic(const Shape& sh) { return std::string(op_name(sh.op)) + (sh.s ? "S" : ""); }

Word pick_imm(Rng& rng, Op op) {
  switch (op) {
    case Op::MUL: return rng.range(2, 9);
    case Op::SHL: case Op::SHR: return rng.range(1, 5);
    default: return rng.range(1, 255);
  }
}

struct Dialect {
  std::vector<Shape> alu;
  int idiom = 0;
};

struct SnippetInsn {
  Shape sh;
  int d, a, b;  // abstract registers 0..3; b unused for immediates
  Word imm;
};
struct Snippet {
  std::vector<SnippetInsn> insns;
  int varied = -1;  // index whose immediate differs per copy, or -1
};

struct FnPlan {
  std::string name;
  int archive = 0, object = 0, layer = 0;
  std::vector<int> regs;
  std::vector<int> callees;
  std::vector<std::pair<int, int>> snippets;  // (family, copy)
  std::vector<std::string> lines;
  int blocks = 0;
};

class FnWriter {
 public:
  FnWriter(FnPlan& f, const Dialect& d, Rng& rng, const std::vector<Snippet>& fams, const std::vector<FnPlan>& all)
      : f_(f), d_(d), rng_(rng), fams_(fams), all_(all) {}

  void write(int segments, int min_insns, int max_insns) {
    min_ = min_insns;
    max_ = max_insns;
    std::vector<int> calls = f_.callees;
    std::vector<std::pair<int, int>> snips = f_.snippets;
    rng_.shuffle(calls);
    int straight_needed = static_cast<int>(calls.size());
    label(f_.name);
    for (int s = 0; s < segments || straight_needed > 0; ++s) {
      int kind = static_cast<int>(rng_.below(10));
      int left = segments - s;
      if (straight_needed >= left || kind < 4) {
        straight(calls, snips);
        if (straight_needed > 0) --straight_needed;
      } else if (kind < 7) {
        diamond();
      } else {
        loop();
      }
    }
    // leftover snippets and the return
    body(1);
    while (!snips.empty()) {
      snippet(snips.back());
      snips.pop_back();
    }
    if (rng_.below(2)) util_out();
    emit("RET");
  }

 private:
  void emit(const std::string& s) { f_.lines.push_back("    " + s); }
  std::string fresh() { return f_.name + "_" + std::to_string(next_label_++); }
  void label(const std::string& l) {
    f_.lines.push_back(l + ":");
    ++f_.blocks;
    last_util_ = false;
    flags_from_alu_ = false;
    util_defs_ = 0;
  }
  int any_reg() { return rng_.pick(f_.regs); }
  int clean_reg() {  // not produced by a utility op in this block
    std::vector<int> ok;
    for (int r : f_.regs)
      if (!(util_defs_ >> r & 1)) ok.push_back(r);
    return ok.empty() ? -1 : rng_.pick(ok);
  }
  void def_alu(int r) { util_defs_ &= ~(1u << r); }

  void alu() {
    const Shape& sh = rng_.pick(d_.alu);
    int dst = any_reg(), a = any_reg();
    std::string s = mnemonic(sh) + " " + reg(dst) + ", " + reg(a) + ", ";
    s += sh.imm ? "#" + std::to_string(pick_imm(rng_, sh.op)) : reg(any_reg());
    emit(s);
    def_alu(dst);
    last_util_ = false;
    flags_from_alu_ = sh.s;
  }

  void util_out() {
    if (last_util_) alu();
    int r = clean_reg();
    if (r < 0) return;
    emit("OUT " + reg(r));
    last_util_ = true;
    flags_from_alu_ = false;
  }

  // a utility instruction; never adjacent to or fed by another utility op
  void util() {
    if (last_util_) return alu();
    int k = static_cast<int>(rng_.below(4));
    int off = static_cast<int>(rng_.below(64));
    if (k == 0) {
      int d = any_reg();
      emit("LOAD " + reg(d) + ", [r15, #" + std::to_string(off) + "]");
      util_defs_ |= 1u << d;
    } else if (k == 1) {
      int r = clean_reg();
      if (r < 0) return alu();
      emit("STORE " + reg(r) + ", [r15, #" + std::to_string(off) + "]");
    } else if (k == 2) {
      int r = clean_reg();
      if (r < 0) return alu();
      emit("OUT " + reg(r));
    } else {
      int d = any_reg();
      emit("MOVI " + reg(d) + ", #" + std::to_string(rng_.range(-100, 1000)));
      util_defs_ |= 1u << d;
    }
    last_util_ = true;
    flags_from_alu_ = false;
  }

  void body(int n) {
    for (int i = 0; i < n; ++i)
      if (rng_.below(10) < 7) alu();
      else util();
  }
  int block_len() { return static_cast<int>(rng_.range(min_, max_)); }

  void snippet(std::pair<int, int> sc) {
    const Snippet& sn = fams_[static_cast<std::size_t>(sc.first)];
    std::vector<int> rs = f_.regs;
    rng_.shuffle(rs);
    for (std::size_t i = 0; i < sn.insns.size(); ++i) {
      const auto& in = sn.insns[i];
      std::string s = mnemonic(in.sh) + " " + reg(rs[static_cast<std::size_t>(in.d)]) + ", " +
                      reg(rs[static_cast<std::size_t>(in.a)]) + ", ";
      if (in.sh.imm) {
        Word v = in.imm;
        if (static_cast<int>(i) == sn.varied) v += sc.second;
        s += "#" + std::to_string(v);
      } else {
        s += reg(rs[static_cast<std::size_t>(in.b)]);
      }
      emit(s);
      def_alu(rs[static_cast<std::size_t>(in.d)]);
    }
    last_util_ = false;
    flags_from_alu_ = sn.insns.back().sh.s;
  }

  void straight(std::vector<int>& calls, std::vector<std::pair<int, int>>& snips) {
    int n = block_len();
    int at = static_cast<int>(rng_.below(static_cast<std::uint64_t>(n) + 1));
    body(at);
    if (!snips.empty()) {
      snippet(snips.back());
      snips.pop_back();
    }
    body(n - at);
    if (!calls.empty()) {
      emit("CALL " + all_[static_cast<std::size_t>(calls.back())].name);
      calls.pop_back();
      label(fresh());
    }
  }

  // condition for a forward branch; returns the mnemonic suffix
  std::string condition() {
    static const char* kSigned[] = {"LT", "GE", "GT", "LE"};
    if (flags_from_alu_ && rng_.below(2)) return rng_.below(2) ? "LT" : "GE";
    if (last_util_) alu();
    int a = clean_reg(), b = clean_reg();
    if (a < 0 || b < 0 || a == b) {
      alu();
      a = clean_reg();
      b = -1;
    }
    if (b < 0 || a == b) emit("CMP " + reg(a) + ", #" + std::to_string(rng_.range(-50, 400)));
    else emit("CMP " + reg(a) + ", " + reg(b));
    last_util_ = true;
    return kSigned[rng_.below(4)];
  }

  void diamond() {
    body(block_len() / 2);
    std::string els = fresh(), join = fresh();
    emit("BR " + condition() + ", " + els);
    label(fresh());
    body(block_len());
    bool two_armed = rng_.below(2);
    if (two_armed) {
      emit("JMP " + join);
      label(els);
      body(block_len());
      label(join);
    } else {
      label(els);
    }
    body(1);
  }

  void loop() {
    const Idiom& id = kIdioms[d_.idiom];
    int ctr = rng_.below(2) ? 12 : 13;
    int k = static_cast<int>(rng_.range(2, 4));
    if (last_util_) alu();
    emit("MOVI " + reg(ctr) + ", #" + std::to_string(id.shift ? (id.shape.op == Op::SHR ? (1 << (k - 1)) : 1) : k));
    std::string head = fresh();
    label(head);
    body(block_len());
    std::string step = id.shift ? "#1" : (id.shape.op == Op::ADD ? "#-1" : "#1");
    emit(mnemonic(id.shape) + " " + reg(ctr) + ", " + reg(ctr) + ", " + step);
    if (id.uses_cmp) {
      if (id.shape.op == Op::SHL) {
        emit("CMP " + reg(ctr) + ", #" + std::to_string(1 << k));
        emit("BR LT, " + head);
      } else {
        emit("CMP " + reg(ctr) + ", #0");
        emit("BR GT, " + head);
      }
    } else {
      emit("BR NZ, " + head);
    }
    label(fresh());
    body(1);
  }

  FnPlan& f_;
  const Dialect& d_;
  Rng& rng_;
  const std::vector<Snippet>& fams_;
  const std::vector<FnPlan>& all_;
  int min_ = 2, max_ = 6;
  int next_label_ = 0;
  bool last_util_ = false;
  bool flags_from_alu_ = false;
  std::uint32_t util_defs_ = 0;
};

std::vector<Dialect> make_dialects(int na, Rng& rng) {
  std::vector<Dialect> ds(static_cast<std::size_t>(na));
  std::vector<int> idioms = {0, 1, 2, 3, 4, 5};
  // archive 0 hosts main, whose counter must count down
  std::vector<int> dec = {0, 1, 2, 3};
  ds[0].idiom = rng.pick(dec);
  idioms.erase(std::find(idioms.begin(), idioms.end(), ds[0].idiom));
  rng.shuffle(idioms);
  for (int a = 1; a < na; ++a) ds[static_cast<std::size_t>(a)].idiom = idioms[static_cast<std::size_t>(a - 1)];
  std::set<int> taken;
  const int and_ri = Shape{Op::AND, true, false}.index();
  ds[0].alu.push_back(shape_of(and_ri));
  taken.insert(and_ri);
  for (auto& d : ds) {
    int ix = kIdioms[d.idiom].shape.index();
    d.alu.push_back(shape_of(ix));
    taken.insert(ix);
  }
  std::vector<int> rest;
  for (int i = 0; i < 32; ++i)
    if (!taken.count(i)) rest.push_back(i);
  rng.shuffle(rest);
  for (std::size_t i = 0; i < rest.size(); ++i) ds[i % ds.size()].alu.push_back(shape_of(rest[i]));
  return ds;
}

Snippet make_snippet(Rng& rng) {
  Snippet sn;
  int len = static_cast<int>(rng.range(2, 5));
  int prev = static_cast<int>(rng.below(4));
  for (int i = 0; i < len; ++i) {
    SnippetInsn in;
    in.sh = shape_of(static_cast<int>(rng.below(32)));
    in.a = rng.below(10) < 7 ? prev : static_cast<int>(rng.below(4));
    in.b = static_cast<int>(rng.below(4));
    in.d = static_cast<int>(rng.below(4));
    in.imm = pick_imm(rng, in.sh.op);
    prev = in.d;
    sn.insns.push_back(in);
  }
  if (rng.below(10) < 3) {
    for (int i = 0; i < len; ++i)
      if (sn.insns[static_cast<std::size_t>(i)].sh.imm) sn.varied = i;
  }
  return sn;
}

}  // namespace

Benchmark generate_benchmark(const BenchmarkSpec& spec) {
  const int na = spec.archives();
  if (na < 1) throw SpecError("at least one archive is required");
  if (na > kNumIdioms) throw SpecError("at most " + std::to_string(kNumIdioms) + " archives are supported");
  for (int o : spec.objects_per_archive)
    if (o < 1) throw SpecError("every archive needs at least one object");
  if (spec.functions_per_object < 1) throw SpecError("functions_per_object must be positive");
  if (spec.min_block_insns < 1 || spec.max_block_insns < spec.min_block_insns) throw SpecError("bad block size range");
  if (spec.min_segments < 1 || spec.max_segments < spec.min_segments) throw SpecError("bad segment range");
  if (spec.layers < 1) throw SpecError("layers must be positive");
  if (spec.duplicates < 0 || spec.duplicate_copies < 0) throw SpecError("negative duplication");
  if (spec.duplicates > 0 && (spec.duplicate_spread < 1 || spec.duplicate_spread > na))
    throw SpecError("duplication spread exceeds the number of archives");
  if (spec.duplicates > 0 && spec.duplicate_copies < spec.duplicate_spread)
    throw SpecError("fewer copies than archives to spread them over");
  if (static_cast<int>(spec.coverage.size()) != na) throw SpecError("one coverage target per archive is required");
  if (spec.training_inputs < 1 || spec.measurement_inputs < 1) throw SpecError("inputs required");
  if (spec.min_input_values < 1 || spec.max_input_values > 31 || spec.max_input_values < spec.min_input_values)
    throw SpecError("input length must be within [1, 31]");

  Rng rng(spec.seed, "generator");
  auto dialects = make_dialects(na, rng);

  // functions, objects and call layers
  std::vector<FnPlan> fns;
  std::vector<std::vector<int>> by_archive(static_cast<std::size_t>(na));
  int object = 0;
  for (int a = 0; a < na; ++a) {
    for (int o = 0; o < spec.objects_per_archive[static_cast<std::size_t>(a)]; ++o, ++object) {
      for (int k = 0; k < spec.functions_per_object; ++k) {
        FnPlan f;
        f.name = "a" + std::to_string(a) + "o" + std::to_string(object) + "f" + std::to_string(k);
        f.archive = a;
        f.object = object;
        std::vector<int> pool = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
        rng.shuffle(pool);
        pool.resize(static_cast<std::size_t>(rng.range(4, 7)));
        if (std::find(pool.begin(), pool.end(), 0) == pool.end()) pool[0] = 0;
        std::sort(pool.begin(), pool.end());
        f.regs = pool;
        by_archive[static_cast<std::size_t>(a)].push_back(static_cast<int>(fns.size()));
        fns.push_back(std::move(f));
      }
    }
  }
  std::vector<std::vector<std::vector<int>>> layer_of(static_cast<std::size_t>(na));
  for (int a = 0; a < na; ++a) {
    auto ids = by_archive[static_cast<std::size_t>(a)];
    rng.shuffle(ids);
    int n = static_cast<int>(ids.size());
    int L = std::min(spec.layers, n);
    auto& layers = layer_of[static_cast<std::size_t>(a)];
    layers.assign(static_cast<std::size_t>(L), {});
    int l0 = std::max(1, static_cast<int>(std::lround(n * (L == 1 ? 1.0 : 0.4))));
    l0 = std::min(l0, n - (L - 1));
    for (int i = 0; i < n; ++i) {
      int l = i < l0 ? 0 : 1 + (i - l0) * (L - 1) / std::max(1, n - l0);
      layers[static_cast<std::size_t>(l)].push_back(ids[static_cast<std::size_t>(i)]);
      fns[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])].layer = l;
    }
    for (int l = 1; l < L; ++l)
      for (int f : layers[static_cast<std::size_t>(l)]) {
        int caller = rng.pick(layers[static_cast<std::size_t>(l - 1)]);
        fns[static_cast<std::size_t>(caller)].callees.push_back(f);
        if (rng.below(10) < 3) {
          int ul = static_cast<int>(rng.below(static_cast<std::uint64_t>(l)));
          int c2 = rng.pick(layers[static_cast<std::size_t>(ul)]);
          auto& cs = fns[static_cast<std::size_t>(c2)].callees;
          if (std::find(cs.begin(), cs.end(), f) == cs.end()) cs.push_back(f);
        }
      }
  }
  int n_l0 = 0;
  for (auto& ls : layer_of) n_l0 += static_cast<int>(ls[0].size());
  if (n_l0 > 64) throw SpecError("too many top-level functions for the dispatch table");

  // planted duplicates
  std::vector<Snippet> fams;
  for (int k = 0; k < spec.duplicates; ++k) {
    fams.push_back(make_snippet(rng));
    std::vector<int> archs(static_cast<std::size_t>(na));
    for (int a = 0; a < na; ++a) archs[static_cast<std::size_t>(a)] = a;
    rng.shuffle(archs);
    archs.resize(static_cast<std::size_t>(spec.duplicate_spread));
    for (int c = 0; c < spec.duplicate_copies; ++c) {
      int a = c < spec.duplicate_spread ? archs[static_cast<std::size_t>(c)] : rng.pick(archs);
      int f = rng.pick(by_archive[static_cast<std::size_t>(a)]);
      fns[static_cast<std::size_t>(f)].snippets.push_back({k, c});
    }
  }

  for (auto& f : fns) {
    FnWriter w(f, dialects[static_cast<std::size_t>(f.archive)], rng, fams, fns);
    w.write(static_cast<int>(rng.range(spec.min_segments, spec.max_segments)), spec.min_block_insns,
            spec.max_block_insns);
  }

  // hot top-level functions per archive, chosen to approach the coverage target
  auto reach = [&](int root) {
    std::set<int> seen{root};
    std::vector<int> st{root};
    while (!st.empty()) {
      int f = st.back();
      st.pop_back();
      for (int c : fns[static_cast<std::size_t>(f)].callees)
        if (seen.insert(c).second) st.push_back(c);
    }
    return seen;
  };
  std::vector<int> hot, cold;
  for (int a = 0; a < na; ++a) {
    auto l0 = layer_of[static_cast<std::size_t>(a)][0];
    double total = 0;
    for (int f : by_archive[static_cast<std::size_t>(a)]) total += fns[static_cast<std::size_t>(f)].blocks;
    if (a == 0) total += 4 + 2.0 * n_l0;
    double target = spec.coverage[static_cast<std::size_t>(a)] * total;
    rng.shuffle(l0);
    auto estimate = [&](std::uint32_t mask) {
      std::set<int> covered;
      double got = a == 0 ? 4.0 : 0.0;
      for (std::size_t i = 0; i < l0.size(); ++i)
        if (mask >> i & 1) {
          auto r = reach(l0[i]);
          covered.insert(r.begin(), r.end());
          if (a == 0) got += 2;
        }
      for (int g : covered) got += fns[static_cast<std::size_t>(g)].blocks * 0.9;
      return got;
    };
    // exhaustive over small top layers, greedy otherwise
    std::uint32_t best = 0;
    if (l0.size() <= 12) {
      double err = std::abs(estimate(0) - target);
      for (std::uint32_t m = 1; m < (1u << l0.size()); ++m) {
        double e = std::abs(estimate(m) - target);
        if (e < err) err = e, best = m;
      }
    } else {
      for (std::size_t i = 0; i < l0.size(); ++i) {
        std::uint32_t m = best | (1u << i);
        if (std::abs(estimate(m) - target) < std::abs(estimate(best) - target)) best = m;
      }
    }
    for (std::size_t i = 0; i < l0.size(); ++i) (best >> i & 1 ? hot : cold).push_back(l0[i]);
  }
  if (hot.empty()) {
    hot.push_back(cold.back());
    cold.pop_back();
  }
  if (hot.size() > 32 || cold.size() > 32) throw SpecError("too many top-level functions for the dispatch table");

  // main: reads a count, then dispatches each input through a bounds-checked switch
  std::ostringstream os;
  Rng vrng(spec.seed, "generator.data");
  for (int g = 0; g < 64; ++g) os << ".word m" << g << " " << vrng.range(-1000, 100000) << "\n";
  std::vector<int> l0_order = hot;
  l0_order.insert(l0_order.end(), cold.begin(), cold.end());
  os << ".table main_tab:";
  for (int s = 0; s < 64; ++s) {
    std::size_t k;
    if (s < 32 || cold.empty()) k = static_cast<std::size_t>(s) % hot.size();
    else k = hot.size() + static_cast<std::size_t>(s - 32) % cold.size();
    os << " main_c" << k;
  }
  os << "\n.archive 0\n.object 0\n.func main\nmain:\n";
  const Idiom& mi = kIdioms[dialects[0].idiom];
  os << "    IN r14\n    AND r14, r14, #31\n    MOVI r15, m0\n";
  os << "main_loop:\n    IN r0\n    AND r1, r0, #63\n    CMP r1, #64\n    BR GE, main_next\n";
  os << "main_sw:\n    SWJ r1, main_tab\n";
  for (std::size_t k = 0; k < l0_order.size(); ++k) {
    os << "main_c" << k << ":\n    CALL " << fns[static_cast<std::size_t>(l0_order[k])].name << "\n";
    os << "main_r" << k << ":\n    JMP main_next\n";
  }
  os << "main_next:\n    OUT r0\n";
  os << "    " << mnemonic(mi.shape) << " r14, r14, " << (mi.shape.op == Op::ADD ? "#-1" : "#1") << "\n";
  if (mi.uses_cmp) os << "    CMP r14, #0\n";
  os << "    BR GT, main_loop\nmain_done:\n    HALT\n";
  for (const auto& f : fns) {
    os << ".archive " << f.archive << "\n.object " << f.object << "\n.func " << f.name << "\n";
    for (const auto& l : f.lines) os << l << "\n";
  }

  Benchmark b;
  b.program = parse_program(os.str());
  for (int f : hot) b.hot_functions.push_back(fns[static_cast<std::size_t>(f)].name);

  Rng irng(spec.seed, "generator.inputs");
  std::set<std::vector<Word>> seen;
  auto make_input = [&](bool training) {
    for (;;) {
      std::vector<Word> in;
      int n = static_cast<int>(irng.range(spec.min_input_values, spec.max_input_values));
      in.push_back(n);
      for (int i = 0; i < n; ++i) {
        Word hi = irng.range(0, (1 << 14) - 1) << 6;
        // measurement mostly exercises what training did, with an occasional cold call
        Word sel = training || irng.below(8) ? irng.range(0, 31) : irng.range(32, 63);
        in.push_back(hi | sel);
      }
      if (seen.insert(in).second) return in;
    }
  };
  for (int i = 0; i < spec.training_inputs; ++i) b.training.push_back(make_input(true));
  for (int i = 0; i < spec.measurement_inputs; ++i) b.measurement.push_back(make_input(false));
  return b;
}

}  // namespace fog
