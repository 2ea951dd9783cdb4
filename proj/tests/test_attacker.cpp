#include <doctest.h>

#include "fog/attacker.hpp"
#include "fog/factoring.hpp"
#include "fog/generator.hpp"
#include "fog/interp.hpp"
#include "fog/layout.hpp"
#include "fog/opaque.hpp"

using namespace fog;

namespace {

BlockId by_label(const Program& p, const std::string& l) {
  for (const auto& bb : p.blocks)
    if (bb.label == l) return bb.id;
  FAIL("no block " << l);
  return kNoBlock;
}

struct Obf {
  Program p;
  std::vector<OpaquePredicate> preds;
  FactoringReport rep;
};

Obf obfuscate(std::uint64_t seed, double pred_prob, int cycle_size, double cycle_prob,
              std::set<DispatcherKind> kinds = {DispatcherKind::COND_JUMP, DispatcherKind::INDIRECT_BRANCH,
                                                DispatcherKind::STATIC_SWITCH, DispatcherKind::DYNAMIC_SWITCH},
              bool small = true) {
  auto bm = generate_benchmark(small ? small_benchmark(seed) : standard_benchmark(seed));
  Obf o;
  auto ins = insert_predicates(bm.program, pred_prob, seed, liveness(bm.program));
  o.p = ins.program;
  o.preds = ins.predicates;
  ExecutionProfile prof;
  for (const auto& in : bm.training) prof.merge(run(o.p, in).profile);
  auto counts = instruction_counts(o.p, prof);
  Analyses a = analyze(o.p);
  FactoringOptions opt;
  opt.seed = seed;
  opt.enabled = kinds;
  if (!kinds.empty()) o.rep = run_factoring_phase(o.p, opt, a, counts, &o.preds);
  o.p = flip_branches(randomize_layout(o.p, Granularity::BLOCK, 1), seed);
  auto ft = choose_fake_targets(o.p, o.preds, cycle_size, cycle_prob, 50, seed);
  o.p = ft.program;
  return o;
}

void check_gui(const AttackerView& v) {
  for (const auto& e : v.gui) REQUIRE(v.db.count(e));
  for (const auto& e : v.db) {
    int f = v.function_of(e.src);
    CHECK(v.gui.count(e) == (f != kFunctionless && f == v.function_of(e.dst)));
  }
}

std::set<ViewEdge> true_only(const Program& p, const std::set<ViewEdge>& s) {
  std::set<ViewEdge> out;
  for (const auto& [e, t] : truth_edges(p))
    if (t == Truth::TRUE_EDGE && s.count(e)) out.insert(e);
  return out;
}

// x sits right after g's always-taken branch, so g reaches it by a fake
// fall-through while main reaches it by a true taken edge.
const char* kFallPref = R"(
.archive 0
.object 0
.func main
main:
    IN r0
    CMP r0, #0
    BR Z, x
m2: HALT
.func g
g:  MOVI r1, #1
    CMP r1, #0
    BR NZ, g2
x:  OUT r0
    HALT
g2: RET
)";

Program fall_pref() {
  auto p = parse_program(kFallPref);
  const auto& gb = p.block(by_label(p, "g"));
  p.fake.insert({gb.insns.back().id, EdgeKind::FALLTHROUGH, by_label(p, "x")});
  build_cfg(p);
  return p;
}

// z is only reachable through a table nobody indexes.
const char* kLoose = R"(
.archive 0
.object 0
.table tz: z
.func f1
f1: IN r0
    JMP b1
b1: HALT
.func f2
f2: IN r1
    HALT
z:  HALT
)";

AttackerView loose_view(const Program& p, std::initializer_list<ViewEdge> db) {
  AttackerView v;
  v.symbols = 2;
  v.function_entries = {by_label(p, "f1"), by_label(p, "f2")};
  for (const auto& bb : p.blocks) {
    v.discovered.insert(bb.id);
    v.assignment[bb.id] = kFunctionless;
  }
  v.assignment[by_label(p, "f1")] = 0;
  v.assignment[by_label(p, "b1")] = 0;
  v.assignment[by_label(p, "f2")] = 1;
  v.db = db;
  return v;
}

}  // namespace

TEST_CASE("the fake fall-through claim wins at equal distance") {
  auto p = fall_pref();
  const BlockId x = by_label(p, "x");
  auto v = recursive_descent(p);
  CHECK(v.function_of(x) == p.function_index("g"));
  AttackerOptions opt;
  opt.fallthrough_first = false;
  auto w = recursive_descent(p, opt);
  CHECK(w.function_of(x) == p.function_index("main"));

  // the fake edge is drawn, the true one is only in the database
  for (const auto& c : classify_edges(p, v)) {
    if (c.edge.dst != x) continue;
    if (c.truth == Truth::FAKE_EDGE) CHECK(c.gui == EdgeClass::FP);
    else CHECK(c.gui == EdgeClass::SFN);
  }
  check_gui(v);
}

TEST_CASE("an unprotected program has no false positives") {
  for (std::uint64_t s = 1; s <= 4; ++s) {
    auto bm = generate_benchmark(small_benchmark(s));
    auto v = recursive_descent(bm.program);
    for (const auto& c : classify_edges(bm.program, v)) {
      CHECK(c.truth == Truth::TRUE_EDGE);
      CHECK(c.db != EdgeClass::FP);
    }
    // nothing discovered outside the real CFG
    auto universe = truth_edges(bm.program);
    std::set<ViewEdge> known;
    for (const auto& [e, t] : universe) known.insert(e);
    for (const auto& e : v.db) CHECK(known.count(e));
  }
}

TEST_CASE("repartition moves a loose block to its best-connected function") {
  auto p = parse_program(kLoose);
  const BlockId f1 = by_label(p, "f1"), b1 = by_label(p, "b1"), f2 = by_label(p, "f2"), z = by_label(p, "z");
  SUBCASE("two edges beat one") {
    auto v = loose_view(p, {{f1, z, EdgeKind::JUMP}, {z, b1, EdgeKind::JUMP}, {f2, z, EdgeKind::JUMP}});
    repartition(p, v);
    CHECK(v.function_of(z) == 0);
  }
  SUBCASE("one direct edge beats two switch edges") {
    auto v = loose_view(p, {{f1, z, EdgeKind::SWITCH_CASE}, {b1, z, EdgeKind::SWITCH_CASE}, {f2, z, EdgeKind::JUMP}});
    repartition(p, v);
    CHECK(v.function_of(z) == 1);
  }
  SUBCASE("unconnected code becomes its own function") {
    auto v = recursive_descent(p);
    CHECK(v.function_of(z) == kFunctionless);
    CHECK_FALSE(v.discovered.count(z));
    repartition(p, v);
    CHECK(v.discovered.count(z));
    CHECK(v.function_of(z) >= 2);
    check_gui(v);
  }
}

TEST_CASE("dynamic switch continuations stay out of functions") {
  int checked = 0;
  for (std::uint64_t s = 1; s <= 4; ++s) {
    auto o = obfuscate(s, 0, 4, 100, {DispatcherKind::DYNAMIC_SWITCH});
    auto preds = predecessors(o.p);
    auto v = recursive_descent(o.p);
    for (const auto& as : o.rep.applied)
      for (auto [ba, bb] : as.split_pairs) {
        bool only_switch = true;
        for (auto [src, k] : preds[bb]) only_switch &= src == as.dispatcher_block;
        if (!only_switch) continue;
        CHECK(v.function_of(bb) == kFunctionless);
        CHECK_FALSE(v.discovered.count(bb));
        ++checked;
      }
  }
  CHECK(checked > 0);
}

TEST_CASE("views are deterministic and keep gui inside db") {
  auto o = obfuscate(3, 20, 4, 100);
  auto v1 = recursive_descent(o.p), v2 = recursive_descent(o.p);
  CHECK(v1.db == v2.db);
  CHECK(v1.assignment == v2.assignment);
  check_gui(v1);
  repartition(o.p, v1);
  repartition(o.p, v2);
  CHECK(v1.assignment == v2.assignment);
  check_gui(v1);
  for (const auto& b : v1.discovered) CHECK(v1.function_of(b) != kFunctionless);
}

TEST_CASE("resolvers only remove fake edges") {
  for (std::uint64_t s = 1; s <= 5; ++s) {
    for (double cyc : {0.0, 50.0, 100.0}) {
      auto o = obfuscate(s, 30, 4, cyc);
      auto v = recursive_descent(o.p);
      repartition(o.p, v);
      const auto db_true = true_only(o.p, v.db);
      auto sound = v, unsound = v;
      auto rs = resolve_soundish(o.p, o.preds, sound);
      auto ru = resolve_unsound(o.p, o.preds, unsound);
      CHECK(true_only(o.p, sound.db) == db_true);
      CHECK(true_only(o.p, unsound.db) == db_true);
      CHECK(v.db.size() - sound.db.size() == static_cast<std::size_t>(rs.resolved));
      CHECK(v.db.size() - unsound.db.size() == static_cast<std::size_t>(ru.resolved));
      check_gui(sound);
      check_gui(unsound);
      if (cyc == 0.0) CHECK(rs.resolved > 0);
    }
  }
}

TEST_CASE("coupling stops both resolvers") {
  auto o = obfuscate(2, 30, 1, 100, {});
  REQUIRE(!o.preds.empty());
  auto v = recursive_descent(o.p);
  repartition(o.p, v);
  auto u = v;
  CHECK(resolve_soundish(o.p, o.preds, v).resolved == 0);
  CHECK(resolve_unsound(o.p, o.preds, u).resolved == 0);

  auto q = obfuscate(2, 30, 4, 0, {});
  auto w = recursive_descent(q.p);
  repartition(q.p, w);
  CHECK(resolve_soundish(q.p, q.preds, w).resolved == static_cast<int>(q.preds.size()));
}

TEST_CASE("nothing to resolve without predicates") {
  auto o = obfuscate(1, 0, 4, 100);
  auto v = recursive_descent(o.p);
  repartition(o.p, v);
  auto u = v;
  CHECK(resolve_soundish(o.p, o.preds, v).resolved == 0);
  CHECK(resolve_unsound(o.p, o.preds, u).resolved == 0);
}

TEST_CASE("edge class names") {
  CHECK(std::string(edge_class_name(EdgeClass::SFN)) == "SFN");
  CHECK(std::string(edge_class_name(EdgeClass::STN)) == "STN");
}
