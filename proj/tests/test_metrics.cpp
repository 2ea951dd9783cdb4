#include <doctest.h>

#include <numeric>

#include "fog/generator.hpp"
#include "fog/harness.hpp"
#include "fog/metrics.hpp"

using namespace fog;

namespace {

BlockId by_label(const Program& p, const std::string& l) {
  for (const auto& bb : p.blocks)
    if (bb.label == l) return bb.id;
  FAIL("no block " << l);
  return kNoBlock;
}

// g's fall-through into x is fake; everything else is real.
const char* kThree = R"(
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

Program three() {
  auto p = parse_program(kThree);
  p.fake.insert({p.block(by_label(p, "g")).insns.back().id, EdgeKind::FALLTHROUGH, by_label(p, "x")});
  build_cfg(p);
  return p;
}

std::size_t total(const std::map<int, std::size_t>& m) {
  std::size_t n = 0;
  for (const auto& [k, c] : m) n += c;
  return n;
}

std::size_t insn_count(const Program& p) { return p.instruction_count(); }

}  // namespace

TEST_CASE("percent rounds half to even") {
  CHECK(percent(1, 8) == 12);
  CHECK(percent(3, 8) == 38);
  CHECK(percent(5, 8) == 62);
  CHECK(percent(2, 3) == 67);
  CHECK(percent(1, 3) == 33);
  CHECK(percent(7, 7) == 100);
  CHECK(percent(0, 5) == 0);
  CHECK(percent(4, 0) == 0);
}

TEST_CASE("edge columns follow provenance") {
  Provenance a{0, 0, 0}, f{0, 0, 1}, o{0, 1, 2}, r{1, 2, 3};
  auto same = edge_columns(a, a), fn = edge_columns(a, f), obj = edge_columns(a, o), ar = edge_columns(a, r);
  CHECK(same == std::array<bool, kColumns>{true, false, false, false, true, true, true});
  CHECK(fn == std::array<bool, kColumns>{true, false, false, true, true, true, false});
  CHECK(obj == std::array<bool, kColumns>{true, false, true, true, true, false, false});
  CHECK(ar == std::array<bool, kColumns>{true, true, true, true, false, false, false});
}

TEST_CASE("false rates on a hand-built view") {
  auto p = three();
  const BlockId main = by_label(p, "main"), m2 = by_label(p, "m2"), g = by_label(p, "g"), x = by_label(p, "x"),
                g2 = by_label(p, "g2");
  AttackerView v;
  v.symbols = 2;
  v.function_entries = {main, g};
  for (const auto& bb : p.blocks) v.discovered.insert(bb.id);
  v.assignment = {{main, 0}, {m2, 0}, {g, 1}, {g2, 1}, {x, kFunctionless}};
  // main's taken edge into x is missed; the fake fall-through is drawn
  v.db = {{main, m2, EdgeKind::FALLTHROUGH}, {g, g2, EdgeKind::BRANCH_TAKEN}, {g, x, EdgeKind::FALLTHROUGH}};
  v.refresh_gui();
  CHECK(v.gui.size() == 2);

  auto r = false_rates(p, v);
  CHECK(r.true_edges == 3);
  CHECK(r.fake_edges == 1);
  CHECK(r.drawn_edges == 2);
  CHECK(r.db.fp.count[kTotal] == 1);
  CHECK(percent(r.db.fp.count[kTotal], r.db.fp.base[kTotal]) == 100);
  CHECK(r.db.fn.count[kTotal] == 1);
  CHECK(percent(r.db.fn.count[kTotal], r.db.fn.base[kTotal]) == 33);
  // x is functionless, so GUI drops the fake edge
  CHECK(r.gui.fp.count[kTotal] == 0);
  CHECK(r.gui.fn.count[kTotal] == 1);
  // the missed edge crosses functions, the other two stay inside one
  CHECK(r.db.fn.base[kIF] == 1);
  CHECK(r.db.fn.count[kIF] == 1);
  CHECK(r.db.fn.base[kiF] == 2);
  CHECK(r.db.fn.count[kiF] == 0);
  CHECK(r.db.fp.base[kiF] == 1);
  CHECK(r.functionless_insns == 2);
  CHECK(r.discovered_insns == insn_count(p));
  CHECK(categories_coherent(r));

  SUBCASE("assigning x to g draws the fake edge in GUI as well") {
    v.assignment[x] = 1;
    v.refresh_gui();
    auto s = false_rates(p, v);
    CHECK(s.gui.fp.count[kTotal] == 1);
    CHECK(percent(s.gui.fp.count[kTotal], s.gui.fp.base[kTotal]) == 100);
  }
}

TEST_CASE("csv rows carry counts and rates") {
  auto p = three();
  auto v = recursive_descent(p);
  auto csv = false_rates_csv({{"x", false_rates(p, v)}});
  CHECK(csv.rfind("label,view,metric,Total,IA,IO,IF,iA,iO,iF\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 8);
  CHECK(csv.find("x,GUI,FNR,") != std::string::npos);
}

TEST_CASE("unprotected programs have flat reachability") {
  auto bm = generate_benchmark(small_benchmark(3));
  auto h = reachability_histogram(bm.program);
  CHECK(total(h.entries) == insn_count(bm.program));
  CHECK(total(h.functions) == insn_count(bm.program));
  for (const auto& [k, n] : h.functions) CHECK(k <= 1);
  for (const auto& [k, n] : h.archives) CHECK(k <= 1);
}

TEST_CASE("no factoring means no split pairs and nothing variable") {
  auto bm = generate_benchmark(small_benchmark(4));
  auto v = recursive_descent(bm.program);
  FactoringReport none;
  auto s = split_pairs(none, v);
  CHECK(s.total == 0);
  CHECK(s.wrong_fraction() == 0.0);
  auto var = dispatcher_variability_report(bm.program, none, bm.training);
  CHECK(var.sets == 0);
  CHECK(var.variable_fraction() == 0.0);
}

TEST_CASE("identity overhead is one") {
  auto bm = generate_benchmark(small_benchmark(5));
  auto o = overhead_counts(bm.program, bm.program, bm.measurement);
  CHECK(o.static_before == o.static_after);
  CHECK(o.dynamic_before == o.dynamic_after);
  CHECK(o.dynamic_before > 0);
  CHECK(o.static_ratio() == 1.0);
  CHECK(o.dynamic_ratio() == 1.0);
}

TEST_CASE("applicability partitions the factored instructions") {
  ObfuscationConfig c;
  c.predicate_insertion_probability = 0;
  for (std::uint64_t seed : {1, 2}) {
    auto bm = generate_benchmark(standard_benchmark(seed));
    ExecutionProfile prof;
    for (const auto& in : bm.training) prof.merge(run(bm.program, in).profile);
    auto res = pipeline(bm.program, prof, c);
    REQUIRE(!res.factoring.applied.empty());
    auto a = applicability_breakdown(res.factoring, bm.program, res.counts);
    CHECK(a.original_insns == insn_count(bm.program));
    CHECK(a.factored_insns == res.factoring.factored_instructions);
    CHECK(total(a.by_archives) == a.factored_insns);
    CHECK(total(a.by_objects) == a.factored_insns);
    CHECK(total(a.by_functions) == a.factored_insns);
    int dispatchers = 0, covered = 0;
    for (const auto& [k, n] : a.by_contexts) {
      CHECK(k >= 2);
      dispatchers += n;
    }
    for (const auto& [k, n] : a.by_covered) covered += n;
    CHECK(dispatchers == static_cast<int>(res.factoring.applied.size()));
    CHECK(covered == dispatchers);
    CHECK(a.factored_fraction() > 0.0);
    CHECK(a.factored_fraction() < 1.0);
  }
}
