#include <doctest.h>

#include "fog/dataflow.hpp"
#include "oracle.hpp"

using namespace fog;

namespace {

Program prog(const std::string& body) { return parse_program(".archive 0\n.object 0\n.func main\nmain:\n" + body); }

InsnId nth(const Program& p, int k) {
  for (auto& b : p.blocks)
    for (auto& in : b.insns)
      if (k-- == 0) return in.id;
  return 0;
}

}  // namespace

TEST_CASE("liveness basics") {
  auto p = prog("MOVI r1, #1\nMOVI r2, #2\nADD r3, r1, r1\nOUT r3\nHALT\n");
  auto l = liveness(p);
  CHECK(l.live_before(nth(p, 1)) == (1u << 1));
  CHECK(l.live_after(nth(p, 2)) == (1u << 3));
  CHECK((l.live_before(nth(p, 0)) & (1u << 2)) == 0);
}

TEST_CASE("flags liveness") {
  auto p = prog("IN r0\nCMP r0, #3\nMOV r1, r0\nBR Z, x\nHALT\nx: HALT\n");
  auto l = liveness(p);
  CHECK((l.live_after(nth(p, 1)) & kFlagsMask) != 0);
  CHECK((l.live_before(nth(p, 1)) & kFlagsMask) == 0);
}

TEST_CASE("constant identities and nonzero bases") {
  auto p = prog("IN r0\nSUB r1, r0, r0\nAND r2, r0, #0\nLOAD r3, [r0, #8]\nOR r4, r3, #1\nMOV r5, r0\nHALT\n");
  auto c = constants(p);
  InsnId last = nth(p, 6);
  CHECK(c.constant(last, 1) == Word{0});
  CHECK(c.constant(last, 2) == Word{0});
  CHECK(c.kind(last, 3) == ConstKind::TOP);
  CHECK(c.nonzero(last, 0) == NonZeroFact::NONZERO);
  CHECK(c.nonzero(last, 4) == NonZeroFact::NONZERO);
  CHECK(c.nonzero(last, 5) == NonZeroFact::NONZERO);
  CHECK(c.nonzero(nth(p, 3), 0) == NonZeroFact::MAYBE_ZERO);
  auto off = nonzero(p, {.assume_nonzero_bases = false});
  CHECK(off.nonzero(last, 0) == NonZeroFact::MAYBE_ZERO);
}

TEST_CASE("k=1 contexts keep per-call-site constants") {
  auto p = parse_program(R"(
.archive 0
.object 0
.func main
main:
    MOVI r0, #3
    CALL f
    MOVI r0, #4
    CALL f
    HALT
.func f
f:
    OUT r0
    RET
)");
  auto a = analyze(p);
  InsnId out = p.block(p.functions[1].entry).insns[0].id;
  CHECK(a.fwd.kind(out, 0) == ConstKind::TOP);
  std::vector<Word> seen;
  for (auto& [key, d] : a.contexts) {
    if (key.first != p.functions[1].entry) continue;
    auto s = a.state_in_context(p, out, key);
    REQUIRE(s.has_value());
    REQUIRE(s->is_const(0));
    seen.push_back(s->value(0));
  }
  std::sort(seen.begin(), seen.end());
  CHECK(seen == std::vector<Word>{3, 4});
}

TEST_CASE("unreachable code is bottom") {
  auto p = prog("HALT\ndead: MOVI r0, #1\nHALT\n");
  auto c = constants(p);
  CHECK(c.kind(nth(p, 1), 0) == ConstKind::BOTTOM);
}

TEST_CASE("analyses agree with path enumeration on acyclic fixtures") {
  int compared = 0, mismatched_const = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Program p = testing::random_acyclic(seed);
    REQUIRE(p.instruction_count() <= 30);
    auto a = analyze(p);
    auto bf = testing::brute_force(p);
    for (auto& [id, l] : bf.live_before) {
      CHECK(a.live.live_before(id) == l);
      const auto& mine = a.fwd.at(id);
      const auto& mop = bf.mop_before.at(id);
      REQUIRE(mine.reachable == mop.reachable);
      if (!mop.reachable) continue;  // after a certain trap
      for (int r = 0; r < kNumRegs; ++r) {
        // soundness: every fact the analysis claims holds on all paths
        if (mine.is_const(r)) CHECK((mop.is_const(r) && mop.value(r) == mine.value(r)));
        if (mine.nonzero(r)) CHECK(mop.nonzero(r));
        if (mop.is_const(r) != mine.is_const(r) || mop.nonzero(r) != mine.nonzero(r)) ++mismatched_const;
      }
      ++compared;
    }
  }
  MESSAGE("points compared: " << compared << ", forward mismatches: " << mismatched_const);
  CHECK(compared > 1000);
}

TEST_CASE("incremental update equals full analysis") {
  auto p = prog("IN r0\nMOVI r1, #2\nADD r2, r0, r1\nOUT r2\nHALT\n");
  auto a = analyze(p);
  auto [up, low] = split_block(p, p.blocks[0].id, 2);
  incremental_update(p, a, {up, low});
  CHECK(a == analyze(p));
  // a change outside the declared region is rejected
  auto q = prog("IN r0\nCMP r0, #0\nBR Z, x\nOUT r0\nx: HALT\n");
  auto b = analyze(q);
  auto [u2, l2] = split_block(q, q.blocks[0].id, 1);
  CHECK_THROWS_AS(incremental_update(q, b, {l2}), AnalysisError);
}
