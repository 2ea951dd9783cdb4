#include <doctest.h>

#include "fog/interp.hpp"

using namespace fog;

namespace {
Program prog(const std::string& body) { return parse_program(".archive 0\n.object 0\n.func main\nmain:\n" + body); }
}  // namespace

TEST_CASE("simple output") {
  auto r = run(prog("MOVI r0, #7\nOUT r0\nHALT\n"), {});
  CHECK(r.ok());
  CHECK(r.outputs == std::vector<Word>{7});
}

TEST_CASE("traps are distinct") {
  CHECK(run(prog("L: JMP L\n"), {}, {.fuel = 100}).status == RunStatus::FUEL_EXHAUSTED);
  CHECK(run(prog("MOVI r1, #8\nLOAD r0, [r1, #0]\nHALT\n"), {}).status == RunStatus::GUARD_PAGE);
  CHECK(run(prog("MOVI r1, #5000\nJMPI r1\n"), {}).status == RunStatus::BAD_JUMP);
  CHECK(run(prog("RET\n"), {}).status == RunStatus::EMPTY_RETURN);
}

TEST_CASE("memory, calls and flags") {
  auto p = parse_program(R"(
.word g 40
.archive 0
.object 0
.func main
main:
    MOVI r1, g
    LOAD r0, [r1, #0]
    CALL inc
    STORE r0, [r1, #0]
    LOAD r2, [r1, #0]
    OUT r2
    SUBS r3, r2, #41
    BR Z, yes
    HALT
yes:
    OUT r3
    HALT
.func inc
inc:
    ADD r0, r0, #1
    RET
)");
  auto r = run(p, {});
  CHECK(r.ok());
  CHECK(r.outputs == std::vector<Word>{41, 0});
}

TEST_CASE("determinism and profile consistency") {
  auto p = prog("IN r0\nL: SUB r0, r0, #1\nCMP r0, #0\nBR GT, L\nOUT r0\nHALT\n");
  auto a = run(p, {5}, {.trace = true});
  auto b = run(p, {5}, {.trace = true});
  CHECK(a.outputs == b.outputs);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].block == b.trace[i].block);
  for (auto& [blk, c] : a.profile.block_counts) {
    std::uint64_t out = 0;
    for (auto& [e, k] : a.profile.edge_counts)
      if (e.first == blk) out += k;
    const auto& bb = p.block(blk);
    if (!bb.insns.empty() && bb.insns.back().op == Op::HALT) continue;
    CHECK(out == c);
  }
}

TEST_CASE("dispatcher variability") {
  auto p = prog("IN r0\nCMP r0, #0\nBR Z, a\nOUT r0\nHALT\na: HALT\n");
  BlockId d = p.blocks[0].id;
  auto t1 = run(p, {0}, {.trace = true}).trace;
  auto t2 = run(p, {1}, {.trace = true}).trace;
  CHECK(dispatcher_variability(t1, {d}, p).at(d) == Variability::INVARIANT);
  Trace both = t1;
  both.insert(both.end(), t2.begin(), t2.end());
  CHECK(dispatcher_variability(both, {d}, p).at(d) == Variability::VARIABLE);
  CHECK(dispatcher_variability(t1, {p.blocks[2].id}, p).at(p.blocks[2].id) == Variability::UNCOVERED);
  CHECK_THROWS(dispatcher_variability(t1, {999}, p));
}
