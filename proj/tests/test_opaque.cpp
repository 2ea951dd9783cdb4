#include <doctest.h>

#include "equiv.hpp"
#include "fog/generator.hpp"
#include "fog/layout.hpp"
#include "fog/opaque.hpp"

using namespace fog;

namespace {

const char* kTen = R"(
.archive 0
.object 0
.func main
main:
    IN r0
    MOVI r1, #3
b1: ADD r0, r0, r1
b2: MUL r0, r0, #3
b3: OUT r0
b4: SUB r1, r1, #1
b5: CMP r1, #0
    BR GT, b1
b6: CALL f
b7: OUT r0
b8: HALT
.archive 0
.object 1
.func f
f:  ADD r0, r0, #7
    RET
)";

// No fake edge is taken on any input.
bool fake_edges_silent(const Program& p, const std::vector<std::vector<Word>>& inputs) {
  std::map<InsnId, BlockId> owner;
  for (const auto& bb : p.blocks)
    for (const auto& in : bb.insns) owner[in.id] = bb.id;
  for (const auto& in : inputs) {
    auto r = run(p, in);
    if (!r.ok()) return false;
    for (const auto& fk : p.fake) {
      BlockId src = owner.at(fk.src);
      bool also_true = false;
      for (const auto& e : p.block(src).succs) also_true |= e.target == fk.dst && e.truth == Truth::TRUE_EDGE;
      if (!also_true && r.profile.edge_counts.count({src, fk.dst})) return false;
    }
  }
  return true;
}

struct Obf {
  Program p;
  std::vector<OpaquePredicate> preds;
  FakeTargetResult ft;
};

Obf obfuscate(const Program& orig, std::uint64_t s, int cycle, double cprob, double ftprob, double ins = 20.0) {
  auto ins_res = insert_predicates(orig, ins, s, liveness(orig));
  auto lay = randomize_layout(ins_res.program, Granularity::BLOCK, s);
  Obf o;
  o.preds = ins_res.predicates;
  o.ft = choose_fake_targets(lay, o.preds, cycle, cprob, ftprob, s);
  o.p = o.ft.program;
  return o;
}

}  // namespace

TEST_CASE("probability zero leaves the program alone") {
  auto p = parse_program(kTen);
  auto r = insert_predicates(p, 0.0, 1, liveness(p));
  CHECK(r.predicates.empty());
  CHECK(structurally_equal(p, r.program));
}

TEST_CASE("saturation inserts into every block with a free register") {
  auto p = parse_program(kTen);
  auto r = insert_predicates(p, 100.0, 1, liveness(p));
  CHECK(r.predicates.size() + r.skipped.size() == p.blocks.size());
  CHECK(r.predicates.size() >= 9);
  CHECK(testing::equivalent(p, r.program, {{1}, {5}, {-3}}));
  for (const auto& op : r.predicates) {
    CHECK(op.computation.size() >= 3);
    CHECK(r.program.fake.count(op.fake));
    CHECK(r.program.pinned.count(op.branch));
  }
}

TEST_CASE("predicates preserve semantics and never take a fake edge") {
  for (std::uint64_t s = 1; s <= 50; ++s) {
    auto b = generate_benchmark(small_benchmark(s));
    auto o = obfuscate(b.program, s, 4, 50.0, 50.0);
    CHECK(testing::equivalent(b.program, o.p, b.measurement));
    CHECK(fake_edges_silent(o.p, b.measurement));
    CHECK(o.p.fake.size() == o.preds.size());
  }
}

TEST_CASE("cycle size one points every fake edge into its own computation") {
  auto b = generate_benchmark(small_benchmark(2));
  auto o = obfuscate(b.program, 2, 1, 100.0, 50.0, 50.0);
  REQUIRE(!o.preds.empty());
  CHECK(o.ft.cycles.size() == o.preds.size());
  for (const auto& q : o.preds) {
    CHECK(q.block != q.branch_block);
    CHECK(q.fake.dst == q.branch_block);
  }
  CHECK(testing::equivalent(b.program, o.p, b.measurement));
}

TEST_CASE("cycle probability zero creates no cycles") {
  auto b = generate_benchmark(small_benchmark(4));
  auto o = obfuscate(b.program, 4, 4, 0.0, 50.0, 50.0);
  CHECK(o.ft.cycles.empty());
  for (const auto& q : o.preds) {
    CHECK(q.cycle == -1);
    CHECK(q.block == q.branch_block);
  }
}

TEST_CASE("eight predicates in cycles of four") {
  auto p = parse_program(kTen);
  auto ins = insert_predicates(p, 100.0, 9, liveness(p));
  REQUIRE(ins.predicates.size() >= 8);
  ins.predicates.resize(8);
  // drop the fake keys of the predicates we are not using
  Program q = ins.program;
  auto preds = ins.predicates;
  auto r = choose_fake_targets(q, preds, 4, 100.0, 0.0, 9);
  CHECK(r.cycles.size() == 2);
  CHECK(!r.short_group);
  std::map<int, const OpaquePredicate*> by_id;
  for (const auto& op : preds) by_id[op.id] = &op;
  for (const auto& c : r.cycles) {
    REQUIRE(c.members.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto& cur = *by_id[c.members[i]];
      const auto& nxt = *by_id[c.members[(i + 1) % 4]];
      CHECK(cur.fake.dst == nxt.branch_block);
      CHECK(nxt.block != nxt.branch_block);
      // the landing point is strictly inside the computation
      const auto& lo = r.program.block(nxt.branch_block).insns;
      CHECK(lo.front().id != nxt.computation.front());
      CHECK(std::find(nxt.computation.begin(), nxt.computation.end(), lo.front().id) != nxt.computation.end());
    }
  }
  CHECK(testing::equivalent(p, r.program, {{1}, {5}, {-3}}));
}

TEST_CASE("a short last group is recorded") {
  auto p = parse_program(kTen);
  auto ins = insert_predicates(p, 100.0, 9, liveness(p));
  ins.predicates.resize(3);
  auto r = choose_fake_targets(ins.program, ins.predicates, 4, 100.0, 0.0, 9);
  CHECK(r.short_group);
  CHECK(r.cycles.size() == 1);
  CHECK(r.cycles[0].members.size() == 3);
}

TEST_CASE("fall-through probability decides the fake side") {
  auto b = generate_benchmark(small_benchmark(6));
  auto all = obfuscate(b.program, 6, 4, 0.0, 100.0, 40.0);
  auto none = obfuscate(b.program, 6, 4, 0.0, 0.0, 40.0);
  int ft = 0;
  for (const auto& q : all.preds) ft += q.fake.kind == EdgeKind::FALLTHROUGH;
  CHECK(ft + static_cast<int>(all.ft.fallthrough_fallbacks.size()) == static_cast<int>(all.preds.size()));
  CHECK(ft > 0);
  for (const auto& q : none.preds) CHECK(q.fake.kind == EdgeKind::BRANCH_TAKEN);
  for (const auto& q : all.preds)
    if (q.fake.kind == EdgeKind::FALLTHROUGH) {
      std::size_t i = all.p.index_of(q.branch_block);
      CHECK(all.p.blocks[i + 1].id == q.fake.dst);
      CHECK(q.kind == PredicateKind::ALWAYS_TRUE);
    }
  CHECK(testing::equivalent(b.program, all.p, b.measurement));
}

TEST_CASE("non-cycle fake edges often cross archives") {
  auto b = generate_benchmark(standard_benchmark(1));
  auto o = obfuscate(b.program, 1, 4, 0.0, 50.0);
  int n = 0, cross = 0;
  for (const auto& q : o.preds) {
    ++n;
    cross += o.p.block(q.block).prov.archive_id != o.p.block(q.fake.dst).prov.archive_id;
  }
  REQUIRE(n > 50);
  CHECK(cross >= 0.3 * n);
}
