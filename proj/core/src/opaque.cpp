#include "fog/opaque.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "fog/rng.hpp"

namespace fog {

const char* family_name(Family f) {
  switch (f) {
    case Family::SQUARE_MOD4_LT2: return "square_mod4_lt2";
    case Family::SQUARE_MOD4_EQ3: return "square_mod4_eq3";
    case Family::CONSEC_EVEN: return "consec_even";
    case Family::CONSEC_ODD: return "consec_odd";
  }
  return "?";
}

const char* predicate_kind_name(PredicateKind k) {
  return k == PredicateKind::ALWAYS_TRUE ? "ALWAYS_TRUE" : "ALWAYS_FALSE";
}

namespace {

// Condition that always holds after the family's computation.
Cond true_cond(Family f) {
  switch (f) {
    case Family::SQUARE_MOD4_LT2: return Cond::LT;
    case Family::SQUARE_MOD4_EQ3: return Cond::NZ;
    case Family::CONSEC_EVEN: return Cond::Z;
    case Family::CONSEC_ODD: return Cond::NZ;
  }
  return Cond::Z;
}

std::vector<Instruction> computation(Program& p, Family f, int t, int x) {
  auto R = Operand::r;
  auto I = Operand::imm;
  std::vector<Instruction> v;
  auto add = [&](Op op, std::initializer_list<Operand> ops, bool s = false) {
    v.push_back(make_insn(op, ops, p.fresh_insn()));
    v.back().sets_flags = s;
  };
  switch (f) {
    case Family::SQUARE_MOD4_LT2:
    case Family::SQUARE_MOD4_EQ3:
      add(Op::MUL, {R(t), R(x), R(x)});
      add(Op::AND, {R(t), R(t), I(3)});
      add(Op::CMP, {R(t), I(f == Family::SQUARE_MOD4_LT2 ? 2 : 3)}, true);
      break;
    case Family::CONSEC_EVEN:
      add(Op::ADD, {R(t), R(x), I(1)});
      add(Op::MUL, {R(t), R(t), R(x)});
      add(Op::AND, {R(t), R(t), I(1)}, true);
      break;
    case Family::CONSEC_ODD:
      add(Op::ADD, {R(t), R(x), I(1)});
      add(Op::MUL, {R(t), R(t), R(x)});
      add(Op::AND, {R(t), R(t), I(1)});
      add(Op::CMP, {R(t), I(1)}, true);
      break;
  }
  return v;
}

// Uniform block outside function `fid` (any other block if there is none).
BlockId random_foreign_block(const Program& p, const std::vector<BlockId>& pool, int fid, BlockId avoid, Rng& rng) {
  std::vector<BlockId> c;
  for (BlockId b : pool)
    if (p.has_block(b) && p.block(b).prov.function_id != fid && b != avoid) c.push_back(b);
  if (c.empty())
    for (BlockId b : pool)
      if (p.has_block(b) && b != avoid) c.push_back(b);
  return c.empty() ? avoid : rng.pick(c);
}

}  // namespace

InsertResult insert_predicates(Program p, double probability, std::uint64_t seed, const LivenessResult& live) {
  Rng rng(seed, "opaque.insert");
  InsertResult res;
  std::vector<BlockId> ids;
  for (const auto& bb : p.blocks) ids.push_back(bb.id);
  std::vector<BlockId> chosen;
  for (BlockId b : ids)
    if (rng.percent(probability)) chosen.push_back(b);

  for (BlockId b : chosen) {
    auto it = live.block_in.find(b);
    RegSet in = it == live.block_in.end() ? kAllRegs : it->second;
    std::vector<int> dead;
    for (int r = 0; r < kNumRegs; ++r)
      if (!(in >> r & 1)) dead.push_back(r);
    if (dead.empty() || (in & kFlagsMask)) {
      res.skipped.push_back(b);
      continue;
    }
    int t = rng.pick(dead);
    std::vector<int> src;
    for (int r = 0; r < kNumRegs; ++r)
      if (r != t && (in >> r & 1)) src.push_back(r);
    int x = src.empty() ? (t + 1) % kNumRegs : rng.pick(src);
    Family fam = static_cast<Family>(rng.below(4));

    OpaquePredicate op;
    op.id = static_cast<int>(res.predicates.size());
    op.family = fam;
    op.scratch = t;
    op.source = x;
    auto comp = computation(p, fam, t, x);
    for (const auto& in2 : comp) op.computation.push_back(in2.id);

    std::size_t i = p.index_of(b);
    BasicBlock cont;
    cont.id = p.fresh_block();
    cont.label = p.fresh_label(cont.id);
    cont.prov = p.blocks[i].prov;
    cont.insns = std::move(p.blocks[i].insns);
    BlockId fake = random_foreign_block(p, ids, cont.prov.function_id, b, rng);
    auto br = make_br(negate(true_cond(fam)), fake, p.fresh_insn());
    comp.push_back(br);
    p.blocks[i].insns = std::move(comp);
    op.block = op.branch_block = b;
    op.cont = cont.id;
    op.branch = br.id;
    op.kind = PredicateKind::ALWAYS_FALSE;
    op.fake = {br.id, EdgeKind::BRANCH_TAKEN, fake};
    p.blocks.insert(p.blocks.begin() + static_cast<std::ptrdiff_t>(i) + 1, std::move(cont));
    p.reindex();
    p.fake.insert(op.fake);
    for (InsnId c : op.computation) p.pinned.insert(c);
    p.pinned.insert(op.branch);
    res.predicates.push_back(std::move(op));
  }
  build_cfg(p);
  res.program = std::move(p);
  return res;
}

FakeTargetResult choose_fake_targets(Program p, std::vector<OpaquePredicate>& preds, int cycle_size,
                                     double cycle_probability, double fallthrough_probability, std::uint64_t seed) {
  Rng rng(seed, "opaque.targets");
  FakeTargetResult res;
  if (cycle_size < 1) cycle_size = 1;
  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  // groups and their fake targets
  std::vector<BlockId> target(preds.size(), kNoBlock);
  std::vector<std::size_t> split_at(preds.size(), 0);
  std::vector<int> next_of(preds.size(), -1);
  for (std::size_t g = 0; g < order.size(); g += static_cast<std::size_t>(cycle_size)) {
    std::size_t n = std::min(order.size() - g, static_cast<std::size_t>(cycle_size));
    if (n < static_cast<std::size_t>(cycle_size)) res.short_group = true;
    bool cyc = rng.percent(cycle_probability);
    CouplingCycle cc;
    cc.id = static_cast<int>(res.cycles.size());
    for (std::size_t k = 0; k < n; ++k) {
      auto& pr = preds[order[g + k]];
      if (cyc) {
        std::size_t nxt = order[g + (k + 1) % n];
        next_of[order[g + k]] = static_cast<int>(nxt);
        cc.members.push_back(pr.id);
        pr.cycle = cc.id;
      } else {
        pr.cycle = -1;
      }
    }
    if (cyc) res.cycles.push_back(std::move(cc));
  }
  // interior boundaries, then the splits
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (next_of[i] >= 0) {
      auto& q = preds[static_cast<std::size_t>(next_of[i])];
      if (q.branch_block != q.block) continue;  // already split, maybe referenced from a table
      split_at[static_cast<std::size_t>(next_of[i])] =
          static_cast<std::size_t>(rng.range(1, static_cast<std::int64_t>(q.computation.size()) - 1));
    }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!split_at[i]) continue;
    auto& q = preds[i];
    auto [hi, lo] = split_block(p, q.block, split_at[i]);
    q.branch_block = lo;
    (void)hi;
  }
  // real continuations, with stale repair jumps removed
  for (auto& q : preds) {
    BlockId t = strip_trampoline(p, q.branch_block);
    if (t != kNoBlock) q.cont = t;
  }
  std::set<BlockId> interior;
  for (const auto& q : preds)
    if (q.branch_block != q.block) interior.insert(q.branch_block);
  std::vector<BlockId> pool;
  for (const auto& bb : p.blocks)
    if (!interior.count(bb.id)) pool.push_back(bb.id);
  for (std::size_t oi : order) {
    auto& q = preds[oi];
    if (next_of[oi] < 0) target[oi] = random_foreign_block(p, pool, p.block(q.block).prov.function_id, q.cont, rng);
  }
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (next_of[i] >= 0) target[i] = preds[static_cast<std::size_t>(next_of[i])].branch_block;

  // fall-through requests
  std::map<BlockId, BlockId> chain, chain_pred, ft_over;
  const BlockId entry = p.entry_block();
  for (std::size_t oi : order) {
    auto& q = preds[oi];
    BlockId x = q.branch_block, f = target[oi];
    bool want = rng.percent(fallthrough_probability);
    bool ok = want && f != entry && f != x && !chain_pred.count(f) && !chain.count(x);
    if (ok) {
      for (BlockId c = f; chain.count(c); c = chain[c])
        if (chain[c] == x) ok = false;
    }
    auto& br = p.block(x).insns.back();
    p.fake.erase(q.fake);
    if (ok) {
      chain[x] = f;
      chain_pred[f] = x;
      br.cond = true_cond(q.family);
      br.ops[0] = Operand::block(q.cont);
      q.fake = {br.id, EdgeKind::FALLTHROUGH, f};
      q.kind = PredicateKind::ALWAYS_TRUE;
      ft_over[x] = f;
    } else {
      if (want) res.fallthrough_fallbacks.push_back(q.id);
      br.cond = negate(true_cond(q.family));
      br.ops[0] = Operand::block(f);
      q.fake = {br.id, EdgeKind::BRANCH_TAKEN, f};
      q.kind = PredicateKind::ALWAYS_FALSE;
      ft_over[x] = q.cont;
    }
    p.fake.insert(q.fake);
  }

  std::vector<BlockId> lay;
  lay.reserve(p.blocks.size());
  for (const auto& bb : p.blocks) {
    if (chain_pred.count(bb.id)) continue;
    for (BlockId c = bb.id;;) {
      lay.push_back(c);
      auto it = chain.find(c);
      if (it == chain.end()) break;
      c = it->second;
    }
  }
  relayout(p, lay, ft_over);
  res.program = std::move(p);
  return res;
}

}  // namespace fog
