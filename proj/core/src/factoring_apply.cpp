#include <algorithm>
#include <bit>
#include <map>
#include <set>

#include "factoring_internal.hpp"
#include "fog/factoring.hpp"

namespace fog {

using namespace detail;

namespace {

// Sequentializes dst <- src moves that happen "at once"; cycles become SWAPs.
void emit_parallel(Program& p, std::vector<std::pair<int, int>> mv, std::vector<Instruction>& out) {
  std::erase_if(mv, [](auto& x) { return x.first == x.second; });
  while (!mv.empty()) {
    bool progress = false;
    for (std::size_t i = 0; i < mv.size(); ++i) {
      int d = mv[i].first;
      bool is_src = std::any_of(mv.begin(), mv.end(), [&](auto& x) { return x.second == d; });
      if (is_src) continue;
      out.push_back(make_insn(Op::MOV, {Operand::r(d), Operand::r(mv[i].second)}, p.fresh_insn()));
      mv.erase(mv.begin() + static_cast<std::ptrdiff_t>(i));
      progress = true;
      break;
    }
    if (progress) continue;
    auto [d, s] = mv.front();
    out.push_back(make_insn(Op::SWAP, {Operand::r(d), Operand::r(s)}, p.fresh_insn()));
    mv.erase(mv.begin());
    for (auto& x : mv)
      if (x.second == d) x.second = s;
    std::erase_if(mv, [](auto& x) { return x.first == x.second; });
  }
}

const Instruction& insn_in(const BasicBlock& bb, InsnId id) {
  for (const auto& in : bb.insns)
    if (in.id == id) return in;
  throw CfgError("instruction " + std::to_string(id) + " not in " + bb.label);
}

// A block to aim a fake edge at. With the configured bias, the middle of an
// opaque predicate computation, split on demand.
BlockId fake_target(Program& p, std::vector<OpaquePredicate>* preds, const FactoringOptions& opt, Rng& rng,
                    const std::set<BlockId>& avoid, std::set<BlockId>& touched) {
  if (preds && !preds->empty() && rng.percent(opt.predicate_target_bias)) {
    auto& q = (*preds)[rng.below(preds->size())];
    if (q.branch_block == q.block && q.computation.size() >= 2 && p.has_block(q.block) &&
        p.block(q.block).insns.size() == q.computation.size() + 1) {
      auto j = static_cast<std::size_t>(rng.range(1, static_cast<std::int64_t>(q.computation.size()) - 1));
      auto [hi, lo] = split_block(p, q.block, j);
      q.branch_block = lo;
      touched.insert(hi);
      touched.insert(lo);
    }
    if (q.branch_block != q.block && p.has_block(q.branch_block)) return q.branch_block;
  }
  for (int tries = 0; tries < 32; ++tries) {
    BlockId b = p.blocks[rng.below(p.blocks.size())].id;
    if (!avoid.count(b)) return b;
  }
  return p.entry_block();
}

// Immediate dominators over TRUE intraprocedural edges, with a virtual root
// feeding every function entry. Unreachable blocks map to kNoBlock.
std::map<BlockId, BlockId> dominators(const Program& p) {
  const std::size_t n = p.blocks.size(), root = n;
  std::vector<std::vector<std::size_t>> succ(n + 1), pred(n + 1);
  auto edge = [&](std::size_t a, std::size_t b) {
    succ[a].push_back(b);
    pred[b].push_back(a);
  };
  for (const auto& f : p.functions) edge(root, p.index_of(f.entry));
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& e : p.blocks[i].succs)
      if (e.truth == Truth::TRUE_EDGE && e.kind != EdgeKind::CALL) edge(i, p.index_of(e.target));
  std::vector<std::size_t> rpo, order(n + 1, SIZE_MAX);
  std::vector<char> seen(n + 1, 0);
  std::vector<std::pair<std::size_t, std::size_t>> st{{root, 0}};
  seen[root] = 1;
  while (!st.empty()) {
    auto& [v, k] = st.back();
    if (k < succ[v].size()) {
      std::size_t w = succ[v][k++];
      if (!seen[w]) {
        seen[w] = 1;
        st.emplace_back(w, 0);
      }
    } else {
      rpo.push_back(v);
      st.pop_back();
    }
  }
  std::reverse(rpo.begin(), rpo.end());
  for (std::size_t i = 0; i < rpo.size(); ++i) order[rpo[i]] = i;
  std::vector<std::size_t> idom(n + 1, SIZE_MAX);
  idom[root] = root;
  auto intersect = [&](std::size_t a, std::size_t b) {
    while (a != b) {
      while (order[a] > order[b]) a = idom[a];
      while (order[b] > order[a]) b = idom[b];
    }
    return a;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t v : rpo) {
      if (v == root) continue;
      std::size_t nd = SIZE_MAX;
      for (std::size_t u : pred[v])
        if (idom[u] != SIZE_MAX) nd = nd == SIZE_MAX ? u : intersect(u, nd);
      if (nd != idom[v]) {
        idom[v] = nd;
        changed = true;
      }
    }
  }
  std::map<BlockId, BlockId> out;
  for (std::size_t i = 0; i < n; ++i)
    out[p.blocks[i].id] = idom[i] == SIZE_MAX || idom[i] == root ? kNoBlock : p.blocks[idom[i]].id;
  return out;
}

// Where a selection point goes in `bb`: before the terminator and before a
// flag-setting instruction feeding a BR.
std::size_t selection_index(const BasicBlock& bb) {
  std::size_t k = body_size(bb);
  if (k < bb.insns.size() && bb.insns.back().op == Op::BR && k > 0 && bb.insns[k - 1].sets_flags) --k;
  return k;
}

RegSet live_at(const Analyses& a, const BasicBlock& bb, std::size_t k) {
  if (k < bb.insns.size()) return a.live.live_before(bb.insns[k].id);
  auto it = a.live.block_out.find(bb.id);
  return it == a.live.block_out.end() ? kAllRegs : it->second;
}

// Interprocedural successors: TRUE edges plus returns to every return site
// of a function the block may belong to.
std::map<BlockId, std::vector<BlockId>> return_edges(const Program& p) {
  std::map<BlockId, std::vector<BlockId>> sites;  // function entry -> return sites
  for (const auto& bb : p.blocks) {
    if (bb.insns.empty() || bb.insns.back().op != Op::CALL) continue;
    BlockId callee = static_cast<BlockId>(bb.insns.back().ops[0].value);
    for (const auto& e : bb.succs)
      if (e.kind == EdgeKind::RETURN_LINK) sites[callee].push_back(e.target);
  }
  std::map<BlockId, std::vector<BlockId>> out;
  for (const auto& f : p.functions) {
    auto it = sites.find(f.entry);
    if (it == sites.end()) continue;
    std::set<BlockId> seen{f.entry};
    std::vector<BlockId> work{f.entry};
    while (!work.empty()) {
      BlockId b = work.back();
      work.pop_back();
      const auto& bb = p.block(b);
      if (!bb.insns.empty() && bb.insns.back().op == Op::RET) {
        auto& v = out[b];
        v.insert(v.end(), it->second.begin(), it->second.end());
      }
      for (const auto& e : bb.succs)
        if (e.truth == Truth::TRUE_EDGE && e.kind != EdgeKind::CALL && seen.insert(e.target).second) work.push_back(e.target);
    }
  }
  return out;
}

std::set<BlockId> reach(const Program& p, const std::map<BlockId, std::vector<BlockId>>& rets,
                        const std::vector<BlockId>& start, const std::set<BlockId>& kill) {
  std::set<BlockId> seen;
  std::vector<BlockId> work;
  for (BlockId b : start)
    if (seen.insert(b).second) work.push_back(b);
  while (!work.empty()) {
    BlockId b = work.back();
    work.pop_back();
    if (kill.count(b)) continue;
    auto push = [&](BlockId t) {
      if (seen.insert(t).second) work.push_back(t);
    };
    for (const auto& e : p.block(b).succs)
      if (e.truth == Truth::TRUE_EDGE) push(e.target);
    if (auto it = rets.find(b); it != rets.end())
      for (BlockId t : it->second) push(t);
  }
  return seen;
}

}  // namespace

std::set<BlockId> apply_factoring(Program& p, const Analyses& a, const CandidateSet& set, const RenamingPlan& plan, DispatcherKind kind,
                                  const FactoringOptions& opt, std::vector<OpaquePredicate>* preds, Rng& rng,
                                  AppliedSet& out) {
  const auto& frags = set.fragments;
  const std::size_t m = frags.size();
  const auto ref = static_cast<std::size_t>(plan.reference);
  const ControlPlan& cp = plan.control.at(kind);
  auto R = Operand::r;
  auto I = Operand::imm;

  std::set<BlockId> region;
  const auto ft = fallthrough_targets(p);
  std::map<BlockId, std::size_t> ctx_of;
  for (std::size_t c = 0; c < m; ++c) ctx_of[frags[c].block] = c;

  const BlockId fblk = p.fresh_block();
  std::vector<BlockId> bb_b(m);
  for (auto& b : bb_b) b = p.fresh_block();
  const bool bounds = kind == DispatcherKind::STATIC_SWITCH && plan.bounds_check;
  const BlockId extra = kind == DispatcherKind::COND_JUMP || bounds ? p.fresh_block() : kNoBlock;

  // the shared copy
  const auto& refb = p.block(frags[ref].block);
  std::vector<Instruction> shared;
  for (InsnId id : frags[ref].insns) shared.push_back(insn_in(refb, id));
  for (std::size_t k = 0; k < plan.aux_slots.size(); ++k) {
    auto [i, j] = plan.aux_slots[k];
    auto& in = shared[i];
    if (in.op == Op::MOVI) {
      in.op = Op::MOV;
      in.ops[1] = R(plan.aux_regs[k]);
    } else {
      in.ops[static_cast<std::size_t>(j)] = R(plan.aux_regs[k]);
    }
  }
  const Provenance fprov = refb.prov;

  // controller values; switch slots interleave fake entries
  std::vector<std::optional<Operand>> ctrl_val(m);
  std::vector<std::size_t> index(m, 0);
  std::vector<char> slot_real;
  std::vector<BlockId> slot_target;
  if (kind == DispatcherKind::STATIC_SWITCH || kind == DispatcherKind::DYNAMIC_SWITCH) {
    std::vector<std::size_t> order(m);
    for (std::size_t c = 0; c < m; ++c) order[c] = c;
    rng.shuffle(order);
    const double pf = std::min(opt.fake_entry_probability, 90.0);
    for (std::size_t placed = 0; placed < m;) {
      if (rng.percent(pf)) {
        slot_real.push_back(0);
        slot_target.push_back(kNoBlock);
      } else {
        index[order[placed]] = slot_real.size();
        slot_real.push_back(1);
        slot_target.push_back(bb_b[order[placed]]);
        ++placed;
      }
    }
    while (rng.percent(pf) && slot_real.size() < 2 * m + 4) {
      slot_real.push_back(0);
      slot_target.push_back(kNoBlock);
    }
  }
  for (std::size_t c = 0; c < m; ++c) {
    switch (kind) {
      case DispatcherKind::COND_JUMP:
        if (!cp.reuse[c]) ctrl_val[c] = I(static_cast<int>(c) == cp.zero_context ? 0 : 1);
        break;
      case DispatcherKind::INDIRECT_BRANCH: ctrl_val[c] = Operand::block(bb_b[c]); break;
      default: ctrl_val[c] = I(static_cast<Word>(index[c])); break;
    }
  }

  // tables and the selector variable
  std::vector<std::uint32_t> tables;
  std::uint32_t xg = 0;
  auto new_table = [&] {
    Table t;
    t.name = "_ftab" + std::to_string(p.tables.size());
    t.entries.assign(slot_real.size(), bb_b[0]);
    p.tables.push_back(std::move(t));
    return static_cast<std::uint32_t>(p.tables.size() - 1);
  };
  if (kind == DispatcherKind::STATIC_SWITCH) tables.push_back(new_table());
  struct Sel {
    int table = 0, u = -1, v = -1;
  };
  std::map<BlockId, Sel> sel;  // selection point per block
  std::vector<BlockId> sel_block(m, kNoBlock);
  if (kind == DispatcherKind::DYNAMIC_SWITCH) {
    int q = 2 + (m >= 3 && rng.percent(50) ? 1 : 0);
    for (int k = 0; k < q; ++k) tables.push_back(new_table());
    xg = static_cast<std::uint32_t>(p.globals.size());
    p.globals.push_back({"_fsel" + std::to_string(xg), p.table_address(tables[0])});

    // nearest dominator outside the set with two dead registers, else the end of the glue
    auto idom = dominators(p);
    for (std::size_t c = 0; c < m; ++c) {
      int want = c == 0 ? 1 : static_cast<int>(rng.below(static_cast<std::uint64_t>(q)));
      BlockId d = idom[frags[c].block];
      for (int depth = 0; d != kNoBlock && depth < 64; ++depth, d = idom[d]) {
        if (ctx_of.count(d)) continue;
        if (sel.count(d)) {
          sel_block[c] = d;
          break;
        }
        const auto& db = p.block(d);
        if (db.insns.empty() || p.pinned.count(db.insns.back().id)) continue;
        RegSet free = ~live_at(a, db, selection_index(db)) & 0xffffu;
        if (std::popcount(free) < 2) continue;
        Sel s;
        s.table = want;
        s.u = std::countr_zero(free);
        s.v = std::countr_zero(free & ~(1u << s.u));
        sel[d] = s;
        sel_block[c] = d;
        break;
      }
      if (sel_block[c] == kNoBlock) {
        RegSet free = plan.glue[c].spare & ~(1u << cp.ctrl);
        Sel s;
        s.table = want;
        s.u = std::countr_zero(free);
        s.v = std::countr_zero(free & ~(1u << s.u));
        sel[frags[c].block] = s;
        sel_block[c] = frags[c].block;
      }
    }
  }
  auto selection_code = [&](const Sel& s, std::vector<Instruction>& v) {
    v.push_back(make_insn(Op::MOVI, {R(s.u), Operand::global(xg)}, p.fresh_insn()));
    v.push_back(make_insn(Op::MOVI, {R(s.v), Operand::table(tables[static_cast<std::size_t>(s.table)])}, p.fresh_insn()));
    v.push_back(make_insn(Op::STORE, {R(s.v), R(s.u), I(0)}, p.fresh_insn()));
  };

  // the factored block and its dispatcher
  BasicBlock F;
  F.id = fblk;
  F.label = p.fresh_label(fblk);
  F.prov = fprov;
  F.insns = shared;
  BasicBlock X;
  X.id = extra;
  X.label = extra == kNoBlock ? "" : p.fresh_label(extra);
  X.prov = fprov;
  InsnId bounds_br = 0;
  switch (kind) {
    case DispatcherKind::COND_JUMP: {
      F.insns.push_back(make_insn(Op::CMP, {R(cp.ctrl), I(0)}, p.fresh_insn()));
      F.insns.push_back(make_br(Cond::Z, bb_b[static_cast<std::size_t>(cp.zero_context)], p.fresh_insn()));
      X.insns.push_back(make_insn(Op::JMP, {Operand::block(bb_b[1 - static_cast<std::size_t>(cp.zero_context)])}, p.fresh_insn()));
      out.dispatcher_insn = F.insns.back().id;
      out.dispatcher_block = fblk;
      break;
    }
    case DispatcherKind::INDIRECT_BRANCH:
      F.insns.push_back(make_insn(Op::JMPI, {R(cp.ctrl)}, p.fresh_insn()));
      p.indirect_targets[F.insns.back().id] = bb_b;
      out.dispatcher_insn = F.insns.back().id;
      out.dispatcher_block = fblk;
      break;
    case DispatcherKind::STATIC_SWITCH: {
      auto swj = make_insn(Op::SWJ, {R(cp.ctrl), Operand::table(tables[0])}, p.fresh_insn());
      out.dispatcher_insn = swj.id;
      if (bounds) {
        F.insns.push_back(make_insn(Op::CMP, {R(cp.ctrl), I(static_cast<Word>(slot_real.size()))}, p.fresh_insn()));
        F.insns.push_back(make_br(Cond::GE, bb_b[0], p.fresh_insn()));
        bounds_br = F.insns.back().id;
        X.insns.push_back(swj);
        out.dispatcher_block = extra;
      } else {
        F.insns.push_back(swj);
        out.dispatcher_block = fblk;
      }
      break;
    }
    case DispatcherKind::DYNAMIC_SWITCH: {
      int t = cp.temp;
      F.insns.push_back(make_insn(Op::MOVI, {R(t), Operand::global(xg)}, p.fresh_insn()));
      F.insns.push_back(make_insn(Op::LOAD, {R(t), R(t), I(0)}, p.fresh_insn()));
      F.insns.push_back(make_insn(Op::ADD, {R(t), R(t), R(cp.ctrl)}, p.fresh_insn()));
      F.insns.push_back(make_insn(Op::LOAD, {R(t), R(t), I(0)}, p.fresh_insn()));
      F.insns.push_back(make_insn(Op::JMPI, {R(t)}, p.fresh_insn()));
      p.indirect_targets[F.insns.back().id] = bb_b;
      out.dispatcher_insn = F.insns.back().id;
      out.dispatcher_block = fblk;
      break;
    }
  }

  // split every context around its fragment
  std::vector<BasicBlock> blocks;
  blocks.reserve(p.blocks.size() + m + 2);
  out.glue_sizes.assign(m, 0);
  for (auto& bb : p.blocks) {
    auto cit = ctx_of.find(bb.id);
    if (cit == ctx_of.end()) {
      if (auto sit = sel.find(bb.id); sit != sel.end()) {
        std::vector<Instruction> code;
        selection_code(sit->second, code);
        auto k = static_cast<std::ptrdiff_t>(selection_index(bb));
        bb.insns.insert(bb.insns.begin() + k, code.begin(), code.end());
        region.insert(bb.id);
      }
      blocks.push_back(std::move(bb));
      continue;
    }
    const std::size_t c = cit->second;
    const auto& g = plan.glue[c];
    BasicBlock ba;
    ba.id = bb.id;
    ba.label = bb.label;
    ba.prov = bb.prov;
    ba.is_entry = bb.is_entry;
    for (InsnId id : g.before) ba.insns.push_back(insn_in(bb, id));
    std::size_t glue_start = ba.insns.size();
    emit_parallel(p, g.prologue, ba.insns);
    for (std::size_t k = 0; k < plan.aux_regs.size(); ++k)
      ba.insns.push_back(make_insn(Op::MOVI, {R(plan.aux_regs[k]), g.aux[k]}, p.fresh_insn()));
    if (ctrl_val[c]) ba.insns.push_back(make_insn(Op::MOVI, {R(cp.ctrl), *ctrl_val[c]}, p.fresh_insn()));
    if (sel_block[c] == bb.id) selection_code(sel.at(bb.id), ba.insns);
    ba.insns.push_back(make_insn(Op::JMP, {Operand::block(fblk)}, p.fresh_insn()));

    BasicBlock bbb;
    bbb.id = bb_b[c];
    bbb.label = p.fresh_label(bbb.id);
    bbb.prov = bb.prov;
    emit_parallel(p, g.epilogue, bbb.insns);
    out.glue_sizes[c] = static_cast<int>(ba.insns.size() - glue_start - 1 + bbb.insns.size());
    for (InsnId id : g.after) bbb.insns.push_back(insn_in(bb, id));
    if (body_size(bb) < bb.insns.size()) bbb.insns.push_back(bb.insns.back());
    if (bbb.insns.empty()) bbb.insns.push_back(make_insn(Op::JMP, {Operand::block(ft.at(bb.id))}, p.fresh_insn()));

    region.insert(ba.id);
    region.insert(bbb.id);
    blocks.push_back(std::move(ba));
    if (c == ref) {
      blocks.push_back(std::move(F));
      if (extra != kNoBlock) blocks.push_back(std::move(X));
    }
    blocks.push_back(std::move(bbb));
  }
  p.blocks = std::move(blocks);
  region.insert(fblk);
  if (extra != kNoBlock) region.insert(extra);
  build_cfg(p);

  std::set<BlockId> avoid(bb_b.begin(), bb_b.end());
  avoid.insert(fblk);
  if (extra != kNoBlock) avoid.insert(extra);
  std::set<BlockId> touched;
  auto fake = [&] {
    ++out.fake_entries;
    return fake_target(p, preds, opt, rng, avoid, touched);
  };
  if (kind == DispatcherKind::STATIC_SWITCH) {
    auto& entries = p.tables[tables[0]].entries;
    for (std::size_t k = 0; k < slot_real.size(); ++k) {
      BlockId t = slot_real[k] ? slot_target[k] : fake();
      p.tables[tables[0]].entries[k] = t;
      if (!slot_real[k]) p.fake.insert({out.dispatcher_insn, EdgeKind::SWITCH_CASE, t});
    }
    (void)entries;
    if (bounds) {
      BlockId t = fake();
      for (auto& bb : p.blocks)
        for (auto& in : bb.insns)
          if (in.id == bounds_br) in.ops[0] = Operand::block(t);
      p.fake.insert({bounds_br, EdgeKind::BRANCH_TAKEN, t});
    }
  } else if (kind == DispatcherKind::DYNAMIC_SWITCH) {
    // T[k][i] must be context i's continuation wherever selection point k (or
    // program entry, for the first table) reaches that context's dispatch
    const auto rets = return_edges(p);
    std::set<BlockId> kill;
    for (const auto& [b, s] : sel) kill.insert(b);
    const std::size_t nt = tables.size();
    std::vector<std::vector<char>> fixed(nt, std::vector<char>(slot_real.size(), 0));
    auto constrain = [&](std::size_t k, const std::set<BlockId>& seen) {
      for (std::size_t c = 0; c < m; ++c)
        if (sel_block[c] != frags[c].block && seen.count(frags[c].block)) fixed[k][index[c]] = 1;
    };
    constrain(0, reach(p, rets, {p.entry_block()}, kill));
    for (const auto& [b, s] : sel) {
      std::vector<BlockId> start;
      for (const auto& e : p.block(b).succs)
        if (e.truth == Truth::TRUE_EDGE) start.push_back(e.target);
      if (auto it = rets.find(b); it != rets.end()) start.insert(start.end(), it->second.begin(), it->second.end());
      constrain(static_cast<std::size_t>(s.table), reach(p, rets, start, kill));
    }
    for (std::size_t c = 0; c < m; ++c)
      if (sel_block[c] == frags[c].block) fixed[static_cast<std::size_t>(sel.at(frags[c].block).table)][index[c]] = 1;
    for (std::size_t k = 0; k < nt; ++k)
      for (std::size_t i = 0; i < slot_real.size(); ++i)
        p.tables[tables[k]].entries[i] = fixed[k][i] ? slot_target[i] : fake();
    out.table_choice.resize(m);
    for (std::size_t c = 0; c < m; ++c) out.table_choice[c] = sel.at(sel_block[c]).table;
  }
  region.insert(touched.begin(), touched.end());
  build_cfg(p);

  out.fragments = frags;
  out.reference = plan.reference;
  out.dispatcher = kind;
  out.factored_block = fblk;
  if (kind == DispatcherKind::STATIC_SWITCH || kind == DispatcherKind::DYNAMIC_SWITCH)
    for (std::size_t c = 0; c < m; ++c) out.slot_index.push_back(static_cast<int>(index[c]));
  out.tables = tables;
  for (const auto& [b, s] : sel) out.selection_blocks.push_back(b);
  for (std::size_t c = 0; c < m; ++c) out.split_pairs.emplace_back(frags[c].block, bb_b[c]);
  out.priority = set.priority;
  return region;
}

FactoringReport run_factoring_phase(Program& p, const FactoringOptions& opt, Analyses& a, const InsnCounts& counts,
                                    std::vector<OpaquePredicate>* preds) {
  FactoringReport rep;
  auto frags = enumerate_fragments(p, counts, opt.min_fragment_size, opt.max_fragment_size);
  auto cands = build_candidates(p, frags, a, counts, opt);
  rep.candidates = static_cast<int>(cands.size());
  Rng rng(opt.seed, "factoring");
  std::map<InsnId, BlockId> where;
  auto locate = [&] {
    where.clear();
    for (const auto& bb : p.blocks)
      for (const auto& in : bb.insns) where[in.id] = bb.id;
  };
  locate();
  for (auto& cs : cands) {
    if (!rng.percent(opt.factoring_probability)) {
      ++rep.skipped_probability;
      continue;
    }
    bool ok = true;
    for (auto& f : cs.fragments) {
      auto it = where.find(f.insns.front());
      if (it == where.end()) {
        ok = false;
        break;
      }
      f.block = it->second;
      for (InsnId id : f.insns) {
        auto jt = where.find(id);
        ok &= jt != where.end() && jt->second == f.block;
      }
    }
    std::optional<RenamingPlan> plan;
    if (ok) plan = plan_renaming(p, a, cs.fragments, cs.reference, opt.enabled);
    std::optional<DispatcherKind> kind;
    if (plan) kind = choose_dispatcher(*plan, opt.enabled, rng);
    if (!kind) {
      ++rep.skipped_invalid;
      continue;
    }
    AppliedSet as;
    as.id = static_cast<int>(rep.applied.size());
    auto region = apply_factoring(p, a, cs, *plan, *kind, opt, preds, rng, as);
    incremental_update(p, a, region);
    if (opt.check_incremental && !(a == analyze(p, a.opt)))
      throw AnalysisError("incremental analysis diverged after factoring set " + std::to_string(as.id));
    for (const auto& f : cs.fragments) rep.factored_instructions += f.insns.size();
    rep.applied.push_back(std::move(as));
    locate();
  }
  return rep;
}

}  // namespace fog
