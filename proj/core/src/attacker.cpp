#include "fog/attacker.hpp"

#include <algorithm>
#include <queue>
#include <tuple>

namespace fog {

const char* edge_class_name(EdgeClass c) {
  switch (c) {
    case EdgeClass::TP: return "TP";
    case EdgeClass::FP: return "FP";
    case EdgeClass::FN: return "FN";
    case EdgeClass::TN: return "TN";
    case EdgeClass::SFN: return "SFN";
    case EdgeClass::STN: return "STN";
  }
  return "?";
}

int AttackerView::function_of(BlockId b) const {
  auto it = assignment.find(b);
  return it == assignment.end() ? kFunctionless : it->second;
}

void AttackerView::refresh_gui() {
  gui.clear();
  for (const auto& e : db) {
    int f = function_of(e.src);
    if (f != kFunctionless && f == function_of(e.dst)) gui.insert(e);
  }
}

namespace {

enum Rank { kFallRank = 0, kJumpRank = 1, kSwitchRank = 2, kRefRank = 3 };

struct Decoded {
  std::vector<std::pair<ViewEdge, int>> edges;  // with queue rank
  std::vector<BlockId> calls, refs;
};

bool is_trampoline(const BasicBlock& bb) { return bb.insns.size() == 1 && bb.insns[0].op == Op::JMP; }

// The table length a bounds check in front of the switch block reveals, or -1.
// The check may sit one trampoline away after layout randomization.
Word switch_bound(const Program& p, std::size_t pos, int idx_reg) {
  if (pos == 0) return -1;
  std::size_t q = pos - 1;
  if (is_trampoline(p.blocks[q]) && p.blocks[q].insns[0].ops[0].value == static_cast<Word>(p.blocks[pos].id)) {
    // reached by the jump; look for the check that falls into the trampoline
    if (q == 0) return -1;
    --q;
  }
  const auto& ins = p.blocks[q].insns;
  if (ins.size() < 2) return -1;
  const auto& br = ins.back();
  const auto& cmp = ins[ins.size() - 2];
  if (br.op != Op::BR || br.cond != Cond::GE || cmp.op != Op::CMP) return -1;
  if (!cmp.ops[0].is_reg() || cmp.ops[0].reg != idx_reg || !cmp.ops[1].is_imm()) return -1;
  return cmp.ops[1].value;
}

Decoded decode(const Program& p, std::size_t pos) {
  Decoded d;
  const auto& bb = p.blocks[pos];
  const BlockId next = pos + 1 < p.blocks.size() ? p.blocks[pos + 1].id : kNoBlock;
  auto add = [&](EdgeKind k, BlockId t, int rank) {
    if (t != kNoBlock && p.has_block(t)) d.edges.push_back({{bb.id, t, k}, rank});
  };
  for (const auto& in : bb.insns)
    if (in.op == Op::MOVI && in.ops[1].is_code_label()) d.refs.push_back(static_cast<BlockId>(in.ops[1].value));
  if (bb.insns.empty()) {
    add(EdgeKind::FALLTHROUGH, next, kFallRank);
    return d;
  }
  const auto& last = bb.insns.back();
  switch (last.op) {
    case Op::BR:
      add(EdgeKind::FALLTHROUGH, next, kFallRank);
      add(EdgeKind::BRANCH_TAKEN, static_cast<BlockId>(last.ops[0].value), kJumpRank);
      break;
    case Op::JMP:
      add(EdgeKind::JUMP, static_cast<BlockId>(last.ops[0].value), kJumpRank);
      break;
    case Op::CALL:
      d.calls.push_back(static_cast<BlockId>(last.ops[0].value));
      add(EdgeKind::RETURN_LINK, next, kFallRank);
      break;
    case Op::SWJ: {
      Word n = switch_bound(p, pos, last.ops[0].reg);
      if (n < 0) break;  // no recognizable pattern: no targets
      const auto& t = p.tables.at(static_cast<std::size_t>(last.ops[1].value));
      for (std::size_t k = 0; k < t.entries.size() && static_cast<Word>(k) < n; ++k)
        add(EdgeKind::SWITCH_CASE, t.entries[k], kSwitchRank);
      if (last.nops > 2) add(EdgeKind::SWITCH_CASE, static_cast<BlockId>(last.ops[2].value), kSwitchRank);
      break;
    }
    case Op::JMPI: case Op::RET: case Op::HALT:
      break;
    default:
      add(EdgeKind::FALLTHROUGH, next, kFallRank);
      break;
  }
  return d;
}

bool conditional(const Program& p, BlockId b) {
  const auto& bb = p.block(b);
  return !bb.insns.empty() && bb.insns.back().op == Op::BR;
}

double weight(const Program& p, const ViewEdge& e, const AttackerOptions& opt) {
  switch (e.kind) {
    case EdgeKind::SWITCH_CASE: return opt.switch_weight;
    case EdgeKind::BRANCH_TAKEN: return opt.taken_weight;
    case EdgeKind::FALLTHROUGH: return conditional(p, e.src) ? opt.fallthrough_weight : opt.direct_weight;
    default: return opt.direct_weight;
  }
}

void discover_from(const Program& p, AttackerView& v, std::vector<BlockId> work) {
  while (!work.empty()) {
    BlockId b = work.back();
    work.pop_back();
    if (!p.has_block(b) || !v.discovered.insert(b).second) continue;
    auto d = decode(p, p.index_of(b));
    for (const auto& [e, r] : d.edges) {
      v.db.insert(e);
      work.push_back(e.dst);
    }
    for (BlockId t : d.refs) work.push_back(t);
  }
}

using Adjacency = std::map<BlockId, std::vector<std::pair<BlockId, double>>>;

Adjacency adjacency(const Program& p, const AttackerView& v, const AttackerOptions& opt) {
  Adjacency adj;
  for (const auto& e : v.db) {
    if (e.src == e.dst) continue;
    double w = weight(p, e, opt);
    adj[e.src].emplace_back(e.dst, w);
    adj[e.dst].emplace_back(e.src, w);
  }
  return adj;
}

// One block-id-ordered pass; returns whether anything moved.
bool sweep(AttackerView& v, const Adjacency& adj, const std::set<BlockId>& fixed) {
  bool moved = false;
  for (BlockId b : v.discovered) {
    if (fixed.count(b)) continue;
    auto it = adj.find(b);
    if (it == adj.end()) continue;
    std::map<int, double> score;
    for (auto [n, w] : it->second) {
      int f = v.function_of(n);
      if (f != kFunctionless) score[f] += w;
    }
    if (score.empty()) continue;
    double best = 0;
    for (auto [f, s] : score) best = std::max(best, s);
    int cur = v.function_of(b);
    constexpr double eps = 1e-9;
    if (cur != kFunctionless && score.count(cur) && score[cur] >= best - eps) continue;
    int pick = kFunctionless;
    for (auto [f, s] : score)
      if (s >= best - eps) {
        pick = f;
        break;
      }
    v.assignment[b] = pick;
    moved = true;
  }
  return moved;
}

}  // namespace

AttackerView recursive_descent(const Program& p, const AttackerOptions& opt) {
  AttackerView v;
  for (const auto& bb : p.blocks) v.assignment[bb.id] = kFunctionless;
  std::set<BlockId> symbol_entries;
  for (const auto& f : p.functions) {
    v.function_entries.push_back(f.entry);
    symbol_entries.insert(f.entry);
  }
  v.symbols = static_cast<int>(v.function_entries.size());

  // (distance, rank, address, block, function); function -2 starts a new one
  using Item = std::tuple<int, int, std::size_t, BlockId, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> q;
  for (int f = 0; f < v.symbols; ++f) {
    BlockId e = v.function_entries[static_cast<std::size_t>(f)];
    if (p.has_block(e)) q.emplace(0, 0, p.index_of(e), e, f);
  }
  while (!q.empty()) {
    auto [dist, rank, pos, b, f] = q.top();
    q.pop();
    if (v.assignment[b] != kFunctionless) continue;
    if (f == -2) {
      f = static_cast<int>(v.function_entries.size());
      v.function_entries.push_back(b);
    }
    v.assignment[b] = f;
    v.discovered.insert(b);
    auto d = decode(p, pos);
    for (const auto& [e, r] : d.edges) {
      v.db.insert(e);
      int rr = opt.fallthrough_first ? r : std::max(r, static_cast<int>(kJumpRank));
      q.emplace(dist + 1, rr, p.index_of(e.dst), e.dst, f);
    }
    for (BlockId t : d.calls)
      if (p.has_block(t) && !symbol_entries.count(t)) q.emplace(dist + 1, kRefRank, p.index_of(t), t, -2);
    for (BlockId t : d.refs)
      if (p.has_block(t)) q.emplace(dist + 1, kRefRank, p.index_of(t), t, -2);
  }
  v.refresh_gui();
  return v;
}

void repartition(const Program& p, AttackerView& v, const AttackerOptions& opt) {
  // code the disassembler skipped: table contents and address immediates
  std::vector<BlockId> seeds;
  for (const auto& t : p.tables) seeds.insert(seeds.end(), t.entries.begin(), t.entries.end());
  for (const auto& bb : p.blocks)
    for (const auto& in : bb.insns)
      if (in.op == Op::MOVI && in.ops[1].is_code_label()) seeds.push_back(static_cast<BlockId>(in.ops[1].value));
  discover_from(p, v, seeds);

  std::set<BlockId> fixed;
  for (int f = 0; f < v.symbols; ++f) fixed.insert(v.function_entries[static_cast<std::size_t>(f)]);
  const auto adj = adjacency(p, v, opt);
  for (int round = 0; round < 2; ++round) {
    for (int s = 0; s < opt.max_sweeps && sweep(v, adj, fixed); ++s) {
    }
    // whatever is still unowned has no owned neighbour: one function per component
    bool created = false;
    for (BlockId b : v.discovered) {
      if (v.function_of(b) != kFunctionless) continue;
      int f = static_cast<int>(v.function_entries.size());
      v.function_entries.push_back(b);
      created = true;
      std::vector<BlockId> work{b};
      v.assignment[b] = f;
      while (!work.empty()) {
        BlockId x = work.back();
        work.pop_back();
        auto it = adj.find(x);
        if (it == adj.end()) continue;
        for (auto [n, w] : it->second)
          if (v.function_of(n) == kFunctionless && v.discovered.count(n)) {
            v.assignment[n] = f;
            work.push_back(n);
          }
      }
    }
    if (!created) break;
  }
  v.refresh_gui();
}

namespace {

struct Chain {
  std::vector<BlockId> blocks;                      // computation blocks with trampolines between
  std::set<std::pair<BlockId, BlockId>> links;      // internal edges (src, dst)
  bool ok = false;
};

// Follows the computation from its first block to the branch block along the
// attacker's own edges.
Chain chain_of(const Program& p, const OpaquePredicate& op, const std::map<InsnId, BlockId>& owner,
               const std::set<ViewEdge>& edges) {
  Chain c;
  std::vector<BlockId> comp;
  auto push = [&](InsnId id) {
    auto it = owner.find(id);
    if (it == owner.end()) return false;
    if (comp.empty() || comp.back() != it->second) comp.push_back(it->second);
    return true;
  };
  for (InsnId id : op.computation)
    if (!push(id)) return c;
  if (!push(op.branch)) return c;
  std::map<BlockId, std::vector<ViewEdge>> out;
  for (const auto& e : edges) out[e.src].push_back(e);
  c.blocks.push_back(comp[0]);
  for (std::size_t i = 0; i + 1 < comp.size(); ++i) {
    BlockId cur = comp[i];
    for (int hops = 0; cur != comp[i + 1]; ++hops) {
      if (hops > 2) return c;
      BlockId nx = kNoBlock;
      for (const auto& e : out[cur])
        if (e.kind == EdgeKind::FALLTHROUGH || e.kind == EdgeKind::JUMP) nx = e.dst;
      if (nx == kNoBlock) return c;
      if (nx != comp[i + 1] && !is_trampoline(p.block(nx))) return c;
      c.links.insert({cur, nx});
      c.blocks.push_back(nx);
      cur = nx;
    }
  }
  c.ok = true;
  return c;
}

ViewEdge fake_edge_of(const OpaquePredicate& op, const std::map<InsnId, BlockId>& owner) {
  ViewEdge e;
  e.kind = op.fake.kind;
  e.dst = op.fake.dst;
  if (op.fake.src & kBlockKeyBit) {
    e.src = op.fake.src & ~kBlockKeyBit;
  } else {
    auto it = owner.find(op.fake.src);
    e.src = it == owner.end() ? kNoBlock : it->second;
  }
  return e;
}

bool resolvable(const Program& p, const OpaquePredicate& op, const AttackerView& v,
                const std::map<InsnId, BlockId>& owner, bool gui_only) {
  const auto& edges = gui_only ? v.gui : v.db;
  if (!v.db.count(fake_edge_of(op, owner))) return false;
  Chain c = chain_of(p, op, owner, edges);
  if (!c.ok) return false;
  int f = v.function_of(c.blocks.front());
  for (BlockId b : c.blocks) {
    if (!v.discovered.count(b)) return false;
    if (gui_only && (f == kFunctionless || v.function_of(b) != f)) return false;
  }
  // nothing may enter the computation past its first instruction
  std::set<BlockId> inner(c.blocks.begin() + 1, c.blocks.end());
  for (const auto& e : edges)
    if (inner.count(e.dst) && !c.links.count({e.src, e.dst})) return false;
  return true;
}

std::map<InsnId, BlockId> owners(const Program& p) {
  std::map<InsnId, BlockId> m;
  for (const auto& bb : p.blocks)
    for (const auto& in : bb.insns) m[in.id] = bb.id;
  return m;
}

void drop(AttackerView& v, const ViewEdge& e) {
  v.db.erase(e);
  v.gui.erase(e);
}

}  // namespace

ResolveResult resolve_soundish(const Program& p, const std::vector<OpaquePredicate>& preds, AttackerView& v,
                               const AttackerOptions& opt) {
  ResolveResult r;
  const auto owner = owners(p);
  std::vector<char> done(preds.size(), 0);
  // the database view does not depend on the partition, so whole rounds can go at once
  for (bool again = true; again;) {
    again = false;
    std::vector<std::size_t> now;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (!done[i] && resolvable(p, preds[i], v, owner, false)) now.push_back(i);
    for (std::size_t i : now) {
      drop(v, fake_edge_of(preds[i], owner));
      done[i] = 1;
      r.predicates.push_back(preds[i].id);
      again = true;
    }
  }
  r.resolved = static_cast<int>(r.predicates.size());
  if (r.resolved) repartition(p, v, opt);
  return r;
}

ResolveResult resolve_unsound(const Program& p, const std::vector<OpaquePredicate>& preds, AttackerView& v,
                              const AttackerOptions& opt) {
  ResolveResult r;
  const auto owner = owners(p);
  std::vector<char> done(preds.size(), 0);
  for (bool again = true; again;) {
    again = false;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (done[i] || !resolvable(p, preds[i], v, owner, true)) continue;
      drop(v, fake_edge_of(preds[i], owner));
      done[i] = 1;
      r.predicates.push_back(preds[i].id);
      repartition(p, v, opt);
      again = true;
    }
  }
  r.resolved = static_cast<int>(r.predicates.size());
  return r;
}

std::vector<std::pair<ViewEdge, Truth>> truth_edges(const Program& p) {
  std::map<ViewEdge, Truth> m;
  for (const auto& bb : p.blocks)
    for (const auto& e : bb.succs) {
      if (e.kind == EdgeKind::CALL) continue;
      ViewEdge ve{bb.id, e.target, e.kind};
      auto [it, fresh] = m.emplace(ve, e.truth);
      if (!fresh && e.truth == Truth::TRUE_EDGE) it->second = Truth::TRUE_EDGE;
    }
  return {m.begin(), m.end()};
}

std::vector<ClassifiedEdge> classify_edges(const Program& p, const AttackerView& v) {
  std::vector<ClassifiedEdge> out;
  for (const auto& [e, t] : truth_edges(p)) {
    ClassifiedEdge c;
    c.edge = e;
    c.truth = t;
    bool in_db = v.db.count(e) > 0, in_gui = v.gui.count(e) > 0;
    if (t == Truth::TRUE_EDGE) {
      c.db = in_db ? EdgeClass::TP : EdgeClass::FN;
      c.gui = in_gui ? EdgeClass::TP : in_db ? EdgeClass::SFN : EdgeClass::FN;
    } else {
      c.db = in_db ? EdgeClass::FP : EdgeClass::TN;
      c.gui = in_gui ? EdgeClass::FP : in_db ? EdgeClass::STN : EdgeClass::TN;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace fog
