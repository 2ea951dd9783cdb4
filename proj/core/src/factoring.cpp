#include "fog/factoring.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "factoring_internal.hpp"

namespace fog {

const char* dispatcher_name(DispatcherKind k) {
  switch (k) {
    case DispatcherKind::COND_JUMP: return "COND_JUMP";
    case DispatcherKind::INDIRECT_BRANCH: return "INDIRECT_BRANCH";
    case DispatcherKind::STATIC_SWITCH: return "STATIC_SWITCH";
    case DispatcherKind::DYNAMIC_SWITCH: return "DYNAMIC_SWITCH";
  }
  return "?";
}

std::optional<DispatcherKind> parse_dispatcher(const std::string& s) {
  std::string u;
  for (char c : s) u += static_cast<char>(c == '-' ? '_' : std::toupper(static_cast<unsigned char>(c)));
  for (int k = 0; k < kNumDispatcherKinds; ++k)
    if (u == dispatcher_name(static_cast<DispatcherKind>(k))) return static_cast<DispatcherKind>(k);
  if (u == "COND" || u == "CONDITIONAL") return DispatcherKind::COND_JUMP;
  if (u == "INDIRECT") return DispatcherKind::INDIRECT_BRANCH;
  if (u == "STATIC") return DispatcherKind::STATIC_SWITCH;
  if (u == "DYNAMIC") return DispatcherKind::DYNAMIC_SWITCH;
  return std::nullopt;
}

namespace detail {

bool factorable(const Program& p, const Instruction& in) {
  return !is_control(in.op) && in.op != Op::SWAP && !p.pinned.count(in.id);
}

bool depends(const Instruction& u, const Instruction& v) {
  RegSet du = defs(u), uu = uses(u), dv = defs(v), uv = uses(v);
  if ((du & uv) || (uu & dv) || (du & dv)) return true;
  return has_side_effect(u.op) && has_side_effect(v.op) && !(u.op == Op::LOAD && v.op == Op::LOAD);
}

std::size_t body_size(const BasicBlock& bb) {
  if (!bb.insns.empty() && is_control(bb.insns.back().op)) return bb.insns.size() - 1;
  return bb.insns.size();
}

Schedule schedule_around(const std::vector<Instruction>& insns, std::size_t n, const std::vector<std::size_t>& members) {
  Schedule s;
  std::vector<char> in_set(n, 0), tainted(n, 0);
  std::size_t last = 0;
  for (std::size_t m : members) {
    if (m >= n || in_set[m]) return s;
    in_set[m] = 1;
    last = std::max(last, m);
  }
  // anything depending on a member moves after the fragment
  for (std::size_t j = 0; j < n; ++j) {
    if (in_set[j]) continue;
    for (std::size_t i = 0; i < j && !tainted[j]; ++i)
      if ((in_set[i] || tainted[i]) && depends(insns[i], insns[j])) tainted[j] = 1;
  }
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < n; ++j)
    if (!in_set[j] && !tainted[j] && j < last) order.push_back(j);
  std::size_t nb = order.size();
  order.insert(order.end(), members.begin(), members.end());
  for (std::size_t j = 0; j < n; ++j)
    if (!in_set[j] && (tainted[j] || j > last)) order.push_back(j);
  std::vector<std::size_t> at(n);
  for (std::size_t k = 0; k < n; ++k) at[order[k]] = k;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < j; ++i)
      if (at[i] > at[j] && depends(insns[i], insns[j])) return s;
  for (std::size_t k = 0; k < n; ++k) {
    if (k < nb) s.before.push_back(insns[order[k]].id);
    else if (k >= nb + members.size()) s.after.push_back(insns[order[k]].id);
  }
  s.ok = true;
  return s;
}

namespace {
std::vector<int> use_positions(const Instruction& in) {
  auto reg = [&](int i) { return i < in.nops && in.ops[i].is_reg(); };
  std::vector<int> v;
  switch (in.op) {
    case Op::MOV: case Op::LOAD: v = {1}; break;
    case Op::CMP: case Op::STORE: v = {0, 1}; break;
    case Op::OUT: v = {0}; break;
    default:
      if (is_alu_op(in.op)) v = {1, 2};
      break;
  }
  std::erase_if(v, [&](int i) { return !reg(i); });
  return v;
}

int def_reg(const Instruction& in) {
  switch (in.op) {
    case Op::MOV: case Op::MOVI: case Op::LOAD: case Op::IN: return in.ops[0].reg;
    default: return is_alu_op(in.op) ? in.ops[0].reg : -1;
  }
}
}  // namespace

Flow flow_of(const std::vector<const Instruction*>& seq) {
  Flow f;
  std::array<int, kNumRegs> writer;
  writer.fill(-1);
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const auto& in = *seq[k];
    f.key.push_back(static_cast<std::int64_t>(in.op) * 4 + in.sets_flags * 2);
    f.key.push_back(in.nops);
    for (int j = 0; j < in.nops; ++j)
      f.key.push_back(static_cast<std::int64_t>(in.ops[j].kind) * 4 + static_cast<std::int64_t>(in.ops[j].lk));
    for (int j : use_positions(in)) {
      int r = in.ops[j].reg;
      if (writer[r] >= 0) {
        f.key.push_back(writer[r]);
      } else {
        auto it = std::find(f.inputs.begin(), f.inputs.end(), r);
        if (it == f.inputs.end()) it = f.inputs.insert(f.inputs.end(), r);
        f.key.push_back(-(it - f.inputs.begin()) - 1);
      }
    }
    if (in.op == Op::LOAD || in.op == Op::STORE) f.key.push_back(in.ops[2].value);
    f.key.push_back(-1000);
    int d = def_reg(in);
    f.dst.push_back(d);
    if (d >= 0) writer[d] = static_cast<int>(k);
  }
  return f;
}

}  // namespace detail

using namespace detail;

InsnCounts instruction_counts(const Program& p, const ExecutionProfile& prof) {
  InsnCounts c;
  for (const auto& bb : p.blocks) {
    auto n = prof.count(bb.id);
    for (const auto& in : bb.insns) c[in.id] = n;
  }
  return c;
}

namespace {

std::tuple<int, int, std::vector<int>> shape_rank(const Instruction& in) {
  std::vector<int> kinds;
  for (int j = 0; j < in.nops; ++j) kinds.push_back(static_cast<int>(in.ops[j].kind) * 4 + static_cast<int>(in.ops[j].lk));
  return {static_cast<int>(in.op), in.sets_flags ? 1 : 0, kinds};
}

// Topological order of the members, ties broken by shape, then position.
std::vector<std::size_t> canonical_order(const std::vector<Instruction>& insns, const std::vector<std::size_t>& set) {
  std::size_t k = set.size();
  std::vector<int> indeg(k, 0);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      if (set[a] < set[b] && depends(insns[set[a]], insns[set[b]])) ++indeg[b];
  std::vector<std::size_t> out;
  std::vector<char> done(k, 0);
  while (out.size() < k) {
    std::size_t best = k;
    for (std::size_t a = 0; a < k; ++a) {
      if (done[a] || indeg[a]) continue;
      if (best == k || std::make_pair(shape_rank(insns[set[a]]), set[a]) <
                           std::make_pair(shape_rank(insns[set[best]]), set[best]))
        best = a;
    }
    done[best] = 1;
    out.push_back(set[best]);
    for (std::size_t b = 0; b < k; ++b)
      if (set[best] < set[b] && depends(insns[set[best]], insns[set[b]])) --indeg[b];
  }
  return out;
}

constexpr std::size_t kSlicesPerSink = 64;

}  // namespace

std::vector<Fragment> enumerate_fragments(const Program& p, const InsnCounts& counts, int min_size, int max_size) {
  std::vector<Fragment> out;
  min_size = std::max(min_size, 1);
  const auto mn = static_cast<std::size_t>(min_size), mx = static_cast<std::size_t>(std::max(max_size, min_size));
  for (const auto& bb : p.blocks) {
    const std::size_t n = body_size(bb);
    std::vector<char> ok(n);
    for (std::size_t i = 0; i < n; ++i) ok[i] = factorable(p, bb.insns[i]);
    auto count_of = [&](InsnId id) {
      auto it = counts.find(id);
      return it == counts.end() ? std::uint64_t{0} : it->second;
    };
    auto emit = [&](FragmentKind kind, const std::vector<std::size_t>& order) {
      Fragment f;
      f.id = static_cast<int>(out.size());
      f.kind = kind;
      f.block = bb.id;
      f.prov = bb.prov;
      for (std::size_t i : order) f.insns.push_back(bb.insns[i].id);
      f.exec_count = count_of(f.insns.front());
      out.push_back(std::move(f));
    };
    std::set<std::vector<std::size_t>> seen;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> run;
      for (std::size_t j = i; j < n && ok[j] && run.size() < mx; ++j) {
        run.push_back(j);
        if (run.size() >= mn) {
          seen.insert(run);
          emit(FragmentKind::SEQUENCE, run);
        }
      }
    }
    // slices: grow upward from each sink along register producers
    std::vector<std::vector<std::size_t>> prod(n);
    for (std::size_t j = 0; j < n; ++j) {
      RegSet u = uses(bb.insns[j]) & ~kFlagsMask;
      for (std::size_t i = j; i-- > 0 && u;) {
        RegSet d = defs(bb.insns[i]) & u;
        if (d) {
          prod[j].push_back(i);
          u &= ~d;
        }
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!ok[j]) continue;
      std::set<std::vector<std::size_t>> local{{j}};
      std::vector<std::vector<std::size_t>> queue{{j}};
      for (std::size_t q = 0; q < queue.size(); ++q) {
        auto cur = queue[q];
        if (cur.size() >= mx) continue;
        for (std::size_t s : cur)
          for (std::size_t i : prod[s]) {
            if (!ok[i] || std::binary_search(cur.begin(), cur.end(), i)) continue;
            auto next = cur;
            next.insert(std::upper_bound(next.begin(), next.end(), i), i);
            if (local.size() < kSlicesPerSink && local.insert(next).second) queue.push_back(std::move(next));
          }
      }
      for (const auto& s : local) {
        if (s.size() < mn || seen.count(s)) continue;
        seen.insert(s);
        auto order = canonical_order(bb.insns, s);
        if (!schedule_around(bb.insns, n, order).ok) continue;
        emit(FragmentKind::SLICE, order);
      }
    }
  }
  return out;
}

namespace {
const Instruction* find_insn(const BasicBlock& bb, InsnId id) {
  for (const auto& in : bb.insns)
    if (in.id == id) return &in;
  return nullptr;
}
}  // namespace

Fingerprint fingerprint(const Program& p, const Fragment& f) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](std::uint64_t v) { h = (h ^ v) * 0x100000001b3ull; };
  const auto& bb = p.block(f.block);
  for (std::size_t k = 0; k < f.insns.size() && k < 4; ++k) {
    const Instruction* in = find_insn(bb, f.insns[k]);
    if (!in) continue;
    mix(static_cast<std::uint64_t>(in->op));
    mix(in->sets_flags);
    for (int j = 0; j < in->nops; ++j) mix(static_cast<std::uint64_t>(in->ops[j].kind) * 4 + static_cast<std::uint64_t>(in->ops[j].lk));
    mix(0xff);
  }
  return h;
}

int select_reference(const Program& p, const std::vector<Fragment>& set) {
  int best = 0;
  std::tuple<int, std::uint64_t, int> key{-1, 0, 0};
  for (std::size_t c = 0; c < set.size(); ++c) {
    const auto& bb = p.block(set[c].block);
    RegSet r = 0;
    for (InsnId id : set[c].insns)
      if (const Instruction* in = find_insn(bb, id)) r |= (uses(*in) | defs(*in)) & ~kFlagsMask;
    std::tuple<int, std::uint64_t, int> k{std::popcount(r), set[c].exec_count, -set[c].id};
    if (k > key) {
      key = k;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::optional<RenamingPlan> plan_renaming(const Program& p, const Analyses& a, const std::vector<Fragment>& set,
                                          int reference, const std::set<DispatcherKind>& enabled) {
  const std::size_t m = set.size();
  if (m < 2 || reference < 0 || static_cast<std::size_t>(reference) >= m) return std::nullopt;
  const auto ref = static_cast<std::size_t>(reference);
  RenamingPlan plan;
  plan.reference = reference;
  plan.glue.resize(m);
  std::vector<std::vector<const Instruction*>> seqs(m);
  std::vector<Flow> flows(m);
  std::vector<FwdState> start(m), local(m);
  std::vector<RegSet> defs_g(m), need(m);
  std::set<BlockId> blocks;
  constexpr RegSet kRegs = 0xffffu;

  for (std::size_t c = 0; c < m; ++c) {
    const Fragment& f = set[c];
    if (!p.has_block(f.block) || !blocks.insert(f.block).second) return std::nullopt;
    const auto& bb = p.block(f.block);
    const std::size_t n = body_size(bb);
    std::vector<std::size_t> pos;
    for (InsnId id : f.insns) {
      std::size_t k = 0;
      while (k < n && bb.insns[k].id != id) ++k;
      if (k == n || !factorable(p, bb.insns[k])) return std::nullopt;
      pos.push_back(k);
      seqs[c].push_back(&bb.insns[k]);
    }
    auto sched = schedule_around(bb.insns, n, pos);
    if (!sched.ok) return std::nullopt;
    flows[c] = flow_of(seqs[c]);
    if (flows[c].key != flows[0].key) return std::nullopt;

    auto& g = plan.glue[c];
    RegSet live;
    if (n < bb.insns.size()) {
      live = a.live.live_before(bb.insns.back().id);
    } else {
      auto it = a.live.block_out.find(f.block);
      if (it == a.live.block_out.end()) return std::nullopt;
      live = it->second;
    }
    for (auto it = sched.after.rbegin(); it != sched.after.rend(); ++it) {
      const Instruction* in = find_insn(bb, *it);
      live = (live & ~defs(*in)) | uses(*in);
    }
    g.live_out = live;
    g.before = std::move(sched.before);
    g.after = std::move(sched.after);

    auto fit = a.fwd.block_in.find(f.block);
    FwdState s = fit != a.fwd.block_in.end() ? fit->second : FwdState{};
    FwdState l;
    l.reachable = s.reachable;
    for (InsnId id : g.before) {
      transfer(s, *find_insn(bb, id), p, a.opt);
      transfer(l, *find_insn(bb, id), p, a.opt);
    }
    start[c] = s;
    local[c] = l;
    for (const Instruction* in : seqs[c]) defs_g[c] |= defs(*in);
    need[c] = live & ~defs_g[c] & kRegs;
  }

  const auto& R = seqs[ref];
  const Flow& fr = flows[ref];
  RegSet regs_r = 0, defs_r = 0;
  for (const Instruction* in : R) {
    regs_r |= (uses(*in) | defs(*in)) & kRegs;
    defs_r |= defs(*in) & kRegs;
  }
  auto last_writer = [](const Flow& f, int r) {
    for (std::size_t k = f.dst.size(); k-- > 0;)
      if (f.dst[k] == r) return static_cast<int>(k);
    return -1;
  };

  // operands whose immediate or label differs between contexts
  for (std::size_t i = 0; i < R.size(); ++i)
    for (int j = 0; j < R[i]->nops; ++j) {
      const Operand& o = R[i]->ops[static_cast<std::size_t>(j)];
      if (o.is_reg() || o.kind == OperandKind::None) continue;
      bool differs = false;
      for (std::size_t c = 0; c < m; ++c) differs |= !(seqs[c][i]->ops[static_cast<std::size_t>(j)] == o);
      if (!differs) continue;
      if (R[i]->op == Op::LOAD || R[i]->op == Op::STORE) return std::nullopt;
      plan.aux_slots.emplace_back(i, j);
    }

  bool flags_live = false;
  for (std::size_t c = 0; c < m; ++c) {
    auto& g = plan.glue[c];
    if (g.live_out & kFlagsMask) flags_live = true;
    for (int y = 0; y < kNumRegs; ++y) {
      if (!((g.live_out & defs_g[c]) >> y & 1)) continue;
      int k = last_writer(flows[c], y);
      int ry = fr.dst[static_cast<std::size_t>(k)];
      if (last_writer(fr, ry) != k) return std::nullopt;
      if (ry != y) g.epilogue.emplace_back(y, ry);
    }
    for (std::size_t i = 0; i < fr.inputs.size(); ++i)
      if (fr.inputs[i] != flows[c].inputs[i]) g.prologue.emplace_back(fr.inputs[i], flows[c].inputs[i]);
    for (auto [i, j] : plan.aux_slots) g.aux.push_back(seqs[c][i]->ops[static_cast<std::size_t>(j)]);
  }

  RegSet need_any = 0;
  for (RegSet n : need) need_any |= n;
  RegSet taken = regs_r | need_any;
  for (std::size_t k = 0; k < plan.aux_slots.size(); ++k) {
    RegSet free = ~taken & kRegs;
    if (!free) return std::nullopt;
    int r = std::countr_zero(free);
    plan.aux_regs.push_back(r);
    taken |= 1u << r;
  }
  plan.shared = regs_r;
  for (int r : plan.aux_regs) plan.shared |= 1u << r;

  // saves for live registers the shared copy or the prologue overwrite
  RegSet any_slot = 0;
  for (std::size_t c = 0; c < m; ++c) {
    auto& g = plan.glue[c];
    RegSet dests = 0;
    for (auto [d, s] : g.prologue) dests |= 1u << d;
    RegSet clobber = (dests | defs_r) & need[c];
    for (int z = 0; z < kNumRegs; ++z) {
      if (!(clobber >> z & 1)) continue;
      RegSet free = ~(plan.shared | g.live_out | g.slots) & kRegs;
      if (!free) return std::nullopt;
      int s = std::countr_zero(free);
      g.slots |= 1u << s;
      g.prologue.emplace_back(s, z);
      g.epilogue.emplace_back(z, s);
    }
    any_slot |= g.slots;
    g.spare = ~(plan.shared | g.slots | need[c]) & kRegs;
  }

  const RegSet blocked = plan.shared | any_slot;
  auto free_everywhere = [&](int r) {
    if (blocked >> r & 1) return false;
    for (RegSet n : need)
      if (n >> r & 1) return false;
    return true;
  };
  int ctrl = -1, temp = -1;
  for (int r = 0; r < kNumRegs; ++r)
    if (free_everywhere(r)) {
      if (ctrl < 0) ctrl = r;
      else if (temp < 0) temp = r;
    }
  auto plain = [&](int r) {
    ControlPlan cp;
    cp.ctrl = r;
    cp.reuse.assign(m, false);
    return cp;
  };

  if (enabled.count(DispatcherKind::COND_JUMP) && m == 2 && !flags_live) {
    // a register that already holds zero or a nonzero value saves glue
    std::optional<ControlPlan> best;
    int best_cost = 3;
    for (int r = 0; r < kNumRegs; ++r) {
      if (blocked >> r & 1) continue;
      for (int z = 0; z < 2; ++z) {
        ControlPlan cp;
        cp.ctrl = r;
        cp.zero_context = z;
        // a value from outside the block may pass through the other
        // context's write, so only block-local facts survive one
        auto holds = [&](const FwdState& s, std::size_t c) {
          return static_cast<int>(c) == z ? s.is_const(r) && s.value(r) == 0 : s.nonzero(r);
        };
        bool both = holds(start[0], 0) && holds(start[1], 1);
        int cost = 0;
        bool ok = true;
        for (std::size_t c = 0; c < m && ok; ++c) {
          bool reuse = both || holds(local[c], c);
          if (!reuse && (need[c] >> r & 1)) ok = false;
          cost += !reuse;
          cp.reuse.push_back(reuse);
        }
        if (ok && cost < best_cost) {
          best_cost = cost;
          best = cp;
        }
      }
    }
    if (best) plan.control[DispatcherKind::COND_JUMP] = *best;
  }
  if (ctrl >= 0) {
    if (enabled.count(DispatcherKind::INDIRECT_BRANCH)) plan.control[DispatcherKind::INDIRECT_BRANCH] = plain(ctrl);
    if (enabled.count(DispatcherKind::STATIC_SWITCH)) plan.control[DispatcherKind::STATIC_SWITCH] = plain(ctrl);
    plan.bounds_check = !flags_live;
  }
  if (temp >= 0 && enabled.count(DispatcherKind::DYNAMIC_SWITCH)) {
    // the table selection may fall back to the end of the glue: it needs two dead registers there
    bool ok = true;
    for (const auto& g : plan.glue) ok &= std::popcount(g.spare & ~(1u << ctrl)) >= 2;
    if (ok) {
      auto cp = plain(ctrl);
      cp.temp = temp;
      plan.control[DispatcherKind::DYNAMIC_SWITCH] = cp;
    }
  }
  if (plan.control.empty()) return std::nullopt;
  return plan;
}

Priority priority(const Program& p, const std::vector<Fragment>& set, const InsnCounts& counts,
                  const std::set<DispatcherKind>& eligible, const PriorityWeights& w) {
  (void)p;
  (void)counts;
  Priority pr;
  std::set<int> ar, car;
  std::set<std::pair<int, int>> ob, cob;
  std::set<std::tuple<int, int, int>> fn, cfn;
  for (const auto& f : set) {
    pr.size = std::max(pr.size, static_cast<int>(f.insns.size()));
    ar.insert(f.prov.archive_id);
    ob.emplace(f.prov.archive_id, f.prov.object_id);
    fn.emplace(f.prov.archive_id, f.prov.object_id, f.prov.function_id);
    if (f.exec_count > 0) {
      car.insert(f.prov.archive_id);
      cob.emplace(f.prov.archive_id, f.prov.object_id);
      cfn.emplace(f.prov.archive_id, f.prov.object_id, f.prov.function_id);
    }
  }
  pr.n_archives = static_cast<int>(ar.size());
  pr.n_objects = static_cast<int>(ob.size());
  pr.n_functions = static_cast<int>(fn.size());
  pr.covered_archives = static_cast<int>(car.size());
  pr.covered_objects = static_cast<int>(cob.size());
  pr.covered_functions = static_cast<int>(cfn.size());
  for (auto k : eligible) pr.dispatcher_bonus = std::max(pr.dispatcher_bonus, w.bonus[static_cast<int>(k)]);
  if (set.empty()) return pr;
  pr.value = w.size * pr.size + w.archives * (pr.n_archives - 1) + w.objects * (pr.n_objects - 1) +
             w.functions * (pr.n_functions - 1) + w.covered_archives * pr.covered_archives + pr.dispatcher_bonus;
  return pr;
}

std::optional<DispatcherKind> choose_dispatcher(const RenamingPlan& plan, const std::set<DispatcherKind>& enabled,
                                                Rng& rng) {
  std::vector<DispatcherKind> ks;
  for (const auto& [k, cp] : plan.control)
    if (enabled.count(k)) ks.push_back(k);
  if (ks.empty()) return std::nullopt;
  return rng.pick(ks);
}

namespace {

std::set<DispatcherKind> kinds_of(const RenamingPlan& plan) {
  std::set<DispatcherKind> s;
  for (const auto& [k, cp] : plan.control) s.insert(k);
  return s;
}

// Instructions excluded by the hotness knob: the top share of executed ones.
std::set<InsnId> hot_instructions(const InsnCounts& counts, int permille) {
  std::set<InsnId> hot;
  if (permille <= 0) return hot;
  std::vector<std::pair<std::uint64_t, InsnId>> ex;
  for (auto [id, n] : counts)
    if (n > 0) ex.emplace_back(n, id);
  std::sort(ex.begin(), ex.end(), [](auto& x, auto& y) { return x.first != y.first ? x.first > y.first : x.second < y.second; });
  auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(permille) / 1000.0 * static_cast<double>(ex.size())));
  for (std::size_t i = 0; i < k && i < ex.size(); ++i) hot.insert(ex[i].second);
  return hot;
}

constexpr int kExpansionTries = 12;
constexpr std::size_t kSeedTries = 48;

}  // namespace

std::vector<CandidateSet> build_candidates(const Program& p, const std::vector<Fragment>& fragments,
                                           const Analyses& a, const InsnCounts& counts,
                                           const FactoringOptions& opt) {
  const auto hot = hot_instructions(counts, opt.hotness_skip_permille);
  std::map<std::pair<std::size_t, std::vector<std::int64_t>>, std::vector<std::size_t>, std::greater<>> buckets;
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    const auto& f = fragments[i];
    if (static_cast<int>(f.insns.size()) < opt.min_fragment_size) continue;
    if (std::any_of(f.insns.begin(), f.insns.end(), [&](InsnId id) { return hot.count(id); })) continue;
    const auto& bb = p.block(f.block);
    std::vector<const Instruction*> seq;
    for (InsnId id : f.insns) seq.push_back(find_insn(bb, id));
    if (std::find(seq.begin(), seq.end(), nullptr) != seq.end()) continue;
    auto key = flow_of(seq).key;
    key.push_back(static_cast<std::int64_t>(fingerprint(p, f)));
    buckets[{f.insns.size(), std::move(key)}].push_back(i);
  }

  double max_bonus = 0;
  for (auto k : opt.enabled) max_bonus = std::max(max_bonus, opt.weights.bonus[static_cast<int>(k)]);
  Fragment probe;
  probe.insns.assign(static_cast<std::size_t>(opt.min_fragment_size), 0);
  const double threshold = priority(p, {probe, probe}, counts, {}, opt.weights).value;

  std::set<InsnId> used;
  std::vector<CandidateSet> out;
  auto value_of = [&](const std::vector<Fragment>& s, const std::set<DispatcherKind>& el) {
    return priority(p, s, counts, el, opt.weights);
  };
  auto try_plan = [&](const std::vector<Fragment>& s) {
    return plan_renaming(p, a, s, select_reference(p, s), opt.enabled);
  };

  auto pair_bound = [&](const Fragment& x, const Fragment& y) {
    const auto& w = opt.weights;
    const auto &px = x.prov, &py = y.prov;
    bool da = px.archive_id != py.archive_id, dob = da || px.object_id != py.object_id,
         dfn = dob || px.function_id != py.function_id;
    int cov = (x.exec_count > 0) + (y.exec_count > 0);
    if (cov == 2 && !da) cov = 1;
    return w.size * static_cast<double>(std::max(x.insns.size(), y.insns.size())) + w.archives * da +
           w.objects * dob + w.functions * dfn + w.covered_archives * cov + max_bonus;
  };
  auto alive = [&](const Fragment& f) {
    return std::none_of(f.insns.begin(), f.insns.end(), [&](InsnId id) { return used.count(id); });
  };

  for (auto& [bkey, members] : buckets) {
    if (members.size() < 2) continue;
    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t x = 0; x < members.size(); ++x)
      for (std::size_t y = x + 1; y < members.size(); ++y) {
        const auto& fa = fragments[members[x]];
        const auto& fb = fragments[members[y]];
        if (fa.block != fb.block) pairs.emplace_back(-pair_bound(fa, fb), members[x], members[y]);
      }
    std::sort(pairs.begin(), pairs.end());
    for (;;) {
      std::vector<std::size_t> avail;
      for (std::size_t i : members)
        if (alive(fragments[i])) avail.push_back(i);
      if (avail.size() < 2) break;

      // seed: the best feasible pair, upper bounds first
      std::optional<CandidateSet> seed;
      std::size_t tried = 0;
      for (auto [nub, x, y] : pairs) {
        if (seed && -nub <= seed->priority.value) break;
        if (!alive(fragments[x]) || !alive(fragments[y])) continue;
        if (++tried > kSeedTries) break;
        std::vector<Fragment> s{fragments[x], fragments[y]};
        auto plan = try_plan(s);
        if (!plan) continue;
        auto pr = value_of(s, kinds_of(*plan));
        if (pr.value < threshold) continue;
        if (!seed || pr.value > seed->priority.value) {
          CandidateSet cs;
          cs.fragments = std::move(s);
          cs.reference = plan->reference;
          cs.dispatchers = kinds_of(*plan);
          cs.priority = pr;
          seed = std::move(cs);
        }
      }
      if (!seed) break;

      // greedy expansion while the value grows
      CandidateSet cur = std::move(*seed);
      for (;;) {
        std::set<BlockId> blocks;
        std::set<int> ids;
        for (const auto& f : cur.fragments) {
          blocks.insert(f.block);
          ids.insert(f.id);
        }
        std::vector<std::pair<double, std::size_t>> cand;
        for (std::size_t i : avail) {
          const auto& f = fragments[i];
          if (ids.count(f.id) || blocks.count(f.block)) continue;
          auto s = cur.fragments;
          s.push_back(f);
          double ub = value_of(s, {}).value + max_bonus;
          if (ub > cur.priority.value) cand.emplace_back(-ub, i);
        }
        std::sort(cand.begin(), cand.end());
        bool grew = false;
        int tries = 0;
        for (auto [nub, i] : cand) {
          if (-nub <= cur.priority.value || ++tries > kExpansionTries) break;
          auto s = cur.fragments;
          s.push_back(fragments[i]);
          auto plan = try_plan(s);
          if (!plan) continue;
          auto pr = value_of(s, kinds_of(*plan));
          if (pr.value <= cur.priority.value) continue;
          cur.fragments = std::move(s);
          cur.reference = plan->reference;
          cur.dispatchers = kinds_of(*plan);
          cur.priority = pr;
          grew = true;
          break;
        }
        if (!grew) break;
      }
      for (const auto& f : cur.fragments) used.insert(f.insns.begin(), f.insns.end());
      out.push_back(std::move(cur));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const CandidateSet& x, const CandidateSet& y) { return x.priority.value > y.priority.value; });
  return out;
}

}  // namespace fog
