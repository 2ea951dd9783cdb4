#include "fog/dataflow.hpp"

#include <algorithm>
#include <deque>
#include <memory>

namespace fog {

void FwdState::set_const(int r, Word v) {
  cmask |= static_cast<std::uint16_t>(1u << r);
  if (v != 0)
    nzmask |= static_cast<std::uint16_t>(1u << r);
  else
    nzmask &= static_cast<std::uint16_t>(~(1u << r));
  val[r] = v;
}

bool FwdState::operator==(const FwdState& o) const {
  if (reachable != o.reachable) return false;
  if (!reachable) return true;
  if (cmask != o.cmask || nzmask != o.nzmask) return false;
  for (int r = 0; r < kNumRegs; ++r)
    if ((cmask >> r & 1) && val[r] != o.val[r]) return false;
  return true;
}

FwdState meet(const FwdState& a, const FwdState& b) {
  if (!a.reachable) return b;
  if (!b.reachable) return a;
  FwdState s;
  s.reachable = true;
  std::uint16_t c = a.cmask & b.cmask;
  for (int r = 0; r < kNumRegs; ++r)
    if ((c >> r & 1) && a.val[r] == b.val[r])
      s.set_const(r, a.val[r]);
  s.nzmask |= a.nzmask & b.nzmask;
  return s;
}

namespace {

std::uint64_t uw(Word w) { return static_cast<std::uint64_t>(w); }

Word fold(Op op, Word a, Word b) {
  switch (op) {
    case Op::ADD: return static_cast<Word>(uw(a) + uw(b));
    case Op::SUB: return static_cast<Word>(uw(a) - uw(b));
    case Op::MUL: return static_cast<Word>(uw(a) * uw(b));
    case Op::XOR: return a ^ b;
    case Op::AND: return a & b;
    case Op::OR: return a | b;
    case Op::SHL: return static_cast<Word>(uw(a) << (uw(b) & 63));
    case Op::SHR: return static_cast<Word>(uw(a) >> (uw(b) & 63));
    default: return 0;
  }
}

}  // namespace

void transfer(FwdState& s, const Instruction& in, const Program& p, const AnalysisOptions& opt) {
  if (!s.reachable) return;
  const auto& o = in.ops;
  auto nz_bit = [&](int r) { s.nzmask |= static_cast<std::uint16_t>(1u << r); };
  switch (in.op) {
    case Op::MOV: {
      int d = o[0].reg, a = o[1].reg;
      bool c = s.is_const(a), nz = s.nonzero(a);
      Word v = s.val[a];
      s.set_top(d);
      if (c) s.set_const(d, v);
      if (nz) nz_bit(d);
      break;
    }
    case Op::MOVI: {
      int d = o[0].reg;
      s.set_top(d);
      if (o[1].is_imm()) {
        s.set_const(d, o[1].value);
      } else if (o[1].lk == LabelKind::Global) {
        s.set_const(d, p.global_address(static_cast<std::uint32_t>(o[1].value)));
      } else if (o[1].lk == LabelKind::Table) {
        s.set_const(d, p.table_address(static_cast<std::uint32_t>(o[1].value)));
      } else {
        nz_bit(d);  // code addresses move with layout, but are never zero
      }
      break;
    }
    case Op::ADD: case Op::SUB: case Op::MUL: case Op::XOR:
    case Op::AND: case Op::OR: case Op::SHL: case Op::SHR: {
      int d = o[0].reg, a = o[1].reg;
      bool ca = s.is_const(a), cb;
      Word va = s.val[a], vb;
      bool nzb;
      if (o[2].is_reg()) {
        cb = s.is_const(o[2].reg);
        vb = s.val[o[2].reg];
        nzb = s.nonzero(o[2].reg);
      } else {
        cb = true;
        vb = o[2].value;
        nzb = vb != 0;
      }
      bool nza = s.nonzero(a);
      bool same = o[2].is_reg() && o[2].reg == a;
      s.set_top(d);
      if (ca && cb) {
        s.set_const(d, fold(in.op, va, vb));
      } else if ((in.op == Op::AND || in.op == Op::MUL) && ((ca && va == 0) || (cb && vb == 0))) {
        s.set_const(d, 0);
      } else if ((in.op == Op::SUB || in.op == Op::XOR) && same) {
        s.set_const(d, 0);
      } else if (in.op == Op::OR && (nza || nzb)) {
        nz_bit(d);
      }
      break;
    }
    case Op::LOAD: case Op::STORE: {
      int base = o[1].reg;
      if (s.is_const(base)) {
        Word ea = static_cast<Word>(uw(s.val[base]) + uw(o[2].value));
        if (ea < kGuardLimit) {
          s = FwdState{};  // the access always traps
          return;
        }
      } else if (opt.assume_nonzero_bases && o[2].value < kGuardLimit) {
        nz_bit(base);
      }
      if (in.op == Op::LOAD) s.set_top(o[0].reg);
      break;
    }
    case Op::IN:
      s.set_top(o[0].reg);
      break;
    case Op::SWAP: {
      int a = o[0].reg, b = o[1].reg;
      FwdState t = s;
      s.set_top(a);
      s.set_top(b);
      if (t.is_const(b)) s.set_const(a, t.val[b]);
      if (t.nonzero(b)) nz_bit(a);
      if (t.is_const(a)) s.set_const(b, t.val[a]);
      if (t.nonzero(a)) nz_bit(b);
      break;
    }
    default:
      break;
  }
}

const FwdState& ForwardResult::at(InsnId i) const {
  static const FwdState bottom;
  return i < before.size() ? before[i] : bottom;
}

ConstKind ForwardResult::kind(InsnId i, int r) const {
  const auto& s = at(i);
  if (!s.reachable) return ConstKind::BOTTOM;
  return s.is_const(r) ? ConstKind::CONST : ConstKind::TOP;
}

std::optional<Word> ForwardResult::constant(InsnId i, int r) const {
  const auto& s = at(i);
  if (s.is_const(r)) return s.val[r];
  return std::nullopt;
}

NonZeroFact ForwardResult::nonzero(InsnId i, int r) const {
  return at(i).nonzero(r) ? NonZeroFact::NONZERO : NonZeroFact::MAYBE_ZERO;
}

bool ForwardResult::operator==(const ForwardResult& o) const {
  std::size_t n = std::max(before.size(), o.before.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!(at(static_cast<InsnId>(i)) == o.at(static_cast<InsnId>(i)))) return false;
  return block_in == o.block_in;
}

bool Analyses::operator==(const Analyses& o) const {
  if (!(live.block_in == o.live.block_in) || !(live.block_out == o.live.block_out)) return false;
  std::size_t n = std::max(live.before.size(), o.live.before.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto id = static_cast<InsnId>(i);
    if (live.live_before(id) != o.live.live_before(id) || live.live_after(id) != o.live.live_after(id)) return false;
  }
  return fwd == o.fwd && contexts == o.contexts && proc_blocks == o.proc_blocks;
}

namespace {

enum : std::uint8_t { kNormal, kRet, kHalt, kOpaqueJump, kCall };

struct Graph {
  const Program& p;
  std::size_t nb = 0;
  std::vector<std::vector<std::uint32_t>> succ;
  std::vector<std::int32_t> callee;  // proc index
  std::vector<InsnId> site;
  std::vector<std::uint8_t> kind;
  std::vector<std::uint32_t> entries;  // proc entry positions
  std::vector<std::vector<std::uint32_t>> blocks;
  std::vector<std::vector<std::int32_t>> local;
  std::vector<std::vector<std::uint32_t>> procs_of;  // pos -> procs containing it

  explicit Graph(const Program& prog) : p(prog) {
    nb = p.blocks.size();
    succ.resize(nb);
    callee.assign(nb, -1);
    site.assign(nb, 0);
    kind.assign(nb, kNormal);
    std::vector<std::uint32_t> taken;
    bool taken_ready = false;
    std::vector<std::int32_t> entry_proc(nb, -1);
    std::set<BlockId> entry_ids;
    entry_ids.insert(p.entry_block());
    for (const auto& f : p.functions) entry_ids.insert(f.entry);
    for (const auto& bb : p.blocks)
      if (!bb.insns.empty() && bb.insns.back().op == Op::CALL)
        entry_ids.insert(static_cast<BlockId>(bb.insns.back().ops[0].value));
    for (BlockId e : entry_ids) {
      entry_proc[p.index_of(e)] = static_cast<std::int32_t>(entries.size());
      entries.push_back(static_cast<std::uint32_t>(p.index_of(e)));
    }
    for (std::size_t i = 0; i < nb; ++i) {
      const auto& bb = p.blocks[i];
      if (!bb.insns.empty()) {
        const auto& last = bb.insns.back();
        if (last.op == Op::CALL) {
          kind[i] = kCall;
          site[i] = last.id;
          callee[i] = entry_proc[p.index_of(static_cast<BlockId>(last.ops[0].value))];
          continue;
        }
        if (last.op == Op::RET) kind[i] = kRet;
        if (last.op == Op::HALT) kind[i] = kHalt;
        if (last.op == Op::JMPI && !p.indirect_targets.count(last.id)) {
          kind[i] = kOpaqueJump;
          if (!taken_ready) {
            for (BlockId b : address_taken(p)) taken.push_back(static_cast<std::uint32_t>(p.index_of(b)));
            if (taken.empty())
              for (std::size_t k = 0; k < nb; ++k) taken.push_back(static_cast<std::uint32_t>(k));
            taken_ready = true;
          }
          succ[i] = taken;
          continue;
        }
      }
      for (const auto& e : bb.succs) {
        if (e.truth != Truth::TRUE_EDGE || e.kind == EdgeKind::CALL) continue;
        auto t = static_cast<std::uint32_t>(p.index_of(e.target));
        if (std::find(succ[i].begin(), succ[i].end(), t) == succ[i].end()) succ[i].push_back(t);
      }
    }
    blocks.resize(entries.size());
    local.assign(entries.size(), {});
    procs_of.resize(nb);
    for (std::size_t q = 0; q < entries.size(); ++q) {
      auto& loc = local[q];
      loc.assign(nb, -1);
      auto& bl = blocks[q];
      bl.push_back(entries[q]);
      loc[entries[q]] = 0;
      for (std::size_t h = 0; h < bl.size(); ++h) {
        std::uint32_t b = bl[h];
        auto visit = [&](std::uint32_t t) {
          if (loc[t] < 0) {
            loc[t] = static_cast<std::int32_t>(bl.size());
            bl.push_back(t);
          }
        };
        if (kind[b] == kCall) {
          if (b + 1 < nb) visit(b + 1);
        } else {
          for (auto t : succ[b]) visit(t);
        }
      }
      for (auto b : bl) procs_of[b].push_back(static_cast<std::uint32_t>(q));
    }
  }

  BlockId id(std::uint32_t pos) const { return p.blocks[pos].id; }
  BlockId entry_id(std::size_t q) const { return id(entries[q]); }
};

struct Ctx {
  std::uint32_t proc;
  InsnId site;        // 0: root
  std::int32_t site_pos;
};

class Engine {
 public:
  Engine(const Program& p, const AnalysisOptions& opt, bool want_live, bool want_fwd)
      : p_(p), g_(p), opt_(opt), live_(want_live), fwd_(want_fwd) {
    std::map<std::uint32_t, std::vector<std::pair<InsnId, std::int32_t>>> sites;
    for (std::size_t i = 0; i < g_.nb; ++i)
      if (g_.kind[i] == kCall && g_.callee[i] >= 0)
        sites[static_cast<std::uint32_t>(g_.callee[i])].push_back({g_.site[i], static_cast<std::int32_t>(i)});
    std::uint32_t entry_pos = static_cast<std::uint32_t>(p.index_of(p.entry_block()));
    for (std::uint32_t q = 0; q < g_.entries.size(); ++q) {
      auto& s = sites[q];
      std::sort(s.begin(), s.end());
      if (g_.entries[q] == entry_pos || s.empty()) add_ctx({q, 0, -1});
      for (auto& [id, pos] : s) add_ctx({q, id, pos});
    }
    ctx_of_pos_.resize(g_.nb);
    for (std::size_t k = 0; k < ctxs_.size(); ++k)
      for (auto b : g_.blocks[ctxs_[k].proc]) ctx_of_pos_[b].push_back(static_cast<std::uint32_t>(k));
    callee_ctx_.assign(g_.nb, -1);
    for (std::size_t k = 0; k < ctxs_.size(); ++k)
      if (ctxs_[k].site_pos >= 0) callee_ctx_[ctxs_[k].site_pos] = static_cast<std::int32_t>(k);
    data_.resize(ctxs_.size());
    for (std::size_t k = 0; k < ctxs_.size(); ++k) reset(k);
  }

  const Graph& graph() const { return g_; }
  std::size_t size() const { return ctxs_.size(); }
  ContextKey key(std::size_t k) const { return {g_.entry_id(ctxs_[k].proc), ctxs_[k].site}; }
  std::uint32_t proc(std::size_t k) const { return ctxs_[k].proc; }

  void reset(std::size_t k) {
    if (fresh_live_.size() < ctxs_.size()) {
      fresh_live_.resize(ctxs_.size(), 1);
      fresh_fwd_.resize(ctxs_.size(), 1);
      fwd_out_.resize(ctxs_.size());
    }
    fresh_live_[k] = fresh_fwd_[k] = 1;
    auto& d = data_[k];
    d = ContextData{};
    for (auto b : g_.blocks[ctxs_[k].proc]) d.blocks.push_back(g_.id(b));
    std::size_t n = d.blocks.size();
    if (live_) {
      d.live_in.assign(n, 0);
      d.live_out.assign(n, 0);
    }
    if (fwd_) d.fwd_in.assign(n, FwdState{});
    fwd_out_[k].assign(n, FwdState{});
    if (ctxs_[k].site == 0) {
      d.entry_state.reachable = true;
    }
  }

  bool load(std::size_t k, const ContextData& stored) {
    if (stored.blocks != data_[k].blocks) return false;
    data_[k] = stored;
    fresh_live_[k] = fresh_fwd_[k] = 0;
    fwd_out_[k].clear();
    return true;
  }

  void solve(const std::vector<std::size_t>& initial) {
    std::deque<std::size_t> work;
    std::vector<char> queued(ctxs_.size(), 0);
    for (auto k : initial) {
      work.push_back(k);
      queued[k] = 1;
    }
    auto push = [&](std::size_t k) {
      if (!queued[k]) {
        queued[k] = 1;
        work.push_back(k);
      }
    };
    while (!work.empty()) {
      std::size_t k = work.front();
      work.pop_front();
      queued[k] = 0;
      if (live_) solve_live(k, push);
      if (fwd_) solve_fwd(k, push);
    }
  }

  const ContextData& data(std::size_t k) const { return data_[k]; }
  const std::vector<std::uint32_t>& contexts_at(std::uint32_t pos) const { return ctx_of_pos_[pos]; }
  RegSet callee_entry_live(std::uint32_t pos) const {
    auto cc = callee_ctx_[pos];
    return cc >= 0 ? data_[cc].entry_live : kAllRegs;
  }

 private:
  void add_ctx(Ctx c) { ctxs_.push_back(c); }

  // Per-procedure dependence lists, built once per engine.
  struct ProcInfo {
    std::vector<std::vector<std::uint32_t>> live_preds;  // blocks whose out reads in[i]
    std::vector<std::vector<std::pair<std::uint32_t, bool>>> fwd_preds;  // second: through a call
    std::vector<std::vector<std::uint32_t>> fwd_succs;
    std::vector<std::uint32_t> rets, calls, return_sites;
  };
  const ProcInfo& info(std::uint32_t q) {
    if (info_.empty()) info_.resize(g_.entries.size());
    auto& pi = info_[q];
    if (pi) return *pi;
    pi = std::make_unique<ProcInfo>();
    const auto& B = g_.blocks[q];
    const auto& loc = g_.local[q];
    const std::size_t n = B.size();
    pi->live_preds.resize(n);
    pi->fwd_preds.resize(n);
    pi->fwd_succs.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto pos = B[i];
      auto ii = static_cast<std::uint32_t>(i);
      switch (g_.kind[pos]) {
        case kRet: pi->rets.push_back(ii); break;
        case kCall:
          pi->calls.push_back(ii);
          if (pos + 1 < g_.nb && loc[pos + 1] >= 0) {
            auto r = static_cast<std::uint32_t>(loc[pos + 1]);
            pi->live_preds[r].push_back(ii);
            pi->fwd_preds[r].push_back({ii, true});
            pi->fwd_succs[i].push_back(r);
            pi->return_sites.push_back(r);
          }
          continue;
        default: break;
      }
      if (g_.kind[pos] == kRet || g_.kind[pos] == kHalt) continue;
      for (auto sp : g_.succ[pos]) {
        auto si = static_cast<std::uint32_t>(loc[sp]);
        pi->live_preds[si].push_back(ii);
        pi->fwd_preds[si].push_back({ii, false});
        pi->fwd_succs[i].push_back(si);
      }
    }
    return *pi;
  }

  // Only blocks whose inputs may have moved are revisited; a fresh context
  // starts from all of them. Values only grow (liveness) or shrink (forward)
  // during one engine run, so resuming from the current ones is exact.
  template <class Push>
  void solve_live(std::size_t k, Push& push) {
    auto& d = data_[k];
    const auto q = ctxs_[k].proc;
    const auto& B = g_.blocks[q];
    const auto& loc = g_.local[q];
    const auto& P = info(q);
    const std::size_t n = B.size();
    auto& in = d.live_in;
    auto& out = d.live_out;
    std::vector<char> dirty(n, 0);
    if (fresh_live_[k]) {
      std::fill(dirty.begin(), dirty.end(), 1);
      fresh_live_[k] = 0;
    } else {
      for (auto i : P.rets) dirty[i] = 1;
      for (auto i : P.calls) dirty[i] = 1;
    }
    for (bool any = true; any;) {
      any = false;
      for (std::size_t i = n; i-- > 0;) {
        if (!dirty[i]) continue;
        dirty[i] = 0;
        auto pos = B[i];
        RegSet o = 0;
        switch (g_.kind[pos]) {
          case kRet: o = d.exit_live; break;
          case kHalt: o = 0; break;
          case kOpaqueJump: o = kAllRegs; break;
          case kCall:
            if (pos + 1 < g_.nb && loc[pos + 1] >= 0) o = in[loc[pos + 1]];
            break;
          default:
            for (auto sp : g_.succ[pos]) o |= in[loc[sp]];
            break;
        }
        RegSet l = o;
        const auto& insns = p_.blocks[pos].insns;
        for (std::size_t j = insns.size(); j-- > 0;) {
          const auto& in_ = insns[j];
          if (in_.op == Op::CALL) {
            auto cc = callee_ctx_[pos];
            l = cc >= 0 ? data_[cc].entry_live : kAllRegs;
          } else {
            l = (l & ~defs(in_)) | uses(in_);
          }
        }
        out[i] = o;
        if (l != in[i]) {
          in[i] = l;
          for (auto pr : P.live_preds[i]) {
            dirty[pr] = 1;
            any = true;
          }
        }
      }
    }
    // summaries
    RegSet e = in[0];
    if (e != d.entry_live) {
      d.entry_live = e;
      if (ctxs_[k].site_pos >= 0)
        for (auto k2 : ctx_of_pos_[ctxs_[k].site_pos]) push(k2);
    }
    for (auto i : P.calls) {
      auto pos = B[i];
      auto cc = callee_ctx_[pos];
      if (cc < 0 || pos + 1 >= g_.nb || loc[pos + 1] < 0) continue;
      RegSet v = in[loc[pos + 1]];
      auto& x = data_[cc].exit_live;
      if ((x | v) != x) {
        x |= v;
        push(static_cast<std::size_t>(cc));
      }
    }
  }

  template <class Push>
  void solve_fwd(std::size_t k, Push& push) {
    auto& d = data_[k];
    const auto q = ctxs_[k].proc;
    const auto& B = g_.blocks[q];
    const auto& P = info(q);
    const std::size_t n = B.size();
    auto& in = d.fwd_in;
    auto& out = fwd_out_[k];
    std::vector<char> dirty(n, 0);
    if (out.size() != n) {
      // loaded from a previous run: rebuild the outs from the stored ins
      out.assign(n, FwdState{});
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = in[i];
        for (const auto& in_ : p_.blocks[B[i]].insns)
          if (in_.op != Op::CALL) transfer(out[i], in_, p_, opt_);
      }
    }
    if (fresh_fwd_[k]) {
      std::fill(dirty.begin(), dirty.end(), 1);
      fresh_fwd_[k] = 0;
    } else {
      if (n) dirty[0] = 1;
      for (auto i : P.return_sites) dirty[i] = 1;
    }
    for (bool any = true; any;) {
      any = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (!dirty[i]) continue;
        dirty[i] = 0;
        auto pos = B[i];
        FwdState st = i == 0 ? d.entry_state : FwdState{};
        for (auto [j, via_call] : P.fwd_preds[i]) {
          if (via_call) {
            if (!out[j].reachable) continue;
            auto cc = callee_ctx_[B[j]];
            if (cc < 0) continue;
            st = meet(st, data_[cc].exit_state);
          } else {
            st = meet(st, out[j]);
          }
        }
        if (st == in[i]) continue;
        FwdState o = st;
        for (const auto& in_ : p_.blocks[pos].insns)
          if (in_.op != Op::CALL) transfer(o, in_, p_, opt_);
        in[i] = st;
        if (!(o == out[i])) {
          out[i] = o;
          for (auto sx : P.fwd_succs[i]) {
            dirty[sx] = 1;
            any = true;
          }
        }
      }
    }
    // summaries
    FwdState ex;
    for (auto i : P.rets) ex = meet(ex, out[i]);
    for (auto i : P.calls) {
      auto pos = B[i];
      auto cc = callee_ctx_[pos];
      if (cc < 0) continue;
      d.before_call[g_.site[pos]] = out[i];
      FwdState e;
      for (auto k2 : ctx_of_pos_[pos]) {
        auto it = data_[k2].before_call.find(g_.site[pos]);
        if (it != data_[k2].before_call.end()) e = meet(e, it->second);
      }
      auto& x = data_[cc].entry_state;
      if (!(e == x)) {
        x = e;
        push(static_cast<std::size_t>(cc));
      }
    }
    if (!(ex == d.exit_state)) {
      d.exit_state = ex;
      if (ctxs_[k].site_pos >= 0)
        for (auto k2 : ctx_of_pos_[ctxs_[k].site_pos]) push(k2);
    }
  }

  std::vector<std::unique_ptr<ProcInfo>> info_;
  std::vector<char> fresh_live_, fresh_fwd_;
  std::vector<std::vector<FwdState>> fwd_out_;
  const Program& p_;
  Graph g_;
  AnalysisOptions opt_;
  bool live_, fwd_;
  std::vector<Ctx> ctxs_;
  std::vector<std::vector<std::uint32_t>> ctx_of_pos_;
  std::vector<std::int32_t> callee_ctx_;
  std::vector<ContextData> data_;
};

std::map<BlockId, std::vector<std::pair<EdgeKind, BlockId>>> snapshot(const Program& p) {
  std::map<BlockId, std::vector<std::pair<EdgeKind, BlockId>>> s;
  for (const auto& bb : p.blocks) {
    auto& v = s[bb.id];
    for (const auto& e : bb.succs)
      if (e.truth == Truth::TRUE_EDGE) v.push_back({e.kind, e.target});
  }
  return s;
}

// Merged per-instruction views for the blocks at `positions`.
void merge_blocks(const Program& p, const Engine& eng, const std::vector<std::uint32_t>& positions, Analyses& a,
                  bool want_live, bool want_fwd) {
  const auto& g = eng.graph();
  if (want_live) {
    a.live.before.resize(p.next_insn, 0);
    a.live.after.resize(p.next_insn, 0);
  }
  if (want_fwd) a.fwd.before.resize(p.next_insn);
  for (auto pos : positions) {
    const auto& bb = p.blocks[pos];
    RegSet bin = 0, bout = 0;
    FwdState fin;
    for (const auto& in : bb.insns) {
      if (want_live) a.live.before[in.id] = a.live.after[in.id] = 0;
      if (want_fwd) a.fwd.before[in.id] = FwdState{};
    }
    for (auto k : eng.contexts_at(pos)) {
      const auto& d = eng.data(k);
      auto li = g.local[eng.proc(k)][pos];
      if (want_live) {
        RegSet l = d.live_out[li];
        bin |= d.live_in[li];
        bout |= l;
        for (std::size_t j = bb.insns.size(); j-- > 0;) {
          const auto& in = bb.insns[j];
          a.live.after[in.id] |= l;
          if (in.op == Op::CALL) {
            l = eng.callee_entry_live(pos);
          } else {
            l = (l & ~defs(in)) | uses(in);
          }
          a.live.before[in.id] |= l;
        }
      }
      if (want_fwd) {
        FwdState s = d.fwd_in[li];
        fin = meet(fin, s);
        for (const auto& in : bb.insns) {
          a.fwd.before[in.id] = meet(a.fwd.before[in.id], s);
          if (in.op != Op::CALL) transfer(s, in, p, a.opt);
        }
      }
    }
    if (want_live) {
      a.live.block_in[bb.id] = bin;
      a.live.block_out[bb.id] = bout;
    }
    if (want_fwd) a.fwd.block_in[bb.id] = fin;
  }
}

Analyses run_full(const Program& p, const AnalysisOptions& opt, bool want_live, bool want_fwd) {
  Analyses a;
  a.opt = opt;
  Engine eng(p, opt, want_live, want_fwd);
  std::vector<std::size_t> all(eng.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  eng.solve(all);
  std::vector<std::uint32_t> positions(p.blocks.size());
  for (std::uint32_t i = 0; i < positions.size(); ++i) positions[i] = i;
  merge_blocks(p, eng, positions, a, want_live, want_fwd);
  for (std::size_t k = 0; k < eng.size(); ++k) a.contexts[eng.key(k)] = eng.data(k);
  a.succ_snapshot = snapshot(p);
  const auto& g = eng.graph();
  for (std::size_t q = 0; q < g.entries.size(); ++q) {
    auto& v = a.proc_blocks[g.entry_id(q)];
    for (auto b : g.blocks[q]) v.push_back(g.id(b));
  }
  return a;
}

}  // namespace

LivenessResult liveness(const Program& p) { return run_full(p, {}, true, false).live; }
ConstResult constants(const Program& p, const AnalysisOptions& opt) { return run_full(p, opt, false, true).fwd; }
NonZeroResult nonzero(const Program& p, const AnalysisOptions& opt) { return run_full(p, opt, false, true).fwd; }
Analyses analyze(const Program& p, const AnalysisOptions& opt) { return run_full(p, opt, true, true); }

std::optional<FwdState> Analyses::state_in_context(const Program& p, InsnId id, ContextKey ctx) const {
  auto it = contexts.find(ctx);
  if (it == contexts.end()) return std::nullopt;
  const auto& d = it->second;
  for (std::size_t li = 0; li < d.blocks.size(); ++li) {
    const auto& bb = p.block(d.blocks[li]);
    FwdState s = d.fwd_in[li];
    for (const auto& in : bb.insns) {
      if (in.id == id) return s;
      if (in.op != Op::CALL) transfer(s, in, p, opt);
    }
  }
  return std::nullopt;
}

void incremental_update(const Program& p, Analyses& a, const std::set<BlockId>& region) {
  auto snap = snapshot(p);
  for (const auto& [b, succs] : snap) {
    if (region.count(b)) continue;
    auto it = a.succ_snapshot.find(b);
    if (it == a.succ_snapshot.end())
      throw AnalysisError("block " + std::to_string(b) + " is new but outside the changed region");
    if (it->second != succs)
      throw AnalysisError("region not closed: successors of block " + std::to_string(b) + " changed");
  }
  for (const auto& [b, succs] : a.succ_snapshot)
    if (!snap.count(b) && !region.count(b))
      throw AnalysisError("block " + std::to_string(b) + " was removed outside the changed region");

  Engine eng(p, a.opt, true, true);
  const auto& g = eng.graph();
  const std::size_t np = g.entries.size();

  std::map<BlockId, std::uint32_t> proc_of_entry;
  for (std::uint32_t q = 0; q < np; ++q) proc_of_entry[g.entry_id(q)] = q;

  // seeds: procedures touching the region before or after the change, and
  // procedures whose block set changed
  std::vector<char> affected(np, 0);
  std::set<BlockId> touched(region.begin(), region.end());
  for (std::uint32_t q = 0; q < np; ++q) {
    auto it = a.proc_blocks.find(g.entry_id(q));
    std::vector<BlockId> now;
    for (auto b : g.blocks[q]) now.push_back(g.id(b));
    if (it == a.proc_blocks.end() || it->second != now) {
      affected[q] = 1;
      if (it != a.proc_blocks.end()) touched.insert(it->second.begin(), it->second.end());
      touched.insert(now.begin(), now.end());
    }
    for (auto b : now)
      if (region.count(b)) affected[q] = 1;
  }
  for (const auto& [entry, bl] : a.proc_blocks) {
    bool hit = false;
    for (auto b : bl) hit |= region.count(b) > 0;
    if (!hit) continue;
    auto it = proc_of_entry.find(entry);
    if (it != proc_of_entry.end()) affected[it->second] = 1;
    touched.insert(bl.begin(), bl.end());
  }
  for (BlockId b : touched) {
    if (!p.has_block(b)) continue;
    auto pos = p.index_of(b);
    if (g.kind[pos] == kCall && g.callee[pos] >= 0) affected[g.callee[pos]] = 1;
    for (auto q : g.procs_of[pos]) affected[q] = 1;
  }

  // close over call relationships: callee <-> every procedure containing the call
  std::vector<std::vector<std::uint32_t>> adj(np);
  for (std::size_t pos = 0; pos < g.nb; ++pos) {
    if (g.kind[pos] != kCall || g.callee[pos] < 0) continue;
    auto c = static_cast<std::uint32_t>(g.callee[pos]);
    for (auto q : g.procs_of[pos]) {
      adj[q].push_back(c);
      adj[c].push_back(q);
    }
  }
  for (;;) {
    std::vector<std::uint32_t> stack;
    for (std::uint32_t q = 0; q < np; ++q)
      if (affected[q]) stack.push_back(q);
    while (!stack.empty()) {
      auto q = stack.back();
      stack.pop_back();
      for (auto r : adj[q])
        if (!affected[r]) {
          affected[r] = 1;
          stack.push_back(r);
        }
    }
    // reuse stored contexts; a mismatch widens the affected set
    bool widened = false;
    for (std::size_t k = 0; k < eng.size(); ++k) {
      if (affected[eng.proc(k)]) continue;
      auto it = a.contexts.find(eng.key(k));
      if (it == a.contexts.end() || !eng.load(k, it->second)) {
        affected[eng.proc(k)] = 1;
        widened = true;
      }
    }
    if (!widened) break;
  }

  std::vector<std::size_t> work;
  for (std::size_t k = 0; k < eng.size(); ++k)
    if (affected[eng.proc(k)]) {
      eng.reset(k);
      work.push_back(k);
    }
  eng.solve(work);

  // refresh merged views of every block an affected procedure holds now or held before
  std::set<std::uint32_t> refresh;
  for (std::uint32_t q = 0; q < np; ++q)
    if (affected[q])
      for (auto b : g.blocks[q]) refresh.insert(b);
  for (BlockId b : touched)
    if (p.has_block(b)) refresh.insert(static_cast<std::uint32_t>(p.index_of(b)));
  for (const auto& [entry, bl] : a.proc_blocks) {
    auto it = proc_of_entry.find(entry);
    if (it != proc_of_entry.end() && !affected[it->second]) continue;
    for (auto b : bl)
      if (p.has_block(b)) refresh.insert(static_cast<std::uint32_t>(p.index_of(b)));
  }
  // blocks that are in no procedure at all still need their default facts
  for (std::uint32_t pos = 0; pos < g.nb; ++pos)
    if (g.procs_of[pos].empty()) refresh.insert(pos);

  merge_blocks(p, eng, std::vector<std::uint32_t>(refresh.begin(), refresh.end()), a, true, true);

  // drop facts of instructions and blocks that no longer exist
  std::vector<char> present(p.next_insn, 0);
  for (const auto& bb : p.blocks)
    for (const auto& in : bb.insns) present[in.id] = 1;
  for (std::size_t i = 0; i < a.live.before.size(); ++i)
    if (i >= present.size() || !present[i]) {
      a.live.before[i] = a.live.after[i] = 0;
      a.fwd.before[i] = FwdState{};
    }
  for (auto* m : {&a.live.block_in, &a.live.block_out})
    for (auto it = m->begin(); it != m->end();) it = p.has_block(it->first) ? std::next(it) : m->erase(it);
  for (auto it = a.fwd.block_in.begin(); it != a.fwd.block_in.end();)
    it = p.has_block(it->first) ? std::next(it) : a.fwd.block_in.erase(it);

  a.contexts.clear();
  for (std::size_t k = 0; k < eng.size(); ++k) a.contexts[eng.key(k)] = eng.data(k);
  a.succ_snapshot = std::move(snap);
  a.proc_blocks.clear();
  for (std::size_t q = 0; q < np; ++q) {
    auto& v = a.proc_blocks[g.entry_id(q)];
    for (auto b : g.blocks[q]) v.push_back(g.id(b));
  }
}

}  // namespace fog
