// Test-only oracles: small random acyclic programs and brute-force path
// enumeration for the dataflow analyses.
#pragma once

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fog/dataflow.hpp"
#include "fog/ir.hpp"
#include "fog/rng.hpp"

namespace fog::testing {

// Acyclic, calls at depth <= 1, at most `max_insns` instructions in total.
inline Program random_acyclic(std::uint64_t seed, int max_insns = 30) {
  Rng rng(seed, "acyclic");
  std::ostringstream os;
  os << ".word g0 5\n.word g1 0\n";
  int nleaf = static_cast<int>(rng.below(3));
  int budget = 0;
  auto body = [&](int nblocks, const std::string& fname, bool is_main, int& label_id) {
    for (int b = 0; b < nblocks && budget > 2; ++b) {
      std::string lbl = fname + "_b" + std::to_string(label_id++);
      os << lbl << ":\n";
      int n = 1 + static_cast<int>(rng.below(4));
      for (int i = 0; i < n && budget > 2; ++i, --budget) {
        int d = static_cast<int>(rng.below(6)), a = static_cast<int>(rng.below(6)), c = static_cast<int>(rng.below(6));
        static const char* alu[] = {"ADD", "SUB", "MUL", "XOR", "AND", "OR", "SHL", "SHR"};
        switch (rng.below(11)) {
          case 0: os << "MOVI r" << d << ", #" << rng.range(-2, 3) << "\n"; break;
          case 1: os << "MOV r" << d << ", r" << a << "\n"; break;
          case 2: os << alu[rng.below(8)] << " r" << d << ", r" << a << ", r" << c << "\n"; break;
          case 3: os << alu[rng.below(8)] << " r" << d << ", r" << a << ", #" << rng.range(0, 3) << "\n"; break;
          case 4: os << "MOVI r" << d << ", g" << rng.below(2) << "\n"; break;
          case 5: os << "LOAD r" << d << ", [r" << a << ", #" << rng.range(-1, 1) << "]\n"; break;
          case 6: os << "STORE r" << d << ", [r" << a << ", #0]\n"; break;
          case 7: os << "IN r" << d << "\n"; break;
          case 8: os << "OUT r" << d << "\n"; break;
          case 9: os << "SWAP r" << d << ", r" << a << "\n"; break;
          default: os << alu[rng.below(8)] << " r" << d << ", r" << d << ", r" << d << "\n"; break;
        }
      }
      if (is_main && nleaf > 0 && rng.below(3) == 0 && budget > 2) {
        os << "CALL leaf" << rng.below(static_cast<std::uint64_t>(nleaf)) << "\n";
        --budget;
      } else if (b + 1 < nblocks && rng.below(2) == 0 && budget > 2) {
        os << "CMP r" << rng.below(6) << ", #" << rng.range(0, 2) << "\n";
        int tgt = label_id + static_cast<int>(rng.below(static_cast<std::uint64_t>(nblocks - b)));
        os << "BR " << (rng.below(2) ? "Z" : "GT") << ", " << fname << "_b" << tgt << "\n";
        budget -= 2;
      }
    }
  };
  int main_blocks = 3 + static_cast<int>(rng.below(4));
  os << ".archive 0\n.object 0\n.func main\nmain:\n";
  int lid = 0;
  budget = max_insns - 1 - nleaf * 6;
  body(main_blocks, "main", true, lid);
  // forward branch targets may point one block past the end
  for (int extra = lid; extra < lid + main_blocks + 1; ++extra) os << "main_b" << extra << ":\n";
  os << "HALT\n";
  for (int l = 0; l < nleaf; ++l) {
    os << ".func leaf" << l << "\nleaf" << l << ":\n";
    int llid = 0;
    budget = 5;
    body(2, "leaf" + std::to_string(l), false, llid);
    for (int extra = llid; extra < llid + 3; ++extra) os << "leaf" << l << "_b" << extra << ":\n";
    os << "RET\n";
  }
  return parse_program(os.str());
}

struct BruteForce {
  std::map<InsnId, RegSet> live_before;
  std::map<InsnId, FwdState> mop_before;
};

inline BruteForce brute_force(const Program& p, const AnalysisOptions& opt = {}) {
  BruteForce out;
  struct Cfg {
    std::size_t pos, idx;
    std::vector<std::size_t> stack;
  };
  // successor configurations at the end of a block
  auto next = [&](std::size_t pos, const std::vector<std::size_t>& stack) {
    std::vector<Cfg> n;
    const auto& bb = p.blocks[pos];
    Op last = bb.insns.empty() ? Op::MOV : bb.insns.back().op;
    if (last == Op::CALL) {
      auto s = stack;
      s.push_back(pos + 1);
      n.push_back({p.index_of(static_cast<BlockId>(bb.insns.back().ops[0].value)), 0, s});
      return n;
    }
    if (last == Op::RET) {
      if (!stack.empty()) {
        auto s = stack;
        std::size_t to = s.back();
        s.pop_back();
        n.push_back({to, 0, s});
      }
      return n;
    }
    for (const auto& e : bb.succs)
      if (e.truth == Truth::TRUE_EDGE && e.kind != EdgeKind::CALL) n.push_back({p.index_of(e.target), 0, stack});
    return n;
  };

  // liveness: for each reachable configuration, union over all continuations
  std::function<RegSet(const Cfg&)> live_from = [&](const Cfg& c) -> RegSet {
    const auto& bb = p.blocks[c.pos];
    if (c.idx >= bb.insns.size()) {
      RegSet acc = 0;
      for (auto& n : next(c.pos, c.stack)) acc |= live_from(n);
      return acc;
    }
    const auto& in = bb.insns[c.idx];
    if (in.op == Op::HALT) return 0;
    RegSet after = live_from({c.pos, c.idx + 1, c.stack});
    if (in.op == Op::CALL) return after;
    return (after & ~defs(in)) | uses(in);
  };

  std::function<void(const Cfg&, FwdState)> walk = [&](const Cfg& c, FwdState s) {
    const auto& bb = p.blocks[c.pos];
    for (std::size_t i = c.idx; i < bb.insns.size(); ++i) {
      const auto& in = bb.insns[i];
      auto it = out.mop_before.find(in.id);
      out.mop_before[in.id] = it == out.mop_before.end() ? s : meet(it->second, s);
      RegSet l = live_from({c.pos, i, c.stack});
      out.live_before[in.id] |= l;
      if (in.op == Op::HALT) return;
      if (in.op != Op::CALL) transfer(s, in, p, opt);
    }
    for (auto& n : next(c.pos, c.stack)) walk(n, s);
  };
  FwdState top;
  top.reachable = true;
  walk({p.index_of(p.entry_block()), 0, {}}, top);
  return out;
}

}  // namespace fog::testing
