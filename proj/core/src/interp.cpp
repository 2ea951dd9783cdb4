#include "fog/interp.hpp"

#include <unordered_map>

namespace fog {

const char* status_name(RunStatus s) {
  switch (s) {
    case RunStatus::HALTED: return "halted";
    case RunStatus::FUEL_EXHAUSTED: return "fuel exhausted";
    case RunStatus::GUARD_PAGE: return "guard page access";
    case RunStatus::BAD_JUMP: return "indirect jump to non-block address";
    case RunStatus::SWITCH_RANGE: return "switch index out of range";
    case RunStatus::EMPTY_RETURN: return "return with empty call stack";
  }
  return "?";
}

const char* variability_name(Variability v) {
  switch (v) {
    case Variability::UNCOVERED: return "UNCOVERED";
    case Variability::INVARIANT: return "INVARIANT";
    case Variability::VARIABLE: return "VARIABLE";
  }
  return "?";
}

std::set<BlockId> ExecutionProfile::covered() const {
  std::set<BlockId> s;
  for (auto& [b, c] : block_counts)
    if (c > 0) s.insert(b);
  return s;
}

void ExecutionProfile::merge(const ExecutionProfile& o) {
  for (auto& [b, c] : o.block_counts) block_counts[b] += c;
  for (auto& [e, c] : o.edge_counts) edge_counts[e] += c;
}

namespace {

std::uint64_t u(Word w) { return static_cast<std::uint64_t>(w); }
Word w(std::uint64_t x) { return static_cast<Word>(x); }

Word alu(Op op, Word a, Word b) {
  switch (op) {
    case Op::ADD: return w(u(a) + u(b));
    case Op::SUB: return w(u(a) - u(b));
    case Op::MUL: return w(u(a) * u(b));
    case Op::XOR: return a ^ b;
    case Op::AND: return a & b;
    case Op::OR: return a | b;
    case Op::SHL: return w(u(a) << (u(b) & 63));
    case Op::SHR: return w(u(a) >> (u(b) & 63));
    default: return 0;
  }
}

}  // namespace

RunResult run(const Program& p, const std::vector<Word>& input, const RunOptions& opt) {
  RunResult res;
  const std::size_t nb = p.blocks.size();
  std::vector<Word> start(nb);
  std::unordered_map<Word, std::uint32_t> at_addr;
  Word addr = kCodeBase;
  for (std::size_t i = 0; i < nb; ++i) {
    start[i] = addr;
    at_addr.emplace(addr, static_cast<std::uint32_t>(i));
    addr += static_cast<Word>(p.blocks[i].insns.size());
  }
  std::unordered_map<Word, Word> mem;
  for (std::size_t g = 0; g < p.globals.size(); ++g)
    mem[p.global_address(static_cast<std::uint32_t>(g))] = p.globals[g].value;
  for (std::size_t t = 0; t < p.tables.size(); ++t) {
    Word base = p.table_address(static_cast<std::uint32_t>(t));
    const auto& e = p.tables[t].entries;
    for (std::size_t k = 0; k < e.size(); ++k) mem[base + static_cast<Word>(k)] = start[p.index_of(e[k])];
  }

  std::vector<std::uint64_t> bcount(opt.profile ? nb : 0);
  std::unordered_map<std::uint64_t, std::uint64_t> ecount;
  std::array<Word, kNumRegs> r{};
  bool fz = false, fn = false;
  std::vector<std::uint32_t> stack;
  std::size_t in_pos = 0;
  std::int64_t prev = -1;

  auto label_value = [&](const Operand& o) -> Word {
    switch (o.lk) {
      case LabelKind::Block: return start[p.index_of(static_cast<BlockId>(o.value))];
      case LabelKind::Table: return p.table_address(static_cast<std::uint32_t>(o.value));
      case LabelKind::Global: return p.global_address(static_cast<std::uint32_t>(o.value));
    }
    return 0;
  };
  auto val = [&](const Operand& o) -> Word {
    if (o.is_reg()) return r[o.reg];
    if (o.is_imm()) return o.value;
    return label_value(o);
  };
  auto trap = [&](RunStatus s, const std::string& m) {
    res.status = s;
    res.message = m;
  };

  std::size_t cur = p.index_of(p.entry_block());
  for (;;) {
    // enter block
    if (opt.profile) {
      ++bcount[cur];
      if (prev >= 0) ++ecount[(static_cast<std::uint64_t>(prev) << 32) | cur];
    }
    if (opt.trace) {
      TraceEntry te;
      te.block = p.blocks[cur].id;
      if (opt.snapshots) te.regs.assign(r.begin(), r.end());
      res.trace.push_back(std::move(te));
    }
    prev = static_cast<std::int64_t>(cur);
    const auto& bb = p.blocks[cur];
    std::size_t next = cur + 1;
    bool done = false;
    for (const auto& in : bb.insns) {
      if (res.steps >= opt.fuel) {
        trap(RunStatus::FUEL_EXHAUSTED, "fuel exhausted");
        done = true;
        break;
      }
      ++res.steps;
      const auto& o = in.ops;
      Word result = 0;
      bool has_result = false;
      switch (in.op) {
        case Op::MOV: result = r[o[1].reg]; r[o[0].reg] = result; has_result = true; break;
        case Op::MOVI: result = val(o[1]); r[o[0].reg] = result; has_result = true; break;
        case Op::ADD: case Op::SUB: case Op::MUL: case Op::XOR:
        case Op::AND: case Op::OR: case Op::SHL: case Op::SHR:
          result = alu(in.op, r[o[1].reg], val(o[2]));
          r[o[0].reg] = result;
          has_result = true;
          break;
        case Op::CMP: {
          Word a = r[o[0].reg], b = val(o[1]);
          fz = a == b;
          fn = a < b;
          break;
        }
        case Op::LOAD: case Op::STORE: {
          Word ea = w(u(r[o[1].reg]) + u(o[2].value));
          if (ea < kGuardLimit) {
            trap(RunStatus::GUARD_PAGE, "access to address " + std::to_string(ea));
            done = true;
            break;
          }
          if (in.op == Op::LOAD) {
            auto it = mem.find(ea);
            result = it == mem.end() ? 0 : it->second;
            r[o[0].reg] = result;
          } else {
            result = r[o[0].reg];
            mem[ea] = result;
          }
          has_result = true;
          break;
        }
        case Op::IN:
          result = in_pos < input.size() ? input[in_pos++] : 0;
          r[o[0].reg] = result;
          has_result = true;
          break;
        case Op::OUT:
          result = r[o[0].reg];
          res.outputs.push_back(result);
          has_result = true;
          break;
        case Op::SWAP: std::swap(r[o[0].reg], r[o[1].reg]); break;
        case Op::BR:
          if (eval_cond(in.cond, fz, fn)) next = p.index_of(static_cast<BlockId>(o[0].value));
          break;
        case Op::JMP: next = p.index_of(static_cast<BlockId>(o[0].value)); break;
        case Op::JMPI: {
          auto it = at_addr.find(r[o[0].reg]);
          if (it == at_addr.end()) {
            trap(RunStatus::BAD_JUMP, "JMPI to " + std::to_string(r[o[0].reg]));
            done = true;
            break;
          }
          next = it->second;
          break;
        }
        case Op::SWJ: {
          const auto& t = p.tables.at(o[1].value);
          Word idx = r[o[0].reg];
          if (idx >= 0 && idx < static_cast<Word>(t.entries.size())) {
            next = p.index_of(t.entries[static_cast<std::size_t>(idx)]);
          } else if (in.nops > 2) {
            next = p.index_of(static_cast<BlockId>(o[2].value));
          } else {
            trap(RunStatus::SWITCH_RANGE, "switch index " + std::to_string(idx));
            done = true;
          }
          break;
        }
        case Op::CALL:
          stack.push_back(static_cast<std::uint32_t>(cur + 1));
          next = p.index_of(static_cast<BlockId>(o[0].value));
          break;
        case Op::RET:
          if (stack.empty()) {
            trap(RunStatus::EMPTY_RETURN, "RET with empty call stack");
            done = true;
            break;
          }
          next = stack.back();
          stack.pop_back();
          break;
        case Op::HALT:
          res.status = RunStatus::HALTED;
          done = true;
          break;
      }
      if (done) break;
      if (in.sets_flags && in.op != Op::CMP && has_result) {
        fz = result == 0;
        fn = result < 0;
      }
    }
    if (done) break;
    if (next >= nb) {
      trap(RunStatus::BAD_JUMP, "execution fell off the end of the program");
      break;
    }
    cur = next;
  }

  if (opt.profile) {
    for (std::size_t i = 0; i < nb; ++i)
      if (bcount[i]) res.profile.block_counts[p.blocks[i].id] = bcount[i];
    for (auto& [k, c] : ecount)
      res.profile.edge_counts[{p.blocks[k >> 32].id, p.blocks[k & 0xffffffffu].id}] = c;
  }
  return res;
}

std::map<BlockId, Variability> dispatcher_variability(const Trace& trace, const std::vector<BlockId>& dispatchers,
                                                      const Program& p) {
  std::map<BlockId, std::set<BlockId>> succ;
  for (BlockId d : dispatchers) {
    if (!p.has_block(d)) throw CfgError("unknown dispatcher block " + std::to_string(d));
    succ[d];
  }
  for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
    auto it = succ.find(trace[i].block);
    if (it != succ.end()) it->second.insert(trace[i + 1].block);
  }
  std::map<BlockId, Variability> out;
  for (auto& [d, s] : succ)
    out[d] = s.empty() ? Variability::UNCOVERED : s.size() == 1 ? Variability::INVARIANT : Variability::VARIABLE;
  return out;
}

}  // namespace fog
