#pragma once

#include <cstdint>
#include <vector>

#include "fog/ir.hpp"

namespace fog::detail {

inline bool is_alu_op(Op op) { return op >= Op::ADD && op <= Op::SHR; }

// Instructions eligible for fragments.
bool factorable(const Program& p, const Instruction& in);

// Must `u` (earlier) stay before `v`?
bool depends(const Instruction& u, const Instruction& v);

// Number of leading instructions that are not the block's control transfer.
std::size_t body_size(const BasicBlock& bb);

// Reschedules a block body as [before] + members + [after]; members are
// positions in execution order. `ok` is false when a dependence would break.
struct Schedule {
  bool ok = false;
  std::vector<InsnId> before, after;
};
Schedule schedule_around(const std::vector<Instruction>& insns, std::size_t n, const std::vector<std::size_t>& members);

// Register value flow of an instruction sequence: each register use refers to
// an earlier result (k >= 0) or an input (-(i+1)).
struct Flow {
  std::vector<std::int64_t> key;  // shape + flow + memory offsets
  std::vector<int> inputs;        // input registers by first use
  std::vector<int> dst;           // defined register or -1
};
Flow flow_of(const std::vector<const Instruction*>& seq);

}  // namespace fog::detail
