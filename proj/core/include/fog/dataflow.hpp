#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "fog/ir.hpp"

namespace fog {

using RegSet = std::uint32_t;  // bits 0..15 registers, bit 16 flags
inline constexpr RegSet kAllRegs = 0x1ffffu;
inline constexpr RegSet kFlagsMask = 1u << kFlagsBit;

struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AnalysisOptions {
  bool assume_nonzero_bases = true;
};

// Constant and nonzero facts at one program point.
struct FwdState {
  bool reachable = false;
  std::uint16_t cmask = 0;   // register holds a known constant
  std::uint16_t nzmask = 0;  // register is known to be nonzero
  std::array<Word, kNumRegs> val{};

  bool is_const(int r) const { return reachable && (cmask >> r & 1); }
  bool nonzero(int r) const { return reachable && (nzmask >> r & 1); }
  Word value(int r) const { return val[r]; }
  void set_top(int r) {
    cmask &= static_cast<std::uint16_t>(~(1u << r));
    nzmask &= static_cast<std::uint16_t>(~(1u << r));
    val[r] = 0;
  }
  void set_const(int r, Word v);
  bool operator==(const FwdState& o) const;
};

FwdState meet(const FwdState& a, const FwdState& b);
void transfer(FwdState& s, const Instruction& in, const Program& p, const AnalysisOptions& opt);

struct LivenessResult {
  std::vector<RegSet> before, after;  // indexed by instruction id
  std::map<BlockId, RegSet> block_in, block_out;

  RegSet live_before(InsnId i) const { return i < before.size() ? before[i] : 0; }
  RegSet live_after(InsnId i) const { return i < after.size() ? after[i] : 0; }
  bool operator==(const LivenessResult&) const = default;
};

enum class ConstKind { BOTTOM, CONST, TOP };
enum class NonZeroFact { NONZERO, MAYBE_ZERO };

// One forward pass yields both the constant and the nonzero facts.
struct ForwardResult {
  std::vector<FwdState> before;  // indexed by instruction id, merged over contexts
  std::map<BlockId, FwdState> block_in;

  const FwdState& at(InsnId i) const;
  ConstKind kind(InsnId i, int r) const;
  std::optional<Word> constant(InsnId i, int r) const;
  NonZeroFact nonzero(InsnId i, int r) const;
  bool operator==(const ForwardResult& o) const;
};
using ConstResult = ForwardResult;
using NonZeroResult = ForwardResult;

// Context key: (procedure entry, call site); call site 0 is the root context.
using ContextKey = std::pair<BlockId, InsnId>;

struct ContextData {
  std::vector<BlockId> blocks;
  std::vector<RegSet> live_in, live_out;
  std::vector<FwdState> fwd_in;
  RegSet entry_live = 0, exit_live = 0;
  FwdState entry_state, exit_state;
  std::map<InsnId, FwdState> before_call;
  bool operator==(const ContextData&) const = default;
};

struct Analyses {
  AnalysisOptions opt;
  LivenessResult live;
  ForwardResult fwd;
  std::map<ContextKey, ContextData> contexts;
  std::map<BlockId, std::vector<std::pair<EdgeKind, BlockId>>> succ_snapshot;  // TRUE edges
  std::map<BlockId, std::vector<BlockId>> proc_blocks;

  // facts for a single calling context (k = 1)
  std::optional<FwdState> state_in_context(const Program& p, InsnId i, ContextKey ctx) const;
  bool operator==(const Analyses& o) const;
};

LivenessResult liveness(const Program& p);
ConstResult constants(const Program& p, const AnalysisOptions& opt = {});
NonZeroResult nonzero(const Program& p, const AnalysisOptions& opt = {});
Analyses analyze(const Program& p, const AnalysisOptions& opt = {});

// Re-analyzes the procedures whose call/sharing component touches `region`
// and reuses stored results elsewhere. Every block outside the region must
// have the same TRUE successors as when `a` was computed.
void incremental_update(const Program& p, Analyses& a, const std::set<BlockId>& region);

}  // namespace fog
