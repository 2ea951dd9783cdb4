#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "fog/ir.hpp"

namespace fog {

enum class RunStatus { HALTED, FUEL_EXHAUSTED, GUARD_PAGE, BAD_JUMP, SWITCH_RANGE, EMPTY_RETURN };
const char* status_name(RunStatus s);

struct ExecutionProfile {
  std::map<BlockId, std::uint64_t> block_counts;
  std::map<std::pair<BlockId, BlockId>, std::uint64_t> edge_counts;

  std::uint64_t count(BlockId b) const {
    auto it = block_counts.find(b);
    return it == block_counts.end() ? 0 : it->second;
  }
  std::set<BlockId> covered() const;
  void merge(const ExecutionProfile& o);
};

struct TraceEntry {
  BlockId block = kNoBlock;
  std::vector<Word> regs;  // empty unless snapshots were requested
};
using Trace = std::vector<TraceEntry>;

struct RunOptions {
  std::uint64_t fuel = 10'000'000;
  bool trace = false;
  bool snapshots = false;
  bool profile = true;
};

struct RunResult {
  RunStatus status = RunStatus::HALTED;
  std::string message;
  std::vector<Word> outputs;
  std::uint64_t steps = 0;
  Trace trace;
  ExecutionProfile profile;
  bool ok() const { return status == RunStatus::HALTED; }
};

RunResult run(const Program& p, const std::vector<Word>& input, const RunOptions& opt = {});

enum class Variability { UNCOVERED, INVARIANT, VARIABLE };
const char* variability_name(Variability v);

// Classifies each dispatcher block by the distinct successors it reaches in the trace.
std::map<BlockId, Variability> dispatcher_variability(const Trace& trace, const std::vector<BlockId>& dispatchers,
                                                      const Program& p);

}  // namespace fog
