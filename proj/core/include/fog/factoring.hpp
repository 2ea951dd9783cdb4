#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fog/dataflow.hpp"
#include "fog/interp.hpp"
#include "fog/ir.hpp"
#include "fog/opaque.hpp"
#include "fog/rng.hpp"

namespace fog {

enum class FragmentKind { SLICE, SEQUENCE };
enum class DispatcherKind { COND_JUMP, INDIRECT_BRANCH, STATIC_SWITCH, DYNAMIC_SWITCH };
inline constexpr int kNumDispatcherKinds = 4;
const char* dispatcher_name(DispatcherKind k);
std::optional<DispatcherKind> parse_dispatcher(const std::string& s);

struct Fragment {
  int id = 0;
  FragmentKind kind = FragmentKind::SEQUENCE;
  BlockId block = kNoBlock;
  std::vector<InsnId> insns;  // canonical execution order
  Provenance prov;
  std::uint64_t exec_count = 0;
};

using Fingerprint = std::uint64_t;

// Instruction id -> execution count, from a block profile.
using InsnCounts = std::map<InsnId, std::uint64_t>;
InsnCounts instruction_counts(const Program& p, const ExecutionProfile& prof);

std::vector<Fragment> enumerate_fragments(const Program& p, const InsnCounts& counts, int min_size,
                                          int max_size = 6);
Fingerprint fingerprint(const Program& p, const Fragment& f);

struct PriorityWeights {
  double size = 4, archives = 8, objects = 4, functions = 2, covered_archives = 6;
  double bonus[kNumDispatcherKinds] = {1, 1, 2, 3};  // COND, INDIRECT, STATIC, DYNAMIC
};

struct Priority {
  int size = 0, n_archives = 0, n_objects = 0, n_functions = 0;
  int covered_archives = 0, covered_objects = 0, covered_functions = 0;
  double dispatcher_bonus = 0;
  double value = 0;
};

// Per-context register plan around the shared copy.
struct GluePlan {
  std::vector<std::pair<int, int>> prologue;  // parallel move dst <- src, saves included
  std::vector<Operand> aux;                   // one value per aux register
  std::vector<std::pair<int, int>> epilogue;  // parallel move dst <- src
  std::vector<InsnId> before, after;          // block schedule around the fragment
  RegSet live_out = 0;                        // after the fragment, flags bit included
  RegSet slots = 0;                           // save registers
  RegSet spare = 0;                           // dead at the end of the glue
};

struct ControlPlan {
  int ctrl = -1, temp = -1;
  std::vector<bool> reuse;  // controller already holds a usable value in this context
  int zero_context = 0;     // COND_JUMP
};

struct RenamingPlan {
  int reference = 0;
  std::vector<GluePlan> glue;                          // per fragment
  std::vector<std::pair<std::size_t, int>> aux_slots;  // (instruction index, operand) taken from aux registers
  std::vector<int> aux_regs;
  RegSet shared = 0;                                   // registers of the shared copy, aux included
  std::map<DispatcherKind, ControlPlan> control;       // eligible kinds
  bool bounds_check = false;                           // STATIC_SWITCH check possible (flags dead everywhere)
};

struct CandidateSet {
  std::vector<Fragment> fragments;
  int reference = 0;
  std::set<DispatcherKind> dispatchers;
  Priority priority;
};

struct FactoringOptions {
  int min_fragment_size = 2;
  int max_fragment_size = 6;
  std::set<DispatcherKind> enabled = {DispatcherKind::COND_JUMP, DispatcherKind::INDIRECT_BRANCH,
                                      DispatcherKind::STATIC_SWITCH, DispatcherKind::DYNAMIC_SWITCH};
  PriorityWeights weights;
  double factoring_probability = 100.0;
  double fake_entry_probability = 30.0;
  double predicate_target_bias = 50.0;  // share of fake entries aimed inside predicate computations
  int hotness_skip_permille = 0;
  std::uint64_t seed = 0;
  bool check_incremental = false;       // compare against a full re-analysis after every set
};

int select_reference(const Program& p, const std::vector<Fragment>& set);
// Empty when no renaming or no dispatcher works for the set under `a`.
std::optional<RenamingPlan> plan_renaming(const Program& p, const Analyses& a, const std::vector<Fragment>& set,
                                          int reference, const std::set<DispatcherKind>& enabled);
Priority priority(const Program& p, const std::vector<Fragment>& set, const InsnCounts& counts,
                  const std::set<DispatcherKind>& eligible, const PriorityWeights& w);
std::vector<CandidateSet> build_candidates(const Program& p, const std::vector<Fragment>& fragments,
                                           const Analyses& a, const InsnCounts& counts,
                                           const FactoringOptions& opt);
// Uniform over the eligible enabled kinds.
std::optional<DispatcherKind> choose_dispatcher(const RenamingPlan& plan, const std::set<DispatcherKind>& enabled,
                                                Rng& rng);

struct AppliedSet {
  int id = 0;
  std::vector<Fragment> fragments;
  int reference = 0;
  DispatcherKind dispatcher = DispatcherKind::COND_JUMP;
  BlockId factored_block = kNoBlock;
  BlockId dispatcher_block = kNoBlock;  // block holding the final transfer
  InsnId dispatcher_insn = 0;
  std::vector<std::pair<BlockId, BlockId>> split_pairs;  // (B_a, B_b) per context
  std::vector<int> glue_sizes;
  std::vector<std::uint32_t> tables;
  std::vector<BlockId> selection_blocks;
  std::vector<int> table_choice;  // per context, DYNAMIC_SWITCH: table selected on its path
  std::vector<int> slot_index;    // per context, switch dispatchers: table slot
  int fake_entries = 0;
  Priority priority;
};

struct FactoringReport {
  std::vector<AppliedSet> applied;
  int candidates = 0;
  int skipped_probability = 0, skipped_invalid = 0;
  std::size_t factored_instructions = 0;
};

// Rewrites the program for one set; `a` must be current. Returns the blocks it touched.
std::set<BlockId> apply_factoring(Program& p, const Analyses& a, const CandidateSet& set, const RenamingPlan& plan, DispatcherKind kind,
                                  const FactoringOptions& opt, std::vector<OpaquePredicate>* preds, Rng& rng,
                                  AppliedSet& out);

FactoringReport run_factoring_phase(Program& p, const FactoringOptions& opt, Analyses& a, const InsnCounts& counts,
                                    std::vector<OpaquePredicate>* preds = nullptr);

}  // namespace fog
