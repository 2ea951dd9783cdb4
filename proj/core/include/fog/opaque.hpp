#pragma once

#include <cstdint>
#include <vector>

#include "fog/dataflow.hpp"
#include "fog/ir.hpp"

namespace fog {

enum class PredicateKind { ALWAYS_TRUE, ALWAYS_FALSE };  // whether the BR condition always holds
enum class Family {
  SQUARE_MOD4_LT2,   // x*x & 3 < 2
  SQUARE_MOD4_EQ3,   // x*x & 3 == 3, never
  CONSEC_EVEN,       // x*(x+1) & 1 == 0
  CONSEC_ODD,        // x*(x+1) & 1 == 1, never
};
const char* family_name(Family f);
const char* predicate_kind_name(PredicateKind k);

struct OpaquePredicate {
  int id = 0;
  BlockId block = kNoBlock;         // first block of the computation
  BlockId branch_block = kNoBlock;  // block ending in the BR (== block unless split)
  BlockId cont = kNoBlock;          // real successor
  std::vector<InsnId> computation;
  InsnId branch = 0;
  FakeKey fake;
  PredicateKind kind = PredicateKind::ALWAYS_FALSE;
  Family family = Family::CONSEC_EVEN;
  int scratch = 0, source = 0;
  int cycle = -1;
};

struct CouplingCycle {
  int id = 0;
  std::vector<int> members;  // predicate ids; member i's fake edge enters member i+1
};

struct InsertResult {
  Program program;
  std::vector<OpaquePredicate> predicates;
  std::vector<BlockId> skipped;  // selected but no dead scratch register or live flags
};

// Prepends a predicate computation and a never-taken BR to a random subset
// of blocks. `live` must be current for `p`.
InsertResult insert_predicates(Program p, double probability, std::uint64_t seed, const LivenessResult& live);

struct FakeTargetResult {
  Program program;
  std::vector<CouplingCycle> cycles;
  std::vector<int> fallthrough_fallbacks;  // predicates whose fall-through request was refused
  bool short_group = false;                // last group had fewer than cycle_size members
};

// Redirects fake edges after layout: cycles of predicates whose fake edges
// interrupt each other's computations, or random blocks in other functions.
// Updates `preds` in place.
FakeTargetResult choose_fake_targets(Program p, std::vector<OpaquePredicate>& preds, int cycle_size,
                                     double cycle_probability, double fallthrough_probability, std::uint64_t seed);

}  // namespace fog
