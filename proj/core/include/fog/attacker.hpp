#pragma once

#include <map>
#include <set>
#include <vector>

#include "fog/ir.hpp"
#include "fog/opaque.hpp"

namespace fog {

inline constexpr int kFunctionless = -1;

struct ViewEdge {
  BlockId src = kNoBlock, dst = kNoBlock;
  EdgeKind kind = EdgeKind::FALLTHROUGH;
  auto operator<=>(const ViewEdge&) const = default;
};

struct AttackerOptions {
  bool fallthrough_first = true;  // at equal queue distance, fall-through claims win
  double direct_weight = 1.0;
  double fallthrough_weight = 1.0;  // conditional fall-through edges
  double taken_weight = 1.0;        // conditional taken edges
  double switch_weight = 0.3;
  int max_sweeps = 20;
};

struct AttackerView {
  std::set<ViewEdge> db, gui;
  std::set<BlockId> discovered;
  std::map<BlockId, int> assignment;  // every block; kFunctionless when not in a function
  std::vector<BlockId> function_entries;  // by function id
  int symbols = 0;                        // ids below this come from function symbols

  int function_of(BlockId b) const;
  // gui = db edges whose endpoints share a function
  void refresh_gui();
};

// Truth-blind disassembly: only instructions, layout, tables and symbols are read.
AttackerView recursive_descent(const Program& p, const AttackerOptions& opt = {});
// Attacker-improved partitioning: disassembles code referenced from tables and
// immediates, then moves blocks to their best-connected function.
void repartition(const Program& p, AttackerView& v, const AttackerOptions& opt = {});

struct ResolveResult {
  int resolved = 0;
  std::vector<int> predicates;  // ids, in resolution order
};
// Both remove the fake edges of predicates whose whole computation the attacker
// sees, uninterrupted, in the database (soundish) or in one GUI function (unsound).
ResolveResult resolve_soundish(const Program& p, const std::vector<OpaquePredicate>& preds, AttackerView& v,
                               const AttackerOptions& opt = {});
ResolveResult resolve_unsound(const Program& p, const std::vector<OpaquePredicate>& preds, AttackerView& v,
                              const AttackerOptions& opt = {});

enum class EdgeClass { TP, FP, FN, TN, SFN, STN };
const char* edge_class_name(EdgeClass c);

struct ClassifiedEdge {
  ViewEdge edge;
  Truth truth = Truth::TRUE_EDGE;
  EdgeClass db = EdgeClass::TP, gui = EdgeClass::TP;
};

// Ground-truth edges of the program that a CFG view can hold (calls excluded).
std::vector<std::pair<ViewEdge, Truth>> truth_edges(const Program& p);
std::vector<ClassifiedEdge> classify_edges(const Program& p, const AttackerView& v);

}  // namespace fog
