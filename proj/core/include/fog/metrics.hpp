#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fog/attacker.hpp"
#include "fog/factoring.hpp"
#include "fog/interp.hpp"

namespace fog {

// Column order of every rate table: Total, then inter-archive/object/function,
// then intra-archive/object/function.
enum Column { kTotal, kIA, kIO, kIF, kiA, kiO, kiF, kColumns };
const char* column_name(int c);
// Columns an edge between blocks of these provenances counts in (kTotal always).
std::array<bool, kColumns> edge_columns(const Provenance& a, const Provenance& b);

// Rounds 100*num/den half to even; 0 when den is 0.
int percent(std::uint64_t num, std::uint64_t den);

struct RateRow {
  std::array<int, kColumns> count{};  // FP (or FN) edges
  std::array<int, kColumns> base{};   // fake (or true) edges
  double rate(int c) const { return base[c] ? static_cast<double>(count[c]) / base[c] : 0.0; }
};

struct ViewRates {
  RateRow fp, fn;
};

struct FalseRateReport {
  ViewRates db, gui;
  int true_edges = 0, fake_edges = 0;
  int drawn_edges = 0;
  std::size_t functionless_insns = 0, discovered_insns = 0;
};

FalseRateReport false_rates(const Program& p, const AttackerView& v);
// IA <= IO <= IF and iF <= iO <= iA on every count row.
bool categories_coherent(const FalseRateReport& r);

struct SplitPairReport {
  int total = 0, wrong = 0, correct = 0;
  double wrong_fraction() const { return total ? static_cast<double>(wrong) / total : 0.0; }
};
// A pair is correct when both halves sit in the same (non-null) function.
SplitPairReport split_pairs(const FactoringReport& rep, const AttackerView& v);

// Instruction counts keyed by how many distinct entries (and their archives,
// objects, functions) reach the instruction through intraprocedural edges.
struct ReachabilityHistogram {
  std::map<int, std::size_t> entries, archives, objects, functions;
};
ReachabilityHistogram reachability_histogram(const Program& p);

struct ApplicabilityBreakdown {
  std::size_t original_insns = 0, factored_insns = 0;
  // factored instructions by the number of distinct archives/objects/functions in their set
  std::map<int, std::size_t> by_archives, by_objects, by_functions;
  // dispatchers by number of contexts, and by number of contexts executed in training
  std::map<int, int> by_contexts, by_covered;
  double factored_fraction() const {
    return original_insns ? static_cast<double>(factored_insns) / original_insns : 0.0;
  }
};
ApplicabilityBreakdown applicability_breakdown(const FactoringReport& rep, const Program& original,
                                               const InsnCounts& counts);

struct OverheadReport {
  std::size_t static_before = 0, static_after = 0;
  std::uint64_t dynamic_before = 0, dynamic_after = 0;
  double static_ratio() const { return static_before ? static_cast<double>(static_after) / static_before : 1.0; }
  double dynamic_ratio() const {
    return dynamic_before ? static_cast<double>(dynamic_after) / dynamic_before : 1.0;
  }
};
OverheadReport overhead_counts(const Program& original, const Program& obfuscated,
                               const std::vector<std::vector<Word>>& inputs);

struct VariabilityReport {
  int sets = 0, uncovered = 0, invariant = 0, variable = 0;
  int multi_covered = 0;             // sets with at least two executed contexts
  int multi_covered_invariant = 0;   // of those, not VARIABLE
  double variable_fraction() const {
    int cov = invariant + variable;
    return cov ? static_cast<double>(variable) / cov : 0.0;
  }
};
// Successor sets are gathered per run, so run boundaries never add a successor.
VariabilityReport dispatcher_variability_report(const Program& obfuscated, const FactoringReport& rep,
                                                const std::vector<std::vector<Word>>& inputs);

nlohmann::json to_json(const FalseRateReport& r);
nlohmann::json to_json(const SplitPairReport& r);
nlohmann::json to_json(const ReachabilityHistogram& r);
nlohmann::json to_json(const ApplicabilityBreakdown& r);
nlohmann::json to_json(const OverheadReport& r);
nlohmann::json to_json(const VariabilityReport& r);
nlohmann::json view_json(const AttackerView& v);

// Header plus rows: label,view,metric,Total,IA,IO,IF,iA,iO,iF with metric in FP/FPR/FN/FNR.
std::string false_rates_csv(const std::vector<std::pair<std::string, FalseRateReport>>& rows);

}  // namespace fog
