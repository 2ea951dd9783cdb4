#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fog/attacker.hpp"
#include "fog/factoring.hpp"
#include "fog/generator.hpp"
#include "fog/metrics.hpp"
#include "fog/opaque.hpp"

namespace fog {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ObfuscationConfig {
  std::uint64_t main_seed = 0xDEADDEADDEADDEADull;
  std::uint64_t layout_seed = 1;
  double predicate_insertion_probability = 20;
  int cycle_size = 4;
  double cycle_probability = 100;
  double fake_fallthrough_probability = 50;
  double fake_table_entry_probability = 30;
  double factoring_probability = 100;
  std::set<DispatcherKind> enabled_dispatchers = {DispatcherKind::COND_JUMP, DispatcherKind::INDIRECT_BRANCH,
                                                  DispatcherKind::STATIC_SWITCH, DispatcherKind::DYNAMIC_SWITCH};
  int hotness_skip_permille = 0;
  bool branch_flipping = true;
  int min_fragment_size = 2;
  bool assume_nonzero_bases = true;
  PriorityWeights priority_weights;

  void validate() const;  // throws ConfigError
};

// Keys are the field names; priority_weights.<field> and
// priority_weights.bonus.<dispatcher> reach into the record.
void set_field(ObfuscationConfig& c, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();
// Flat key=value lines, '#' starts a comment. Unknown keys are errors.
ObfuscationConfig parse_config(std::string_view text, ObfuscationConfig base = {});
std::string serialize_config(const ObfuscationConfig& c);
nlohmann::json to_json(const ObfuscationConfig& c);

struct PipelineResult {
  Program program;
  std::vector<OpaquePredicate> predicates;
  std::vector<CouplingCycle> cycles;
  FactoringReport factoring;
  InsnCounts counts;  // training counts of the program factoring saw
  Program before_factoring, after_factoring;  // in the original layout
  int skipped_predicates = 0;
  int fallthrough_fallbacks = 0;
  bool short_group = false;
};

// Everything the serialized program text leaves out: fake edges, pinned
// instructions, predicates, cycles and applied factoring sets.
nlohmann::json ground_truth_json(const PipelineResult& r);
struct GroundTruth {
  std::set<FakeKey> fake;
  std::vector<InsnId> pinned;
  std::vector<OpaquePredicate> predicates;
  FactoringReport factoring;  // applied sets carry ids, blocks and split pairs only
};
GroundTruth parse_ground_truth(const nlohmann::json& j);  // throws ConfigError on malformed input
// Re-attaches the ground truth to a parsed program and rebuilds its CFG.
void attach(Program& p, const GroundTruth& g);

// predicates, factoring, layout (and flipping), then fake-edge redirection.
// `profile` comes from training runs of `original`.
PipelineResult pipeline(const Program& original, const ExecutionProfile& profile, const ObfuscationConfig& c);

struct AttackOutcome {
  FalseRateReport out_of_box, repartitioned, soundish, unsound;
  SplitPairReport split_out_of_box, split_repartitioned;
  int predicates = 0, resolved_soundish = 0, resolved_unsound = 0;
  double soundish_fraction() const { return predicates ? static_cast<double>(resolved_soundish) / predicates : 0.0; }
  double unsound_fraction() const { return predicates ? static_cast<double>(resolved_unsound) / predicates : 0.0; }
};
AttackOutcome attack(const PipelineResult& r, const AttackerOptions& opt = {});

struct RunReport {
  std::string label;
  ObfuscationConfig config;
  std::uint64_t benchmark_seed = 0;
  int predicates = 0, cycles = 0, applied_sets = 0;
  std::size_t factored_instructions = 0;
  AttackOutcome attack;
  VariabilityReport variability;
  OverheadReport overhead;            // whole pipeline against the original
  OverheadReport factoring_overhead;  // factoring alone
  ApplicabilityBreakdown applicability;
  ReachabilityHistogram reach_before, reach_after;
  int mismatches = 0;  // measurement inputs whose outputs changed
};

RunReport run_once(const Benchmark& bm, std::uint64_t benchmark_seed, const ObfuscationConfig& c,
                   const std::string& label = "");
nlohmann::json to_json(const RunReport& r);

enum class Suite { POTENCY, RESILIENCE, SENSITIVITY };
const char* suite_name(Suite s);

struct ExperimentSpec {
  Suite suite = Suite::POTENCY;
  std::string parameter;            // sensitivity only
  std::vector<std::string> values;  // sensitivity only
  std::vector<BenchmarkSpec> benchmarks = {standard_benchmark(1)};
  ObfuscationConfig base;
  int threads = 0;  // 0: hardware concurrency
};

// Experiment keys (suite, parameter, values, benchmark_seeds, threads) plus
// any ObfuscationConfig key.
ExperimentSpec parse_experiment(std::string_view text);

struct ExperimentBundle {
  ExperimentSpec spec;
  std::vector<RunReport> runs;  // benchmark-major, then value order
};

// Sensitivity runs vary one parameter and leave the rest at `base`.
ExperimentBundle run_experiment(const ExperimentSpec& spec);
nlohmann::json to_json(const ExperimentBundle& b);
std::string bundle_csv(const ExperimentBundle& b);

}  // namespace fog
