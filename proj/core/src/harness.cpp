#include "fog/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <sstream>
#include <thread>

#include "fog/interp.hpp"
#include "fog/layout.hpp"

namespace fog {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    auto x = std::stoull(v, &used, 0);
    if (used == v.size() && v.find('-') == std::string::npos) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

int to_int(const std::string& key, const std::string& v) {
  int x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  std::string l;
  for (char ch : v) l += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (l == "1" || l == "true" || l == "on" || l == "yes") return true;
  if (l == "0" || l == "false" || l == "off" || l == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(v);
  while (std::getline(is, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::set<DispatcherKind> to_dispatchers(const std::string& key, const std::string& v) {
  std::set<DispatcherKind> out;
  if (v == "all") {
    for (int k = 0; k < kNumDispatcherKinds; ++k) out.insert(static_cast<DispatcherKind>(k));
    return out;
  }
  if (v == "none" || v.empty()) return out;
  for (const auto& s : split_list(v)) {
    auto k = parse_dispatcher(s);
    if (!k) throw ConfigError(key + ": unknown dispatcher '" + s + "'");
    out.insert(*k);
  }
  return out;
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

const char* kWeightFields[] = {"size", "archives", "objects", "functions", "covered_archives"};

double* weight_field(PriorityWeights& w, const std::string& f) {
  if (f == "size") return &w.size;
  if (f == "archives") return &w.archives;
  if (f == "objects") return &w.objects;
  if (f == "functions") return &w.functions;
  if (f == "covered_archives") return &w.covered_archives;
  const std::string bonus = "bonus.";
  if (f.rfind(bonus, 0) == 0) {
    auto k = parse_dispatcher(f.substr(bonus.size()));
    if (k) return &w.bonus[static_cast<int>(*k)];
  }
  return nullptr;
}

}  // namespace

void ObfuscationConfig::validate() const {
  auto pct = [](const char* name, double v) {
    if (!(v >= 0 && v <= 100)) throw ConfigError(std::string(name) + " must be in [0,100]");
  };
  pct("predicate_insertion_probability", predicate_insertion_probability);
  pct("cycle_probability", cycle_probability);
  pct("fake_fallthrough_probability", fake_fallthrough_probability);
  pct("fake_table_entry_probability", fake_table_entry_probability);
  pct("factoring_probability", factoring_probability);
  if (cycle_size < 1) throw ConfigError("cycle_size must be at least 1");
  if (hotness_skip_permille < 0 || hotness_skip_permille > 1000)
    throw ConfigError("hotness_skip_permille must be in [0,1000]");
  if (min_fragment_size < 1) throw ConfigError("min_fragment_size must be at least 1");
}

void set_field(ObfuscationConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "main_seed") c.main_seed = to_u64(key, v);
  else if (key == "layout_seed") c.layout_seed = to_u64(key, v);
  else if (key == "predicate_insertion_probability") c.predicate_insertion_probability = to_double(key, v);
  else if (key == "cycle_size") c.cycle_size = to_int(key, v);
  else if (key == "cycle_probability") c.cycle_probability = to_double(key, v);
  else if (key == "fake_fallthrough_probability") c.fake_fallthrough_probability = to_double(key, v);
  else if (key == "fake_table_entry_probability") c.fake_table_entry_probability = to_double(key, v);
  else if (key == "factoring_probability") c.factoring_probability = to_double(key, v);
  else if (key == "enabled_dispatchers") c.enabled_dispatchers = to_dispatchers(key, v);
  else if (key == "hotness_skip_permille") c.hotness_skip_permille = to_int(key, v);
  else if (key == "branch_flipping") c.branch_flipping = to_bool(key, v);
  else if (key == "min_fragment_size") c.min_fragment_size = to_int(key, v);
  else if (key == "assume_nonzero_bases") c.assume_nonzero_bases = to_bool(key, v);
  else if (key.rfind("priority_weights.", 0) == 0) {
    double* f = weight_field(c.priority_weights, key.substr(17));
    if (!f) throw ConfigError("unknown key '" + key + "'");
    *f = to_double(key, v);
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> k = {"main_seed",
                                "layout_seed",
                                "predicate_insertion_probability",
                                "cycle_size",
                                "cycle_probability",
                                "fake_fallthrough_probability",
                                "fake_table_entry_probability",
                                "factoring_probability",
                                "enabled_dispatchers",
                                "hotness_skip_permille",
                                "branch_flipping",
                                "min_fragment_size",
                                "assume_nonzero_bases"};
  for (const char* f : kWeightFields) k.push_back(std::string("priority_weights.") + f);
  for (int d = 0; d < kNumDispatcherKinds; ++d)
    k.push_back(std::string("priority_weights.bonus.") + dispatcher_name(static_cast<DispatcherKind>(d)));
  return k;
}

namespace {

// Calls `fn(key, value, line)` for every non-blank line.
template <class F>
void each_line(std::string_view text, F fn) {
  std::istringstream is{std::string(text)};
  std::string line;
  for (int no = 1; std::getline(is, line); ++no) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected key=value");
    fn(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), no);
  }
}

}  // namespace

ObfuscationConfig parse_config(std::string_view text, ObfuscationConfig base) {
  each_line(text, [&](const std::string& k, const std::string& v, int no) {
    try {
      set_field(base, k, v);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(no) + ": " + e.what());
    }
  });
  base.validate();
  return base;
}

std::string serialize_config(const ObfuscationConfig& c) {
  std::ostringstream os;
  os << "main_seed = 0x" << std::hex << c.main_seed << std::dec << '\n'
     << "layout_seed = " << c.layout_seed << '\n'
     << "predicate_insertion_probability = " << fmt_double(c.predicate_insertion_probability) << '\n'
     << "cycle_size = " << c.cycle_size << '\n'
     << "cycle_probability = " << fmt_double(c.cycle_probability) << '\n'
     << "fake_fallthrough_probability = " << fmt_double(c.fake_fallthrough_probability) << '\n'
     << "fake_table_entry_probability = " << fmt_double(c.fake_table_entry_probability) << '\n'
     << "factoring_probability = " << fmt_double(c.factoring_probability) << '\n'
     << "enabled_dispatchers = ";
  bool first = true;
  for (auto k : c.enabled_dispatchers) {
    os << (first ? "" : ",") << dispatcher_name(k);
    first = false;
  }
  if (c.enabled_dispatchers.empty()) os << "none";
  os << '\n'
     << "hotness_skip_permille = " << c.hotness_skip_permille << '\n'
     << "branch_flipping = " << (c.branch_flipping ? "true" : "false") << '\n'
     << "min_fragment_size = " << c.min_fragment_size << '\n'
     << "assume_nonzero_bases = " << (c.assume_nonzero_bases ? "true" : "false") << '\n';
  PriorityWeights w = c.priority_weights;
  for (const char* f : kWeightFields) os << "priority_weights." << f << " = " << fmt_double(*weight_field(w, f)) << '\n';
  for (int d = 0; d < kNumDispatcherKinds; ++d)
    os << "priority_weights.bonus." << dispatcher_name(static_cast<DispatcherKind>(d)) << " = "
       << fmt_double(w.bonus[d]) << '\n';
  return os.str();
}

nlohmann::json to_json(const ObfuscationConfig& c) {
  nlohmann::json j;
  std::ostringstream seed;
  seed << "0x" << std::hex << c.main_seed;
  j["main_seed"] = seed.str();
  j["layout_seed"] = c.layout_seed;
  j["predicate_insertion_probability"] = c.predicate_insertion_probability;
  j["cycle_size"] = c.cycle_size;
  j["cycle_probability"] = c.cycle_probability;
  j["fake_fallthrough_probability"] = c.fake_fallthrough_probability;
  j["fake_table_entry_probability"] = c.fake_table_entry_probability;
  j["factoring_probability"] = c.factoring_probability;
  j["enabled_dispatchers"] = nlohmann::json::array();
  for (auto k : c.enabled_dispatchers) j["enabled_dispatchers"].push_back(dispatcher_name(k));
  j["hotness_skip_permille"] = c.hotness_skip_permille;
  j["branch_flipping"] = c.branch_flipping;
  j["min_fragment_size"] = c.min_fragment_size;
  j["assume_nonzero_bases"] = c.assume_nonzero_bases;
  PriorityWeights w = c.priority_weights;
  for (const char* f : kWeightFields) j["priority_weights"][f] = *weight_field(w, f);
  for (int d = 0; d < kNumDispatcherKinds; ++d)
    j["priority_weights"]["bonus"][dispatcher_name(static_cast<DispatcherKind>(d))] = w.bonus[d];
  return j;
}

PipelineResult pipeline(const Program& original, const ExecutionProfile& profile, const ObfuscationConfig& c) {
  c.validate();
  PipelineResult r;
  Program p = original;
  ExecutionProfile prof = profile;
  if (c.predicate_insertion_probability > 0) {
    auto ins = insert_predicates(std::move(p), c.predicate_insertion_probability, c.main_seed, liveness(original));
    p = std::move(ins.program);
    r.predicates = std::move(ins.predicates);
    r.skipped_predicates = static_cast<int>(ins.skipped.size());
    // the original code of a protected block moved to the continuation
    for (const auto& op : r.predicates) prof.block_counts[op.cont] = profile.count(op.block);
  }
  r.counts = instruction_counts(p, prof);
  r.before_factoring = p;

  if (!c.enabled_dispatchers.empty() && c.factoring_probability > 0) {
    AnalysisOptions aopt;
    aopt.assume_nonzero_bases = c.assume_nonzero_bases;
    Analyses a = analyze(p, aopt);
    FactoringOptions fo;
    fo.min_fragment_size = c.min_fragment_size;
    fo.max_fragment_size = std::max(fo.max_fragment_size, c.min_fragment_size);
    fo.enabled = c.enabled_dispatchers;
    fo.weights = c.priority_weights;
    fo.factoring_probability = c.factoring_probability;
    fo.fake_entry_probability = c.fake_table_entry_probability;
    fo.hotness_skip_permille = c.hotness_skip_permille;
    fo.seed = c.main_seed;
    r.factoring = run_factoring_phase(p, fo, a, r.counts, &r.predicates);
  }
  r.after_factoring = p;

  p = randomize_layout(std::move(p), Granularity::BLOCK, c.layout_seed);
  if (c.branch_flipping) p = flip_branches(std::move(p), c.main_seed);
  if (!r.predicates.empty()) {
    auto ft = choose_fake_targets(std::move(p), r.predicates, c.cycle_size, c.cycle_probability,
                                  c.fake_fallthrough_probability, c.main_seed);
    p = std::move(ft.program);
    r.cycles = std::move(ft.cycles);
    r.fallthrough_fallbacks = static_cast<int>(ft.fallthrough_fallbacks.size());
    r.short_group = ft.short_group;
  }
  r.program = std::move(p);
  return r;
}

namespace {

nlohmann::json key_json(const FakeKey& k) {
  return {{"src", k.src}, {"kind", edge_kind_name(k.kind)}, {"dst", k.dst}};
}

FakeKey key_from(const nlohmann::json& j) {
  FakeKey k;
  k.src = j.at("src").get<InsnId>();
  k.dst = j.at("dst").get<BlockId>();
  const auto name = j.at("kind").get<std::string>();
  for (int e = 0; e <= static_cast<int>(EdgeKind::INDIRECT_RESOLVED); ++e)
    if (name == edge_kind_name(static_cast<EdgeKind>(e))) {
      k.kind = static_cast<EdgeKind>(e);
      return k;
    }
  throw ConfigError("unknown edge kind '" + name + "'");
}

}  // namespace

nlohmann::json ground_truth_json(const PipelineResult& r) {
  nlohmann::json j;
  j["fake_edges"] = nlohmann::json::array();
  for (const auto& k : r.program.fake) j["fake_edges"].push_back(key_json(k));
  std::vector<InsnId> pinned(r.program.pinned.begin(), r.program.pinned.end());
  std::sort(pinned.begin(), pinned.end());
  j["pinned"] = pinned;
  j["predicates"] = nlohmann::json::array();
  for (const auto& op : r.predicates)
    j["predicates"].push_back({{"id", op.id},
                               {"block", op.block},
                               {"branch_block", op.branch_block},
                               {"cont", op.cont},
                               {"computation", op.computation},
                               {"branch", op.branch},
                               {"fake", key_json(op.fake)},
                               {"kind", predicate_kind_name(op.kind)},
                               {"family", family_name(op.family)},
                               {"scratch", op.scratch},
                               {"source", op.source},
                               {"cycle", op.cycle}});
  j["cycles"] = nlohmann::json::array();
  for (const auto& c : r.cycles) j["cycles"].push_back({{"id", c.id}, {"members", c.members}});
  j["factoring"] = nlohmann::json::array();
  for (const auto& as : r.factoring.applied) {
    nlohmann::json frags = nlohmann::json::array();
    for (const auto& f : as.fragments) frags.push_back(f.insns);
    nlohmann::json pairs = nlohmann::json::array();
    for (auto [a, b] : as.split_pairs) pairs.push_back({a, b});
    j["factoring"].push_back({{"id", as.id},
                              {"dispatcher", dispatcher_name(as.dispatcher)},
                              {"factored_block", as.factored_block},
                              {"dispatcher_block", as.dispatcher_block},
                              {"fragments", frags},
                              {"split_pairs", pairs},
                              {"tables", as.tables},
                              {"fake_entries", as.fake_entries}});
  }
  return j;
}

GroundTruth parse_ground_truth(const nlohmann::json& j) {
  GroundTruth g;
  try {
    for (const auto& k : j.at("fake_edges")) g.fake.insert(key_from(k));
    g.pinned = j.at("pinned").get<std::vector<InsnId>>();
    for (const auto& pj : j.at("predicates")) {
      OpaquePredicate op;
      op.id = pj.at("id").get<int>();
      op.block = pj.at("block").get<BlockId>();
      op.branch_block = pj.at("branch_block").get<BlockId>();
      op.cont = pj.at("cont").get<BlockId>();
      op.computation = pj.at("computation").get<std::vector<InsnId>>();
      op.branch = pj.at("branch").get<InsnId>();
      op.fake = key_from(pj.at("fake"));
      op.kind = pj.at("kind").get<std::string>() == "ALWAYS_TRUE" ? PredicateKind::ALWAYS_TRUE : PredicateKind::ALWAYS_FALSE;
      const auto fam = pj.at("family").get<std::string>();
      for (int f = 0; f < 4; ++f)
        if (fam == family_name(static_cast<Family>(f))) op.family = static_cast<Family>(f);
      op.scratch = pj.at("scratch").get<int>();
      op.source = pj.at("source").get<int>();
      op.cycle = pj.at("cycle").get<int>();
      g.predicates.push_back(std::move(op));
    }
    for (const auto& aj : j.at("factoring")) {
      AppliedSet as;
      as.id = aj.at("id").get<int>();
      as.factored_block = aj.at("factored_block").get<BlockId>();
      as.dispatcher_block = aj.at("dispatcher_block").get<BlockId>();
      if (auto d = parse_dispatcher(aj.at("dispatcher").get<std::string>())) as.dispatcher = *d;
      for (const auto& pr : aj.at("split_pairs"))
        as.split_pairs.emplace_back(pr.at(0).get<BlockId>(), pr.at(1).get<BlockId>());
      g.factoring.applied.push_back(std::move(as));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed ground truth: ") + e.what());
  }
  return g;
}

void attach(Program& p, const GroundTruth& g) {
  p.fake = g.fake;
  p.pinned.insert(g.pinned.begin(), g.pinned.end());
  build_cfg(p);
}

AttackOutcome attack(const PipelineResult& r, const AttackerOptions& opt) {
  AttackOutcome o;
  const Program& p = r.program;
  o.predicates = static_cast<int>(r.predicates.size());
  AttackerView v = recursive_descent(p, opt);
  o.out_of_box = false_rates(p, v);
  o.split_out_of_box = split_pairs(r.factoring, v);
  repartition(p, v, opt);
  o.repartitioned = false_rates(p, v);
  o.split_repartitioned = split_pairs(r.factoring, v);
  AttackerView u = v;
  o.resolved_soundish = resolve_soundish(p, r.predicates, v, opt).resolved;
  o.soundish = false_rates(p, v);
  o.resolved_unsound = resolve_unsound(p, r.predicates, u, opt).resolved;
  o.unsound = false_rates(p, u);
  return o;
}

RunReport run_once(const Benchmark& bm, std::uint64_t benchmark_seed, const ObfuscationConfig& c,
                   const std::string& label) {
  RunReport rr;
  rr.label = label;
  rr.config = c;
  rr.benchmark_seed = benchmark_seed;
  ExecutionProfile prof;
  for (const auto& in : bm.training) prof.merge(run(bm.program, in).profile);
  auto res = pipeline(bm.program, prof, c);
  rr.predicates = static_cast<int>(res.predicates.size());
  rr.cycles = static_cast<int>(res.cycles.size());
  rr.applied_sets = static_cast<int>(res.factoring.applied.size());
  rr.factored_instructions = res.factoring.factored_instructions;
  rr.attack = attack(res);
  rr.variability = dispatcher_variability_report(res.program, res.factoring, bm.training);
  rr.overhead = overhead_counts(bm.program, res.program, bm.measurement);
  rr.factoring_overhead = overhead_counts(res.before_factoring, res.after_factoring, bm.measurement);
  rr.applicability = applicability_breakdown(res.factoring, bm.program, res.counts);
  rr.reach_before = reachability_histogram(bm.program);
  rr.reach_after = reachability_histogram(res.program);
  for (const auto& in : bm.measurement) {
    auto a = run(bm.program, in), b = run(res.program, in);
    if (!b.ok() || a.status != b.status || a.outputs != b.outputs) ++rr.mismatches;
  }
  return rr;
}

nlohmann::json to_json(const RunReport& r) {
  const auto& a = r.attack;
  return {{"label", r.label},
          {"benchmark_seed", r.benchmark_seed},
          {"config", to_json(r.config)},
          {"predicates", r.predicates},
          {"cycles", r.cycles},
          {"applied_sets", r.applied_sets},
          {"factored_instructions", r.factored_instructions},
          {"mismatches", r.mismatches},
          {"false_rates",
           {{"out_of_box", to_json(a.out_of_box)},
            {"repartitioned", to_json(a.repartitioned)},
            {"soundish", to_json(a.soundish)},
            {"unsound", to_json(a.unsound)}}},
          {"resolved", {{"soundish", a.resolved_soundish}, {"unsound", a.resolved_unsound}}},
          {"split_pairs", {{"out_of_box", to_json(a.split_out_of_box)}, {"repartitioned", to_json(a.split_repartitioned)}}},
          {"variability", to_json(r.variability)},
          {"overhead", to_json(r.overhead)},
          {"factoring_overhead", to_json(r.factoring_overhead)},
          {"applicability", to_json(r.applicability)},
          {"reachability", {{"before", to_json(r.reach_before)}, {"after", to_json(r.reach_after)}}}};
}

const char* suite_name(Suite s) {
  switch (s) {
    case Suite::POTENCY: return "potency";
    case Suite::RESILIENCE: return "resilience";
    case Suite::SENSITIVITY: return "sensitivity";
  }
  return "?";
}

ExperimentSpec parse_experiment(std::string_view text) {
  ExperimentSpec spec;
  std::vector<std::uint64_t> seeds;
  each_line(text, [&](const std::string& k, const std::string& v, int no) {
    try {
      if (k == "suite") {
        if (v == "potency") spec.suite = Suite::POTENCY;
        else if (v == "resilience") spec.suite = Suite::RESILIENCE;
        else if (v == "sensitivity") spec.suite = Suite::SENSITIVITY;
        else throw ConfigError("unknown suite '" + v + "'");
      } else if (k == "parameter") {
        spec.parameter = v;
      } else if (k == "values") {
        spec.values = split_list(v);
      } else if (k == "benchmark_seeds") {
        for (const auto& s : split_list(v)) seeds.push_back(to_u64(k, s));
      } else if (k == "threads") {
        spec.threads = to_int(k, v);
      } else {
        set_field(spec.base, k, v);
      }
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(no) + ": " + e.what());
    }
  });
  if (!seeds.empty()) {
    spec.benchmarks.clear();
    for (auto s : seeds) spec.benchmarks.push_back(standard_benchmark(s));
  }
  spec.base.validate();
  return spec;
}

ExperimentBundle run_experiment(const ExperimentSpec& spec) {
  ExperimentBundle b;
  b.spec = spec;
  struct Job {
    std::size_t bench;
    ObfuscationConfig cfg;
    std::string label;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < spec.benchmarks.size(); ++i) {
    if (spec.suite != Suite::SENSITIVITY) {
      jobs.push_back({i, spec.base, suite_name(spec.suite)});
      continue;
    }
    if (spec.parameter.empty()) throw ConfigError("sensitivity needs a parameter");
    for (const auto& v : spec.values) {
      ObfuscationConfig c = spec.base;
      set_field(c, spec.parameter, v);
      c.validate();
      jobs.push_back({i, c, spec.parameter + "=" + v});
    }
  }

  std::vector<Benchmark> benches;
  for (const auto& s : spec.benchmarks) benches.push_back(generate_benchmark(s));
  b.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs.size());
  auto worker = [&] {
    for (std::size_t j; (j = next++) < jobs.size();) {
      try {
        b.runs[j] = run_once(benches[jobs[j].bench], spec.benchmarks[jobs[j].bench].seed, jobs[j].cfg, jobs[j].label);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  unsigned n = spec.threads > 0 ? static_cast<unsigned>(spec.threads) : std::max(1u, std::thread::hardware_concurrency());
  n = std::min<unsigned>(n, static_cast<unsigned>(std::max<std::size_t>(jobs.size(), 1)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return b;
}

nlohmann::json to_json(const ExperimentBundle& b) {
  nlohmann::json j;
  j["suite"] = suite_name(b.spec.suite);
  if (b.spec.suite == Suite::SENSITIVITY) {
    j["parameter"] = b.spec.parameter;
    j["values"] = b.spec.values;
  }
  j["base_config"] = to_json(b.spec.base);
  j["runs"] = nlohmann::json::array();
  for (const auto& r : b.runs) j["runs"].push_back(to_json(r));
  return j;
}

std::string bundle_csv(const ExperimentBundle& b) {
  std::vector<std::pair<std::string, FalseRateReport>> rows;
  for (const auto& r : b.runs) {
    std::string l = r.label + "/bench" + std::to_string(r.benchmark_seed);
    rows.emplace_back(l + "/out_of_box", r.attack.out_of_box);
    rows.emplace_back(l + "/repartitioned", r.attack.repartitioned);
    rows.emplace_back(l + "/soundish", r.attack.soundish);
    rows.emplace_back(l + "/unsound", r.attack.unsound);
  }
  return false_rates_csv(rows);
}

}  // namespace fog
