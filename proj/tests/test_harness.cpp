#include <doctest.h>

#include "fog/harness.hpp"

using namespace fog;

namespace {

struct Fixture {
  Benchmark bm;
  ExecutionProfile prof;
  explicit Fixture(BenchmarkSpec spec) : bm(generate_benchmark(spec)) {
    for (const auto& in : bm.training) prof.merge(run(bm.program, in).profile);
  }
};

const Fixture& standard() {
  static const Fixture f(standard_benchmark(1));
  return f;
}

}  // namespace

TEST_CASE("config defaults") {
  ObfuscationConfig c;
  CHECK(c.main_seed == 0xDEADDEADDEADDEADull);
  CHECK(c.layout_seed == 1);
  CHECK(c.predicate_insertion_probability == 20);
  CHECK(c.cycle_size == 4);
  CHECK(c.cycle_probability == 100);
  CHECK(c.fake_fallthrough_probability == 50);
  CHECK(c.fake_table_entry_probability == 30);
  CHECK(c.factoring_probability == 100);
  CHECK(c.enabled_dispatchers.size() == 4);
  CHECK(c.hotness_skip_permille == 0);
  CHECK(c.branch_flipping);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config text roundtrips") {
  auto c = parse_config(R"(
# sweep point
main_seed = 42
cycle_probability=25
enabled_dispatchers = COND_JUMP,STATIC_SWITCH
branch_flipping = false
priority_weights.bonus.DYNAMIC_SWITCH = 5
)");
  CHECK(c.main_seed == 42);
  CHECK(c.cycle_probability == 25);
  CHECK(c.enabled_dispatchers == std::set{DispatcherKind::COND_JUMP, DispatcherKind::STATIC_SWITCH});
  CHECK_FALSE(c.branch_flipping);
  CHECK(c.priority_weights.bonus[3] == 5);
  auto text = serialize_config(c);
  CHECK(serialize_config(parse_config(text)) == text);
  CHECK(to_json(parse_config(text)) == to_json(c));
  for (const auto& k : config_keys()) CHECK(text.find(k + " = ") != std::string::npos);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("no_such_key = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("cycle_probability = 101"), ConfigError);
  CHECK_THROWS_AS(parse_config("cycle_size = 0"), ConfigError);
  CHECK_THROWS_AS(parse_config("hotness_skip_permille = 1001"), ConfigError);
  CHECK_THROWS_AS(parse_config("main_seed = banana"), ConfigError);
  CHECK_THROWS_AS(parse_config("enabled_dispatchers = COND_JUMP,WARP"), ConfigError);
  CHECK_THROWS_AS(parse_config("just words"), ConfigError);
  CHECK_NOTHROW(parse_config("enabled_dispatchers = none"));
}

TEST_CASE("experiment files") {
  auto s = parse_experiment("suite = sensitivity\nparameter = cycle_size\nvalues = 1,2,4\nbenchmark_seeds = 3,4\n"
                            "fake_fallthrough_probability = 10\n");
  CHECK(s.suite == Suite::SENSITIVITY);
  CHECK(s.parameter == "cycle_size");
  CHECK(s.values == std::vector<std::string>{"1", "2", "4"});
  CHECK(s.benchmarks.size() == 2);
  CHECK(s.benchmarks[1].seed == 4);
  CHECK(s.base.fake_fallthrough_probability == 10);
  CHECK_THROWS_AS(parse_experiment("suite = potency\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment("suite = robustness\n"), ConfigError);
}

TEST_CASE("pipeline is deterministic") {
  const auto& f = standard();
  ObfuscationConfig c;
  auto a = pipeline(f.bm.program, f.prof, c);
  auto b = pipeline(f.bm.program, f.prof, c);
  CHECK(!a.predicates.empty());
  CHECK(!a.cycles.empty());
  CHECK(!a.factoring.applied.empty());
  CHECK(serialize_program(a.program) == serialize_program(b.program));
  CHECK(ground_truth_json(a).dump() == ground_truth_json(b).dump());
}

TEST_CASE("layout seed only moves blocks") {
  const auto& f = standard();
  ObfuscationConfig c;
  auto a = pipeline(f.bm.program, f.prof, c);
  c.layout_seed = 77;
  auto b = pipeline(f.bm.program, f.prof, c);
  CHECK(serialize_program(a.program) != serialize_program(b.program));
  REQUIRE(a.predicates.size() == b.predicates.size());
  for (std::size_t i = 0; i < a.predicates.size(); ++i) {
    CHECK(a.predicates[i].computation == b.predicates[i].computation);
    CHECK(a.predicates[i].family == b.predicates[i].family);
  }
  REQUIRE(a.factoring.applied.size() == b.factoring.applied.size());
  for (std::size_t i = 0; i < a.factoring.applied.size(); ++i) {
    const auto &x = a.factoring.applied[i], &y = b.factoring.applied[i];
    CHECK(x.dispatcher == y.dispatcher);
    REQUIRE(x.fragments.size() == y.fragments.size());
    for (std::size_t k = 0; k < x.fragments.size(); ++k) CHECK(x.fragments[k].insns == y.fragments[k].insns);
  }
}

TEST_CASE("everything off leaves the program alone up to layout") {
  const auto& f = standard();
  ObfuscationConfig c;
  c.predicate_insertion_probability = 0;
  c.factoring_probability = 0;
  c.branch_flipping = false;
  auto r = pipeline(f.bm.program, f.prof, c);
  CHECK(r.predicates.empty());
  CHECK(r.factoring.applied.empty());
  CHECK(r.program.fake.empty());
  // layout keeps fall-throughs alive with jumps and adds nothing else
  auto ops = [](const Program& p) {
    std::map<Op, int> n;
    for (const auto& bb : p.blocks)
      for (const auto& in : bb.insns) ++n[in.op];
    return n;
  };
  auto before = ops(f.bm.program), after = ops(r.program);
  CHECK(after[Op::JMP] >= before[Op::JMP]);
  before.erase(Op::JMP);
  after.erase(Op::JMP);
  CHECK(before == after);
  for (const auto& in : f.bm.measurement) {
    auto x = run(f.bm.program, in), y = run(r.program, in);
    CHECK(x.outputs == y.outputs);
  }
}

TEST_CASE("serialized program plus ground truth reproduces the attack") {
  const auto& f = standard();
  auto r = pipeline(f.bm.program, f.prof, ObfuscationConfig{});
  auto text = serialize_program(r.program);
  auto g = parse_ground_truth(nlohmann::json::parse(ground_truth_json(r).dump()));
  PipelineResult q;
  q.program = parse_program(text);
  attach(q.program, g);
  q.predicates = g.predicates;
  q.factoring = g.factoring;
  CHECK(structurally_equal(q.program, r.program));
  CHECK(serialize_program(q.program) == text);
  auto a = attack(r), b = attack(q);
  CHECK(a.resolved_soundish == b.resolved_soundish);
  CHECK(a.resolved_unsound == b.resolved_unsound);
  CHECK(to_json(a.out_of_box) == to_json(b.out_of_box));
  CHECK(to_json(a.unsound) == to_json(b.unsound));
  CHECK(to_json(a.split_repartitioned) == to_json(b.split_repartitioned));
  CHECK_THROWS_AS(parse_ground_truth(nlohmann::json::object()), ConfigError);
}

TEST_CASE("sweep cardinality") {
  ExperimentSpec s;
  s.suite = Suite::SENSITIVITY;
  s.parameter = "cycle_probability";
  s.values = {"0", "25", "50", "75", "100"};
  s.benchmarks = {small_benchmark(1)};
  s.threads = 2;
  auto b = run_experiment(s);
  REQUIRE(b.runs.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(b.runs[i].config.cycle_probability == std::stod(s.values[i]));
    CHECK(b.runs[i].mismatches == 0);
  }
  // one header plus four attack stages, DB and GUI, four metrics per run
  auto csv = bundle_csv(b);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 5 * 32);
  CHECK(to_json(b).dump() == to_json(run_experiment(s)).dump());

  s.parameter = "no_such_parameter";
  CHECK_THROWS_AS(run_experiment(s), ConfigError);
}
