#include <benchmark/benchmark.h>

#include "fog/harness.hpp"
#include "fog/layout.hpp"

using namespace fog;

namespace {

struct Setup {
  Benchmark bm;
  ExecutionProfile prof;
  PipelineResult obf;
  Setup() : bm(generate_benchmark(standard_benchmark(1))) {
    for (const auto& in : bm.training) prof.merge(run(bm.program, in).profile);
    obf = pipeline(bm.program, prof, ObfuscationConfig{});
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

void BM_Generate(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(generate_benchmark(standard_benchmark(1)));
}
BENCHMARK(BM_Generate)->Unit(benchmark::kMillisecond);

void BM_Interpret(benchmark::State& st) {
  const auto& s = setup();
  RunOptions opt;
  opt.profile = false;
  std::uint64_t steps = 0;
  for (auto _ : st)
    for (const auto& in : s.bm.measurement) steps += run(s.bm.program, in, opt).steps;
  st.counters["steps/s"] = benchmark::Counter(static_cast<double>(steps), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Interpret)->Unit(benchmark::kMillisecond);

void BM_Analyze(benchmark::State& st) {
  const auto& s = setup();
  AnalysisOptions opt;
  opt.assume_nonzero_bases = true;
  for (auto _ : st) benchmark::DoNotOptimize(analyze(s.bm.program, opt));
}
BENCHMARK(BM_Analyze)->Unit(benchmark::kMillisecond);

void BM_Liveness(benchmark::State& st) {
  const auto& s = setup();
  for (auto _ : st) benchmark::DoNotOptimize(liveness(s.bm.program));
}
BENCHMARK(BM_Liveness)->Unit(benchmark::kMillisecond);

void BM_Factoring(benchmark::State& st) {
  const auto& s = setup();
  auto counts = instruction_counts(s.bm.program, s.prof);
  for (auto _ : st) {
    st.PauseTiming();
    Program p = s.bm.program;
    Analyses a = analyze(p);
    st.ResumeTiming();
    FactoringOptions opt;
    benchmark::DoNotOptimize(run_factoring_phase(p, opt, a, counts, nullptr));
  }
}
BENCHMARK(BM_Factoring)->Unit(benchmark::kMillisecond);

void BM_Layout(benchmark::State& st) {
  const auto& s = setup();
  std::uint64_t seed = 0;
  for (auto _ : st) benchmark::DoNotOptimize(randomize_layout(s.bm.program, Granularity::BLOCK, ++seed));
}
BENCHMARK(BM_Layout)->Unit(benchmark::kMillisecond);

void BM_RecursiveDescent(benchmark::State& st) {
  const auto& s = setup();
  for (auto _ : st) benchmark::DoNotOptimize(recursive_descent(s.obf.program));
}
BENCHMARK(BM_RecursiveDescent)->Unit(benchmark::kMillisecond);

void BM_Repartition(benchmark::State& st) {
  const auto& s = setup();
  const auto v0 = recursive_descent(s.obf.program);
  for (auto _ : st) {
    auto v = v0;
    repartition(s.obf.program, v);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_Repartition)->Unit(benchmark::kMillisecond);

void BM_ResolveUnsound(benchmark::State& st) {
  const auto& s = setup();
  auto v0 = recursive_descent(s.obf.program);
  repartition(s.obf.program, v0);
  for (auto _ : st) {
    auto v = v0;
    benchmark::DoNotOptimize(resolve_unsound(s.obf.program, s.obf.predicates, v));
  }
}
BENCHMARK(BM_ResolveUnsound)->Unit(benchmark::kMillisecond);

void BM_FalseRates(benchmark::State& st) {
  const auto& s = setup();
  const auto v = recursive_descent(s.obf.program);
  for (auto _ : st) benchmark::DoNotOptimize(false_rates(s.obf.program, v));
}
BENCHMARK(BM_FalseRates)->Unit(benchmark::kMillisecond);

void BM_Pipeline(benchmark::State& st) {
  const auto& s = setup();
  ObfuscationConfig c;
  for (auto _ : st) benchmark::DoNotOptimize(pipeline(s.bm.program, s.prof, c));
}
BENCHMARK(BM_Pipeline)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
