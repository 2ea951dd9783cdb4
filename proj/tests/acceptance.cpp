// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "fog/harness.hpp"
#include "fog/interp.hpp"
#include "oracle.hpp"

using namespace fog;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::vector<RunReport> kept;  // every report, for the coherence check

const Benchmark& standard() {
  static const Benchmark bm = generate_benchmark(standard_benchmark(1));
  return bm;
}

// Runs every config on the standard benchmark and keeps the reports for the coherence check.
std::vector<RunReport> runs(const std::vector<ObfuscationConfig>& cfgs) {
  std::vector<std::future<RunReport>> fs;
  for (const auto& c : cfgs) fs.push_back(std::async(std::launch::async, [&c] { return run_once(standard(), 1, c); }));
  std::vector<RunReport> out;
  for (auto& f : fs) out.push_back(f.get());
  return out;
}

void keep(const std::vector<RunReport>& rs) {
  kept.insert(kept.end(), rs.begin(), rs.end());
}

ObfuscationConfig with(std::initializer_list<std::pair<const char*, const char*>> kv) {
  ObfuscationConfig c;
  for (auto [k, v] : kv) set_field(c, k, v);
  return c;
}

Verdict semantic_preservation() {
  auto t0 = std::chrono::steady_clock::now();
  int programs = 0, inputs = 0, failed = 0;
  for (std::uint64_t s = 1; s <= 200; ++s) {
    // every 20th program is a full-size one
    auto bm = generate_benchmark(s % 20 == 0 ? standard_benchmark(s / 20) : small_benchmark(s));
    ExecutionProfile prof;
    for (const auto& in : bm.training) prof.merge(run(bm.program, in).profile);
    ObfuscationConfig c;
    c.main_seed ^= s;
    auto r = pipeline(bm.program, prof, c);
    ++programs;
    bool ok = true;
    for (std::size_t i = 0; i < 10 && i < bm.measurement.size(); ++i) {
      auto a = run(bm.program, bm.measurement[i]), b = run(r.program, bm.measurement[i]);
      ++inputs;
      ok &= b.ok() && a.status == b.status && a.outputs == b.outputs;
    }
    failed += !ok;
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {failed == 0 && inputs == 2000 && secs < 300,
          fmt::format("{}/{} programs equivalent on {} inputs, {:.1f}s", programs - failed, programs, inputs, secs)};
}

Verdict unprotected_baseline() {
  const Program& p = standard().program;
  auto v = recursive_descent(p);
  auto oob = false_rates(p, v);
  repartition(p, v);
  auto rep = false_rates(p, v);
  std::set<ViewEdge> known;
  for (const auto& [e, t] : truth_edges(p)) known.insert(e);
  int outside = 0;
  for (const auto& e : v.db) outside += !known.count(e);
  kept.push_back({});
  kept.back().attack.out_of_box = oob;
  kept.back().attack.repartitioned = rep;
  int fp = oob.db.fp.count[kTotal] + oob.gui.fp.count[kTotal] + rep.db.fp.count[kTotal] + rep.gui.fp.count[kTotal];
  return {fp == 0 && outside == 0 && oob.db.fp.rate(kTotal) == 0 && oob.gui.fp.rate(kTotal) == 0,
          fmt::format("FP {} (DB FPR {:.1f}%, GUI FPR {:.1f}%), {} db edges outside the real CFG, DB FNR {:.1f}%", fp,
                      100 * oob.db.fp.rate(kTotal), 100 * oob.gui.fp.rate(kTotal), outside,
                      100 * oob.db.fn.rate(kTotal))};
}

Verdict coupling_trend() {
  auto rs = runs({with({{"enabled_dispatchers", "COND_JUMP"}, {"cycle_probability", "0"}}),
                  with({{"enabled_dispatchers", "COND_JUMP"}, {"cycle_probability", "100"}}),
                  with({{"enabled_dispatchers", "COND_JUMP"}, {"cycle_probability", "100"}, {"cycle_size", "1"}})});
  keep(rs);
  double free = rs[0].attack.soundish_fraction(), full = rs[1].attack.soundish_fraction();
  int single = rs[2].attack.resolved_soundish;
  return {free >= 0.90 && full <= 0.02 && single == 0 && rs[2].predicates > 0,
          fmt::format("soundish resolved {:.1f}% at 0% coupling, {:.1f}% at 100%, {} with cycle size 1 ({} predicates)",
                      100 * free, 100 * full, single, rs[2].predicates)};
}

Verdict unsound_ordering(const RunReport& d) {
  double u = d.attack.unsound_fraction(), s = d.attack.soundish_fraction();
  return {u >= 0.10 && u <= 0.40 && u > s,
          fmt::format("unsound {:.1f}% ({}/{}), soundish {:.1f}%", 100 * u, d.attack.resolved_unsound, d.predicates, 100 * s)};
}

Verdict split_pairs_check(const RunReport& d) {
  auto low = runs({with({{"factoring_probability", "1"}, {"predicate_insertion_probability", "0"}})});
  keep(low);
  double w = d.attack.split_repartitioned.wrong_fraction(), wl = low[0].attack.split_repartitioned.wrong_fraction();
  return {w >= 0.70 && wl >= 0.40 && low[0].attack.split_repartitioned.total > 0,
          fmt::format("wrong {:.1f}% of {} pairs at defaults, {:.1f}% of {} at 1% factoring", 100 * w,
                      d.attack.split_repartitioned.total, 100 * wl, low[0].attack.split_repartitioned.total)};
}

Verdict variability(const RunReport& d) {
  const auto& v = d.variability;
  double f = v.variable_fraction();
  return {v.multi_covered > 0 && v.multi_covered_invariant == 0 && f >= 0.35 && f <= 0.90,
          fmt::format("{} sets with >=2 covered contexts, {} not VARIABLE; VARIABLE {:.1f}% of {} covered dispatchers",
                      v.multi_covered, v.multi_covered_invariant, 100 * f, v.variable + v.invariant)};
}

Verdict fallthrough_preference() {
  auto rs = runs({with({{"fake_fallthrough_probability", "0"}, {"branch_flipping", "false"}}),
                  with({{"fake_fallthrough_probability", "100"}, {"branch_flipping", "false"}})});
  keep(rs);
  double a = rs[0].attack.out_of_box.gui.fp.rate(kTotal), b = rs[1].attack.out_of_box.gui.fp.rate(kTotal);
  return {b > a, fmt::format("GUI FPR {:.1f}% -> {:.1f}%", 100 * a, 100 * b)};
}

Verdict seed_stability() {
  std::vector<ObfuscationConfig> cfgs;
  for (int i = 1; i <= 10; ++i) cfgs.push_back(with({{"main_seed", std::to_string(i).c_str()}}));
  auto rs = runs(cfgs);
  keep(rs);
  double worst = 0;
  std::string which;
  using Get = std::function<const FalseRateReport&(const AttackOutcome&)>;
  std::vector<std::pair<const char*, Get>> views = {
      {"out_of_box", [](const AttackOutcome& a) -> const FalseRateReport& { return a.out_of_box; }},
      {"repartitioned", [](const AttackOutcome& a) -> const FalseRateReport& { return a.repartitioned; }},
      {"soundish", [](const AttackOutcome& a) -> const FalseRateReport& { return a.soundish; }},
      {"unsound", [](const AttackOutcome& a) -> const FalseRateReport& { return a.unsound; }}};
  for (const auto& [vname, get] : views)
    for (int k = 0; k < 4; ++k) {
      std::vector<double> xs;
      for (const auto& r : rs) {
        const auto& f = get(r.attack);
        const ViewRates& vr = k < 2 ? f.db : f.gui;
        xs.push_back(100 * (k % 2 == 0 ? vr.fp.rate(kTotal) : vr.fn.rate(kTotal)));
      }
      double mean = 0, var = 0;
      for (double x : xs) mean += x / static_cast<double>(xs.size());
      for (double x : xs) var += (x - mean) * (x - mean) / static_cast<double>(xs.size());
      if (std::sqrt(var) > worst) {
        worst = std::sqrt(var);
        static const char* names[] = {"DB FPR", "DB FNR", "GUI FPR", "GUI FNR"};
        which = std::string(vname) + " " + names[k];
      }
    }
  return {worst <= 5.0, fmt::format("largest standard deviation {:.2f} points ({})", worst, which)};
}

Verdict analysis_oracles() {
  int programs = 0, points = 0, live_bad = 0, unsound = 0, imprecise = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Program p = testing::random_acyclic(seed);
    if (p.instruction_count() > 30) continue;
    ++programs;
    auto a = analyze(p);
    auto bf = testing::brute_force(p);
    for (const auto& [id, l] : bf.live_before) {
      ++points;
      live_bad += a.live.live_before(id) != l;
      const auto& mine = a.fwd.at(id);
      const auto& mop = bf.mop_before.at(id);
      if (mine.reachable != mop.reachable) {
        ++unsound;
        continue;
      }
      if (!mop.reachable) continue;
      for (int r = 0; r < kNumRegs; ++r) {
        if (mine.is_const(r) && !(mop.is_const(r) && mop.value(r) == mine.value(r))) ++unsound;
        if (mine.nonzero(r) && !mop.nonzero(r)) ++unsound;
        if (mop.is_const(r) != mine.is_const(r) || mop.nonzero(r) != mine.nonzero(r)) ++imprecise;
      }
    }
  }

  // incremental results are compared with a full analysis after every applied set
  int sets = 0;
  std::string diverged;
  for (std::uint64_t s = 1; s <= 6 && diverged.empty(); ++s) {
    auto bm = generate_benchmark(s == 6 ? standard_benchmark(1) : small_benchmark(s));
    auto ins = insert_predicates(bm.program, 20, s, liveness(bm.program));
    Program p = ins.program;
    ExecutionProfile prof;
    for (const auto& in : bm.training) prof.merge(run(p, in).profile);
    Analyses an = analyze(p);
    FactoringOptions opt;
    opt.seed = s;
    opt.check_incremental = true;
    try {
      sets += static_cast<int>(run_factoring_phase(p, opt, an, instruction_counts(p, prof), &ins.predicates).applied.size());
    } catch (const AnalysisError& e) {
      diverged = e.what();
    }
  }
  return {live_bad == 0 && unsound == 0 && diverged.empty() && sets > 0 && points > 1000,
          fmt::format("{} programs, {} points: {} liveness differences, {} unsound forward facts "
                      "({} facts the path oracle knows but the fixed point cannot); "
                      "incremental == full after {} sets{}",
                      programs, points, live_bad, unsound, imprecise, sets, diverged.empty() ? "" : ": " + diverged)};
}

Verdict category_coherence() {
  int n = 0, bad = 0;
  for (const auto& r : kept)
    for (const FalseRateReport* f : {&r.attack.out_of_box, &r.attack.repartitioned, &r.attack.soundish, &r.attack.unsound}) {
      ++n;
      bad += !categories_coherent(*f);
    }
  return {bad == 0 && n > 0, fmt::format("{} reports, {} incoherent", n, bad)};
}

Verdict hotness() {
  auto rs = runs({with({{"hotness_skip_permille", "0"}}), with({{"hotness_skip_permille", "500"}}),
                  with({{"hotness_skip_permille", "1000"}})});
  keep(rs);
  bool ok = true;
  std::string d;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& o = rs[i].factoring_overhead;
    ok &= rs[i].applied_sets > 0 && o.static_ratio() > 1.0;
    if (i > 0) ok &= o.dynamic_ratio() <= rs[i - 1].factoring_overhead.dynamic_ratio();
    d += fmt::format("{}{}: dynamic {:.3f} static {:.3f}", i ? ", " : "", rs[i].config.hotness_skip_permille,
                     o.dynamic_ratio(), o.static_ratio());
  }
  return {ok, d};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int n, const char* name, const Verdict& v) {
    std::printf("criterion %2d %-28s %s  %s\n", n, name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  };
  auto timed = [&](int n, const char* name, const std::function<Verdict()>& f) {
    try {
      report(n, name, f());
    } catch (const std::exception& e) {
      report(n, name, {false, std::string("threw: ") + e.what()});
    }
  };

  timed(1, "semantic preservation", semantic_preservation);
  timed(2, "unprotected baseline", unprotected_baseline);
  timed(3, "coupling resilience", coupling_trend);
  auto defaults = runs({ObfuscationConfig{}});
  keep(defaults);
  const RunReport& d = defaults[0];
  timed(4, "unsound vs soundish", [&] { return unsound_ordering(d); });
  timed(5, "split pairs", [&] { return split_pairs_check(d); });
  timed(6, "dispatcher variability", [&] { return variability(d); });
  timed(7, "fall-through preference", fallthrough_preference);
  timed(8, "seed stability", seed_stability);
  timed(9, "analysis oracles", analysis_oracles);
  timed(11, "hotness knob", hotness);
  timed(10, "category coherence", category_coherence);
  std::printf("%d of 11 criteria failed\n", failed);
  return failed ? 1 : 0;
}
