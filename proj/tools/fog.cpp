// fog: generate benchmarks, obfuscate them, attack the result, run experiment suites.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fog/harness.hpp"

namespace fs = std::filesystem;
using namespace fog;

namespace {

struct EquivalenceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// One input per line, whitespace-separated words.
std::vector<std::vector<Word>> read_inputs(const std::string& path) {
  std::vector<std::vector<Word>> ins;
  std::istringstream all(slurp(path));
  std::string line;
  while (std::getline(all, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::vector<Word> in;
    long long w;
    while (ls >> w) in.push_back(static_cast<Word>(w));
    ins.push_back(std::move(in));
  }
  return ins;
}

std::string write_inputs(const std::vector<std::vector<Word>>& ins) {
  std::string s;
  for (const auto& in : ins) {
    for (std::size_t i = 0; i < in.size(); ++i) s += (i ? " " : "") + std::to_string(in[i]);
    s += '\n';
  }
  return s;
}

// Shared by every subcommand that builds a config.
struct ConfigOpts {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;

  void add(CLI::App* app) {
    app->add_option("--config", file, "key=value config file");
    app->add_option("--set", sets, "config override key=value (repeatable)");
    for (const auto& k : config_keys()) app->add_option("--" + k, flags[k], "override " + k);
  }

  ObfuscationConfig build() const {
    ObfuscationConfig c = file.empty() ? ObfuscationConfig{} : parse_config(slurp(file));
    for (const auto& [k, v] : flags)
      if (!v.empty()) set_field(c, k, v);
    for (const auto& kv : sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_field(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    c.validate();
    return c;
  }
};

Benchmark make_bench(std::uint64_t seed, bool small) {
  return generate_benchmark(small ? small_benchmark(seed) : standard_benchmark(seed));
}

struct Source {
  std::string program, training, measurement;
  std::uint64_t seed = 1;
  bool small = false;

  void add(CLI::App* app) {
    app->add_option("--program", program, "program text; generated from --seed when absent");
    app->add_option("--training", training, "training inputs, one per line");
    app->add_option("--measurement", measurement, "measurement inputs, one per line");
    app->add_option("--seed", seed, "benchmark generator seed");
    app->add_flag("--small", small, "use the small benchmark shape");
  }

  Benchmark load() const {
    if (program.empty()) return make_bench(seed, small);
    Benchmark bm;
    bm.program = parse_program(slurp(program));
    if (!training.empty()) bm.training = read_inputs(training);
    if (!measurement.empty()) bm.measurement = read_inputs(measurement);
    return bm;
  }
};

void emit(const std::string& out_dir, const std::string& name, const std::string& text) {
  if (out_dir.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
  } else {
    spit(fs::path(out_dir) / name, text);
  }
}

nlohmann::json outcome_json(const AttackOutcome& o) {
  return {{"predicates", o.predicates},
          {"resolved_soundish", o.resolved_soundish},
          {"resolved_unsound", o.resolved_unsound},
          {"out_of_box", to_json(o.out_of_box)},
          {"repartitioned", to_json(o.repartitioned)},
          {"soundish", to_json(o.soundish)},
          {"unsound", to_json(o.unsound)},
          {"split_out_of_box", to_json(o.split_out_of_box)},
          {"split_repartitioned", to_json(o.split_repartitioned)}};
}

std::string outcome_csv(const std::string& label, const AttackOutcome& o) {
  return false_rates_csv({{label + "/out_of_box", o.out_of_box},
                          {label + "/repartitioned", o.repartitioned},
                          {label + "/soundish", o.soundish},
                          {label + "/unsound", o.unsound}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fog: control-flow obfuscation and disassembler attack model"};
  app.require_subcommand(1);
  std::string out_dir, emit_fmt = "json";
  auto emit_opt = [&](CLI::App* s) {
    s->add_option("--out-dir", out_dir, "directory for outputs; stdout when absent");
    s->add_option("--emit", emit_fmt, "report format")->check(CLI::IsMember({"json", "csv"}));
  };

  // gen-bench
  auto* gen = app.add_subcommand("gen-bench", "write a generated benchmark and its inputs");
  std::uint64_t gen_seed = 1;
  bool gen_small = false;
  gen->add_option("--seed", gen_seed, "benchmark generator seed");
  gen->add_flag("--small", gen_small, "use the small benchmark shape");
  gen->add_option("--out-dir", out_dir, "output directory")->required();

  // obfuscate
  auto* obf = app.add_subcommand("obfuscate", "run the obfuscation pipeline and check equivalence");
  Source obf_src;
  ConfigOpts obf_cfg;
  obf_src.add(obf);
  obf_cfg.add(obf);
  obf->add_option("--out-dir", out_dir, "output directory")->required();

  // attack
  auto* att = app.add_subcommand("attack", "disassemble an obfuscated program and score it against ground truth");
  std::string att_prog, att_truth;
  bool att_no_ft_first = false;
  att->add_option("--program", att_prog, "obfuscated program text")->required();
  att->add_option("--truth", att_truth, "ground_truth.json from obfuscate")->required();
  att->add_flag("--no-fallthrough-first", att_no_ft_first, "do not let fall-through claims win ties");
  emit_opt(att);

  // measure
  auto* mea = app.add_subcommand("measure", "obfuscate, attack and measure one benchmark");
  Source mea_src;
  ConfigOpts mea_cfg;
  mea_src.add(mea);
  mea_cfg.add(mea);
  emit_opt(mea);

  // sweep
  auto* swp = app.add_subcommand("sweep", "sensitivity sweep of one parameter");
  std::string swp_param;
  std::vector<std::string> swp_values;
  std::vector<std::uint64_t> swp_seeds;
  int swp_threads = 0;
  ConfigOpts swp_cfg;
  swp->add_option("--parameter", swp_param, "config key to vary")->required();
  swp->add_option("--values", swp_values, "values to try")->required()->delimiter(',');
  swp->add_option("--seed", swp_seeds, "benchmark seeds")->delimiter(',');
  swp->add_option("--threads", swp_threads, "worker threads, 0 for all cores");
  swp_cfg.add(swp);
  emit_opt(swp);

  // run
  auto* rn = app.add_subcommand("run", "run an experiment file (suite, parameter, values, benchmark_seeds, ...)");
  std::string rn_file;
  rn->add_option("experiment", rn_file, "experiment file")->required();
  emit_opt(rn);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) {
      auto bm = make_bench(gen_seed, gen_small);
      fs::path d(out_dir);
      spit(d / "program.fog", serialize_program(bm.program));
      spit(d / "training.txt", write_inputs(bm.training));
      spit(d / "measurement.txt", write_inputs(bm.measurement));
      std::cout << "wrote " << bm.program.blocks.size() << " blocks, " << bm.training.size() << " training and "
                << bm.measurement.size() << " measurement inputs to " << d.string() << "\n";
    } else if (*obf) {
      auto cfg = obf_cfg.build();
      auto bm = obf_src.load();
      ExecutionProfile prof;
      for (const auto& in : bm.training) prof.merge(run(bm.program, in).profile);
      auto res = pipeline(bm.program, prof, cfg);
      fs::path d(out_dir);
      spit(d / "obfuscated.fog", serialize_program(res.program));
      spit(d / "ground_truth.json", ground_truth_json(res).dump(1) + "\n");
      spit(d / "config.txt", serialize_config(cfg));
      int bad = 0;
      for (const auto& in : bm.measurement) {
        auto a = run(bm.program, in), b = run(res.program, in);
        if (!b.ok() || a.status != b.status || a.outputs != b.outputs) ++bad;
      }
      std::cout << res.predicates.size() << " predicates, " << res.cycles.size() << " cycles, "
                << res.factoring.applied.size() << " factored sets; " << bm.measurement.size() - bad << "/"
                << bm.measurement.size() << " measurement inputs equivalent\n";
      if (bad) throw EquivalenceFailure(std::to_string(bad) + " measurement inputs diverge");
    } else if (*att) {
      auto g = parse_ground_truth(nlohmann::json::parse(slurp(att_truth)));
      PipelineResult r;
      r.program = parse_program(slurp(att_prog));
      attach(r.program, g);
      r.predicates = g.predicates;
      r.factoring = g.factoring;
      AttackerOptions opt;
      opt.fallthrough_first = !att_no_ft_first;
      auto o = attack(r, opt);
      if (emit_fmt == "csv") emit(out_dir, "attack.csv", outcome_csv("attack", o));
      else emit(out_dir, "attack.json", outcome_json(o).dump(1));
    } else if (*mea) {
      auto cfg = mea_cfg.build();
      auto bm = mea_src.load();
      auto rr = run_once(bm, mea_src.seed, cfg, "measure");
      if (emit_fmt == "csv") emit(out_dir, "measure.csv", outcome_csv("measure", rr.attack));
      else emit(out_dir, "measure.json", to_json(rr).dump(1));
      if (rr.mismatches) throw EquivalenceFailure(std::to_string(rr.mismatches) + " measurement inputs diverge");
    } else if (*swp) {
      ExperimentSpec spec;
      spec.suite = Suite::SENSITIVITY;
      spec.parameter = swp_param;
      spec.values = swp_values;
      spec.threads = swp_threads;
      spec.base = swp_cfg.build();
      if (!swp_seeds.empty()) {
        spec.benchmarks.clear();
        for (auto s : swp_seeds) spec.benchmarks.push_back(standard_benchmark(s));
      }
      auto b = run_experiment(spec);
      if (emit_fmt == "csv") emit(out_dir, "sweep.csv", bundle_csv(b));
      else emit(out_dir, "sweep.json", to_json(b).dump(1));
      for (const auto& r : b.runs)
        if (r.mismatches) throw EquivalenceFailure(r.label + ": measurement inputs diverge");
    } else if (*rn) {
      auto b = run_experiment(parse_experiment(slurp(rn_file)));
      if (emit_fmt == "csv") emit(out_dir, "bundle.csv", bundle_csv(b));
      else emit(out_dir, "bundle.json", to_json(b).dump(1));
      for (const auto& r : b.runs)
        if (r.mismatches) throw EquivalenceFailure(r.label + ": measurement inputs diverge");
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const SpecError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const EquivalenceFailure& e) {
    std::cerr << "equivalence check failed: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
