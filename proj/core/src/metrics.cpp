#include "fog/metrics.hpp"

#include <set>
#include <sstream>
#include <tuple>

namespace fog {

const char* column_name(int c) {
  static const char* names[kColumns] = {"Total", "IA", "IO", "IF", "iA", "iO", "iF"};
  return c >= 0 && c < kColumns ? names[c] : "?";
}

std::array<bool, kColumns> edge_columns(const Provenance& a, const Provenance& b) {
  const bool same_archive = a.archive_id == b.archive_id;
  const bool same_object = same_archive && a.object_id == b.object_id;
  const bool same_function = same_object && a.function_id == b.function_id;
  return {true, !same_archive, !same_object, !same_function, same_archive, same_object, same_function};
}

int percent(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return 0;
  std::uint64_t q = 100 * num / den, r = 100 * num % den;
  if (2 * r > den || (2 * r == den && (q & 1))) ++q;
  return static_cast<int>(q);
}

namespace {

void tally(RateRow& row, const std::array<bool, kColumns>& cols, bool hit) {
  for (int c = 0; c < kColumns; ++c)
    if (cols[c]) {
      ++row.base[c];
      if (hit) ++row.count[c];
    }
}

}  // namespace

FalseRateReport false_rates(const Program& p, const AttackerView& v) {
  FalseRateReport r;
  for (const auto& c : classify_edges(p, v)) {
    auto cols = edge_columns(p.block(c.edge.src).prov, p.block(c.edge.dst).prov);
    if (c.truth == Truth::TRUE_EDGE) {
      ++r.true_edges;
      tally(r.db.fn, cols, c.db == EdgeClass::FN);
      tally(r.gui.fn, cols, c.gui != EdgeClass::TP);
    } else {
      ++r.fake_edges;
      tally(r.db.fp, cols, c.db == EdgeClass::FP);
      tally(r.gui.fp, cols, c.gui == EdgeClass::FP);
    }
  }
  r.drawn_edges = static_cast<int>(v.gui.size());
  for (BlockId b : v.discovered) {
    auto n = p.block(b).insns.size();
    r.discovered_insns += n;
    if (v.function_of(b) == kFunctionless) r.functionless_insns += n;
  }
  return r;
}

bool categories_coherent(const FalseRateReport& r) {
  auto ok = [](const std::array<int, kColumns>& a) {
    return a[kIA] <= a[kIO] && a[kIO] <= a[kIF] && a[kiF] <= a[kiO] && a[kiO] <= a[kiA];
  };
  for (const ViewRates* v : {&r.db, &r.gui})
    for (const RateRow* row : {&v->fp, &v->fn})
      if (!ok(row->count) || !ok(row->base)) return false;
  return true;
}

SplitPairReport split_pairs(const FactoringReport& rep, const AttackerView& v) {
  SplitPairReport r;
  for (const auto& as : rep.applied)
    for (auto [a, b] : as.split_pairs) {
      ++r.total;
      int fa = v.function_of(a);
      if (fa != kFunctionless && fa == v.function_of(b)) ++r.correct;
      else ++r.wrong;
    }
  return r;
}

ReachabilityHistogram reachability_histogram(const Program& p) {
  ReachabilityHistogram h;
  std::map<BlockId, std::set<int>> reached;
  for (std::size_t f = 0; f < p.functions.size(); ++f) {
    BlockId e = p.functions[f].entry;
    if (!p.has_block(e)) continue;
    std::set<BlockId> seen{e};
    std::vector<BlockId> work{e};
    while (!work.empty()) {
      BlockId b = work.back();
      work.pop_back();
      reached[b].insert(static_cast<int>(f));
      for (const auto& s : p.block(b).succs) {
        if (s.kind == EdgeKind::CALL || s.kind == EdgeKind::INDIRECT_RESOLVED) continue;
        if (p.has_block(s.target) && seen.insert(s.target).second) work.push_back(s.target);
      }
    }
  }
  for (const auto& bb : p.blocks) {
    if (bb.insns.empty()) continue;
    std::set<int> archives;
    std::set<std::pair<int, int>> objects;
    std::set<std::tuple<int, int, int>> functions;
    const auto it = reached.find(bb.id);
    const std::size_t entries = it == reached.end() ? 0 : it->second.size();
    if (it != reached.end())
      for (int f : it->second) {
        const auto& pv = p.functions[static_cast<std::size_t>(f)].prov;
        archives.insert(pv.archive_id);
        objects.insert({pv.archive_id, pv.object_id});
        functions.insert({pv.archive_id, pv.object_id, pv.function_id});
      }
    const auto n = bb.insns.size();
    h.entries[static_cast<int>(entries)] += n;
    h.archives[static_cast<int>(archives.size())] += n;
    h.objects[static_cast<int>(objects.size())] += n;
    h.functions[static_cast<int>(functions.size())] += n;
  }
  return h;
}

ApplicabilityBreakdown applicability_breakdown(const FactoringReport& rep, const Program& original,
                                               const InsnCounts& counts) {
  ApplicabilityBreakdown r;
  r.original_insns = original.instruction_count();
  for (const auto& as : rep.applied) {
    std::set<int> archives;
    std::set<std::pair<int, int>> objects;
    std::set<std::tuple<int, int, int>> functions;
    std::size_t n = 0;
    int covered = 0;
    for (const auto& f : as.fragments) {
      archives.insert(f.prov.archive_id);
      objects.insert({f.prov.archive_id, f.prov.object_id});
      functions.insert({f.prov.archive_id, f.prov.object_id, f.prov.function_id});
      n += f.insns.size();
      auto it = f.insns.empty() ? counts.end() : counts.find(f.insns.front());
      if (it != counts.end() && it->second > 0) ++covered;
    }
    r.factored_insns += n;
    r.by_archives[static_cast<int>(archives.size())] += n;
    r.by_objects[static_cast<int>(objects.size())] += n;
    r.by_functions[static_cast<int>(functions.size())] += n;
    ++r.by_contexts[static_cast<int>(as.fragments.size())];
    ++r.by_covered[covered];
  }
  return r;
}

OverheadReport overhead_counts(const Program& original, const Program& obfuscated,
                               const std::vector<std::vector<Word>>& inputs) {
  OverheadReport r;
  r.static_before = original.instruction_count();
  r.static_after = obfuscated.instruction_count();
  RunOptions opt;
  opt.profile = false;
  for (const auto& in : inputs) {
    r.dynamic_before += run(original, in, opt).steps;
    r.dynamic_after += run(obfuscated, in, opt).steps;
  }
  return r;
}

VariabilityReport dispatcher_variability_report(const Program& obfuscated, const FactoringReport& rep,
                                                const std::vector<std::vector<Word>>& inputs) {
  VariabilityReport r;
  std::map<BlockId, std::set<BlockId>> succ;
  for (const auto& as : rep.applied) succ[as.dispatcher_block];
  ExecutionProfile prof;
  RunOptions opt;
  opt.trace = true;
  for (const auto& in : inputs) {
    auto res = run(obfuscated, in, opt);
    prof.merge(res.profile);
    for (std::size_t i = 0; i + 1 < res.trace.size(); ++i) {
      auto it = succ.find(res.trace[i].block);
      if (it != succ.end()) it->second.insert(res.trace[i + 1].block);
    }
  }
  for (const auto& as : rep.applied) {
    ++r.sets;
    const auto& s = succ[as.dispatcher_block];
    if (s.empty()) ++r.uncovered;
    else if (s.size() == 1) ++r.invariant;
    else ++r.variable;
    int covered = 0;
    for (auto [a, b] : as.split_pairs) covered += prof.count(a) > 0;
    if (covered >= 2) {
      ++r.multi_covered;
      if (s.size() < 2) ++r.multi_covered_invariant;
    }
  }
  return r;
}

namespace {

nlohmann::json row_json(const RateRow& row) {
  nlohmann::json counts = nlohmann::json::object(), rates = nlohmann::json::object(),
                 bases = nlohmann::json::object();
  for (int c = 0; c < kColumns; ++c) {
    counts[column_name(c)] = row.count[c];
    bases[column_name(c)] = row.base[c];
    rates[column_name(c)] = percent(static_cast<std::uint64_t>(row.count[c]), static_cast<std::uint64_t>(row.base[c]));
  }
  return {{"count", counts}, {"base", bases}, {"percent", rates}};
}

nlohmann::json histogram_json(const std::map<int, std::size_t>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (auto [k, n] : m) j[std::to_string(k)] = n;
  return j;
}

nlohmann::json histogram_json(const std::map<int, int>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (auto [k, n] : m) j[std::to_string(k)] = n;
  return j;
}

}  // namespace

nlohmann::json to_json(const FalseRateReport& r) {
  nlohmann::json j;
  for (auto [name, v] : {std::pair{"db", &r.db}, std::pair{"gui", &r.gui}}) {
    j[name]["FP"] = row_json(v->fp);
    j[name]["FN"] = row_json(v->fn);
    j[name]["FPR"] = v->fp.rate(kTotal);
    j[name]["FNR"] = v->fn.rate(kTotal);
  }
  j["true_edges"] = r.true_edges;
  j["fake_edges"] = r.fake_edges;
  j["drawn_edges"] = r.drawn_edges;
  j["functionless_insns"] = r.functionless_insns;
  j["discovered_insns"] = r.discovered_insns;
  return j;
}

nlohmann::json to_json(const SplitPairReport& r) {
  return {{"total", r.total}, {"wrong", r.wrong}, {"correct", r.correct},
          {"wrong_percent", percent(static_cast<std::uint64_t>(r.wrong), static_cast<std::uint64_t>(r.total))}};
}

nlohmann::json to_json(const ReachabilityHistogram& r) {
  return {{"entries", histogram_json(r.entries)},
          {"archives", histogram_json(r.archives)},
          {"objects", histogram_json(r.objects)},
          {"functions", histogram_json(r.functions)}};
}

nlohmann::json to_json(const ApplicabilityBreakdown& r) {
  return {{"original_insns", r.original_insns},      {"factored_insns", r.factored_insns},
          {"by_archives", histogram_json(r.by_archives)}, {"by_objects", histogram_json(r.by_objects)},
          {"by_functions", histogram_json(r.by_functions)}, {"by_contexts", histogram_json(r.by_contexts)},
          {"by_covered", histogram_json(r.by_covered)}};
}

nlohmann::json to_json(const OverheadReport& r) {
  return {{"static_before", r.static_before},   {"static_after", r.static_after},
          {"dynamic_before", r.dynamic_before}, {"dynamic_after", r.dynamic_after},
          {"static_ratio", r.static_ratio()},   {"dynamic_ratio", r.dynamic_ratio()}};
}

nlohmann::json to_json(const VariabilityReport& r) {
  return {{"sets", r.sets},
          {"uncovered", r.uncovered},
          {"invariant", r.invariant},
          {"variable", r.variable},
          {"multi_covered", r.multi_covered},
          {"multi_covered_invariant", r.multi_covered_invariant},
          {"variable_fraction", r.variable_fraction()}};
}

nlohmann::json view_json(const AttackerView& v) {
  auto edges = [](const std::set<ViewEdge>& s) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& e : s) a.push_back({e.src, e.dst, edge_kind_name(e.kind)});
    return a;
  };
  nlohmann::json assign = nlohmann::json::object();
  for (auto [b, f] : v.assignment) assign[std::to_string(b)] = f;
  return {{"assignment", assign},
          {"function_entries", v.function_entries},
          {"symbols", v.symbols},
          {"db", edges(v.db)},
          {"gui", edges(v.gui)}};
}

std::string false_rates_csv(const std::vector<std::pair<std::string, FalseRateReport>>& rows) {
  std::ostringstream os;
  os << "label,view,metric";
  for (int c = 0; c < kColumns; ++c) os << ',' << column_name(c);
  os << '\n';
  for (const auto& [label, r] : rows)
    for (auto [name, v] : {std::pair{"DB", &r.db}, std::pair{"GUI", &r.gui}})
      for (auto [metric, row] : {std::pair{"FP", &v->fp}, std::pair{"FN", &v->fn}}) {
        os << label << ',' << name << ',' << metric;
        for (int c = 0; c < kColumns; ++c) os << ',' << row->count[c];
        os << '\n' << label << ',' << name << ',' << metric << 'R';
        for (int c = 0; c < kColumns; ++c)
          os << ',' << percent(static_cast<std::uint64_t>(row->count[c]), static_cast<std::uint64_t>(row->base[c]));
        os << '\n';
      }
  return os.str();
}

}  // namespace fog
