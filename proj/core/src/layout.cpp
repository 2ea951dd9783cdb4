#include "fog/layout.hpp"

#include <algorithm>
#include <map>

#include "fog/rng.hpp"

namespace fog {

const char* granularity_name(Granularity g) { return g == Granularity::FUNCTION ? "FUNCTION" : "BLOCK"; }

Program randomize_layout(Program p, Granularity g, std::uint64_t seed) {
  Rng rng(seed, "layout");
  if (p.blocks.size() < 2) return p;
  const BlockId entry = p.entry_block();
  std::vector<BlockId> order;
  order.reserve(p.blocks.size());
  if (g == Granularity::BLOCK) {
    for (const auto& bb : p.blocks)
      if (bb.id != entry) order.push_back(bb.id);
    rng.shuffle(order);
    order.insert(order.begin(), entry);
  } else {
    // function groups keep their internal order
    std::vector<int> fids;
    std::map<int, std::vector<BlockId>> groups;
    for (const auto& bb : p.blocks) {
      auto& grp = groups[bb.prov.function_id];
      if (grp.empty()) fids.push_back(bb.prov.function_id);
      grp.push_back(bb.id);
    }
    int efid = p.block(entry).prov.function_id;
    fids.erase(std::find(fids.begin(), fids.end(), efid));
    rng.shuffle(fids);
    fids.insert(fids.begin(), efid);
    auto& eg = groups[efid];
    std::stable_partition(eg.begin(), eg.end(), [&](BlockId b) { return b == entry; });
    for (int f : fids)
      for (BlockId b : groups[f]) order.push_back(b);
  }
  relayout(p, order);
  return p;
}

Program flip_branches(Program p, std::uint64_t seed, double probability) {
  Rng rng(seed, "layout.flip");
  std::vector<BlockId> cand;
  for (const auto& bb : p.blocks) {
    if (bb.insns.empty() || bb.insns.back().op != Op::BR) continue;
    if (p.pinned.count(bb.insns.back().id)) continue;
    bool fake = false;
    for (const auto& e : bb.succs) fake |= e.truth == Truth::FAKE_EDGE;
    if (!fake) cand.push_back(bb.id);
  }
  std::map<BlockId, BlockId> ft_over;
  for (BlockId b : cand) {
    if (!rng.percent(probability)) continue;
    BlockId ft = strip_trampoline(p, b);
    if (ft == kNoBlock) {
      std::size_t i = p.index_of(b);
      if (i + 1 >= p.blocks.size()) continue;
      ft = p.blocks[i + 1].id;
    }
    auto& br = p.block(b).insns.back();
    BlockId taken = static_cast<BlockId>(br.ops[0].value);
    br.cond = negate(br.cond);
    br.ops[0] = Operand::block(ft);
    ft_over[b] = taken;
  }
  if (ft_over.empty()) return p;
  std::vector<BlockId> order;
  for (const auto& bb : p.blocks) order.push_back(bb.id);
  relayout(p, order, ft_over);
  return p;
}

double same_function_adjacency(const Program& p) {
  if (p.blocks.size() < 2) return 0.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i + 1 < p.blocks.size(); ++i)
    same += p.blocks[i].prov.function_id == p.blocks[i + 1].prov.function_id;
  return static_cast<double>(same) / static_cast<double>(p.blocks.size() - 1);
}

}  // namespace fog
