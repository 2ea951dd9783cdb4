#pragma once

#include <vector>

#include "fog/interp.hpp"

namespace fog::testing {

// Both programs halt normally with identical output streams on every input.
inline bool equivalent(const Program& a, const Program& b, const std::vector<std::vector<Word>>& inputs) {
  for (const auto& in : inputs) {
    auto ra = run(a, in, {.profile = false});
    auto rb = run(b, in, {.profile = false});
    if (!ra.ok() || !rb.ok() || ra.outputs != rb.outputs) return false;
  }
  return true;
}

}  // namespace fog::testing
