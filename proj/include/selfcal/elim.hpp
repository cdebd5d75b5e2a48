#pragma once

#include "selfcal/types.hpp"

namespace selfcal {

/// One step of elimination with a known meaning: a digit stays valid only if
/// it was valid and is displayed in the color the user conveyed.
inline PerIntent<bool> elim_step(const PerIntent<bool>& valid, const ColoringPattern& coloring, Meaning meaning) {
  PerIntent<bool> out{};
  for (int d = 0; d < kNumIntents; ++d) out[d] = valid[d] && coloring[d] == meaning;
  return out;
}

inline int count_valid(const PerIntent<bool>& valid) {
  int k = 0;
  for (bool v : valid) k += v ? 1 : 0;
  return k;
}

inline PerIntent<bool> all_valid() {
  PerIntent<bool> v{};
  v.fill(true);
  return v;
}

}  // namespace selfcal
