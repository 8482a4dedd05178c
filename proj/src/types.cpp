#include "fraudrl/types.hpp"

#include <cassert>

namespace fraudrl {

Phase ground_truth_phase(int turn_index, int total_turns) {
  assert(turn_index >= 1 && turn_index <= total_turns);
  if (turn_index == total_turns) return Phase::final;
  if (2 * turn_index < total_turns) return Phase::early;
  return Phase::late;
}

}  // namespace fraudrl
