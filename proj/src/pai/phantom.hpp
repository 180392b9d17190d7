#pragma once

#include <cstdint>

#include "pai/grid.hpp"

namespace pai {

// Controls for the synthetic branching-vessel generator used in place of a
// real vascular dataset.
struct PhantomSpec {
  int n_vessels = 3;
  double radius_min = 1.0;  // cells
  double radius_max = 2.0;
  double curvature = 0.35;   // random-walk direction jitter per step
  double branch_prob = 0.02; // chance per step of spawning a side branch
  double intensity_min = 0.5;
  double intensity_max = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Seeded random-walk branching tubes with Gaussian cross-sections rendered
// into the grid interior (the sponge margin stays empty). Overlaps combine
// by maximum, so values stay within [0, intensity_max] and the background is
// exactly zero. Deterministic per (grid, spec).
Volume gen_phantom(const SimGrid& grid, const PhantomSpec& spec);

}  // namespace pai
