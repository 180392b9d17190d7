#include "pai/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "pai/errors.hpp"
#include "pai/rng.hpp"

namespace pai {

void PhantomSpec::validate() const {
  if (n_vessels < 0) fail(ErrorCode::config, "n_vessels must be nonnegative");
  if (!(radius_min > 0) || !(radius_max >= radius_min)) {
    fail(ErrorCode::config, "phantom radius range must be ordered positive");
  }
  if (branch_prob < 0 || branch_prob > 1) {
    fail(ErrorCode::config, "branch_prob must lie in [0, 1]");
  }
  if (!(intensity_min > 0) || !(intensity_max >= intensity_min)) {
    fail(ErrorCode::config, "phantom intensity range must be ordered positive");
  }
  if (curvature < 0) fail(ErrorCode::config, "curvature must be nonnegative");
}

namespace {

struct Walker {
  double pos[3];
  double dir[3];
  double radius;
  double intensity;
  int steps;
};

void renormalize(double d[3], bool flat, Rng& rng) {
  if (flat) d[1] = 0.0;
  const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  if (n < 1e-9) {  // degenerate direction: redraw isotropically
    d[0] = rng.normal();
    d[1] = flat ? 0.0 : rng.normal();
    d[2] = rng.normal();
    renormalize(d, flat, rng);
    return;
  }
  for (int a = 0; a < 3; ++a) d[a] /= n;
}

}  // namespace

Volume gen_phantom(const SimGrid& grid, const PhantomSpec& spec) {
  spec.validate();
  Volume vol = Volume::zeros(grid.nx, grid.ny, grid.nz);
  if (spec.n_vessels == 0) return vol;

  const bool flat = grid.is_2d();
  const double margin = grid.sponge_width + 2.0;
  const double lo[3] = {margin, flat ? 0.0 : margin, margin};
  const double hi[3] = {grid.nx - 1 - margin, flat ? 0.0 : grid.ny - 1 - margin,
                        grid.nz - 1 - margin};
  double interior = hi[0] - lo[0];
  for (int a = flat ? 2 : 1; a < 3; ++a) {
    interior = std::min(interior, hi[a] - lo[a]);
  }
  if (interior < 4.0 * spec.radius_max) {
    fail(ErrorCode::config, "grid interior too small for radius_max");
  }

  Rng rng(spec.seed);
  std::deque<Walker> queue;
  const int max_walkers = spec.n_vessels * 4;
  int spawned = 0;

  auto spawn_root = [&]() {
    Walker w;
    for (int a = 0; a < 3; ++a) {
      w.pos[a] = (flat && a == 1) ? 0.0 : rng.uniform(lo[a], hi[a]);
    }
    w.dir[0] = rng.normal();
    w.dir[1] = flat ? 0.0 : rng.normal();
    w.dir[2] = rng.normal();
    renormalize(w.dir, flat, rng);
    w.radius = rng.uniform(spec.radius_min, spec.radius_max);
    w.intensity = rng.uniform(spec.intensity_min, spec.intensity_max);
    w.steps = static_cast<int>(rng.uniform(0.5, 1.0) * interior / 0.7);
    return w;
  };
  for (int v = 0; v < spec.n_vessels; ++v) {
    queue.push_back(spawn_root());
    ++spawned;
  }

  auto stamp = [&](const Walker& w) {
    const double sigma = w.radius / 2.0;
    const double cut = 1.5 * w.radius;
    const double cut2 = cut * cut;
    const int x0 = std::max(0, static_cast<int>(std::floor(w.pos[0] - cut)));
    const int x1 =
        std::min(grid.nx - 1, static_cast<int>(std::ceil(w.pos[0] + cut)));
    const int y0 =
        flat ? 0 : std::max(0, static_cast<int>(std::floor(w.pos[1] - cut)));
    const int y1 = flat ? 0
                        : std::min(grid.ny - 1,
                                   static_cast<int>(std::ceil(w.pos[1] + cut)));
    const int z0 = std::max(0, static_cast<int>(std::floor(w.pos[2] - cut)));
    const int z1 =
        std::min(grid.nz - 1, static_cast<int>(std::ceil(w.pos[2] + cut)));
    for (int i = x0; i <= x1; ++i) {
      for (int j = y0; j <= y1; ++j) {
        for (int k = z0; k <= z1; ++k) {
          const double dx = i - w.pos[0];
          const double dy = flat ? 0.0 : j - w.pos[1];
          const double dz = k - w.pos[2];
          const double d2 = dx * dx + dy * dy + dz * dz;
          if (d2 > cut2) continue;
          const double v = w.intensity * std::exp(-d2 / (2.0 * sigma * sigma));
          double& cell = vol.values[grid.index(i, j, k)];
          cell = std::max(cell, v);
        }
      }
    }
    // The tube core carries the full drawn intensity so the volume maximum
    // lands inside the configured intensity range.
    const int ci = std::clamp(static_cast<int>(std::lround(w.pos[0])), 0,
                              grid.nx - 1);
    const int cj = flat ? 0
                        : std::clamp(static_cast<int>(std::lround(w.pos[1])),
                                     0, grid.ny - 1);
    const int ck = std::clamp(static_cast<int>(std::lround(w.pos[2])), 0,
                              grid.nz - 1);
    double& core = vol.values[grid.index(ci, cj, ck)];
    core = std::max(core, w.intensity);
  };

  while (!queue.empty()) {
    Walker w = queue.front();
    queue.pop_front();
    while (w.steps-- > 0) {
      stamp(w);
      // Jitter the heading and march; reflect off the interior box.
      w.dir[0] += spec.curvature * rng.normal();
      if (!flat) w.dir[1] += spec.curvature * rng.normal();
      w.dir[2] += spec.curvature * rng.normal();
      renormalize(w.dir, flat, rng);
      for (int a = 0; a < 3; ++a) {
        if (flat && a == 1) continue;
        double next = w.pos[a] + 0.7 * w.dir[a];
        if (next < lo[a] || next > hi[a]) {
          w.dir[a] = -w.dir[a];
          next = w.pos[a] + 0.7 * w.dir[a];
        }
        w.pos[a] = std::clamp(next, lo[a], hi[a]);
      }
      if (rng.uniform() < spec.branch_prob && spawned < max_walkers &&
          w.steps > 3) {
        Walker child = w;
        child.dir[0] += rng.normal();
        if (!flat) child.dir[1] += rng.normal();
        child.dir[2] += rng.normal();
        renormalize(child.dir, flat, rng);
        child.radius = std::max(0.6 * w.radius, 0.5 * spec.radius_min);
        child.steps = w.steps / 2;
        queue.push_back(child);
        ++spawned;
      }
    }
  }
  return vol;
}

}  // namespace pai
