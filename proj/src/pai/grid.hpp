#pragma once

#include <atomic>
#include <cstdint>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "pai/errors.hpp"

namespace pai {

// Regular simulation grid. z is the depth axis; the receiver plane sits at
// the top of the volume (low z). ny == 1 selects the 2D kernels, in which
// case the lateral axes collapse to x alone.
struct SimGrid {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  double dx = 0.0;  // grid spacing, meters (isotropic)
  double dt = 0.0;  // time step, seconds
  int nt = 0;       // number of recorded time samples
  double c = 1500.0;  // sound speed, m/s
  int sponge_width = 8;
  double sponge_strength = 0.05;  // damping at the outermost sponge cell

  bool is_2d() const { return ny == 1; }
  int spatial_rank() const { return is_2d() ? 2 : 3; }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  double cfl_number() const { return c * dt / dx; }

  // First plane at the z-top that the sponge does not damp.
  int receiver_plane() const { return sponge_width; }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * ny + j) * nz + k;
  }

  // Validates CFL and dimension constraints; throws Error(config) on failure.
  static SimGrid validated(SimGrid g);
};

// Scalar field on a SimGrid. Used for the unknown initial pressure, for
// gradients, and for reconstructions.
struct Volume {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  std::vector<double> values;

  static Volume zeros(const SimGrid& g) { return zeros(g.nx, g.ny, g.nz); }

  static Volume zeros(int nx, int ny, int nz) {
    Volume v;
    v.nx = nx;
    v.ny = ny;
    v.nz = nz;
    v.values.assign(
        static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * nz, 0.0);
    return v;
  }

  bool shape_matches(const SimGrid& g) const {
    return nx == g.nx && ny == g.ny && nz == g.nz &&
           values.size() == g.cell_count();
  }
  bool shape_matches(const Volume& o) const {
    return nx == o.nx && ny == o.ny && nz == o.nz &&
           values.size() == o.values.size();
  }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * ny + j) * nz + k;
  }
  double& at(int i, int j, int k) { return values[index(i, j, k)]; }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  std::size_t size() const { return values.size(); }
};

enum class SubsampleScheme { total, per_axis };

std::string to_string(SubsampleScheme s);
SubsampleScheme subsample_scheme_from_string(const std::string& s);

// Planar receiver array at the z-top of the grid. The mask covers the full
// (nx, ny) plane; active receivers are enumerated in row-major (i, j) order.
struct ReceiverGeometry {
  int nx = 0;
  int ny = 0;
  int plane_k = 0;
  int subsample_factor = 1;
  SubsampleScheme scheme = SubsampleScheme::total;
  std::vector<std::uint8_t> mask;            // nx * ny entries
  std::vector<std::pair<int, int>> active;   // (i, j) of active receivers

  std::size_t active_count() const { return active.size(); }

  bool mask_at(int i, int j) const {
    return mask[static_cast<std::size_t>(i) * ny + j] != 0;
  }

  static ReceiverGeometry from_mask(const SimGrid& g,
                                    std::vector<std::uint8_t> mask, int factor,
                                    SubsampleScheme scheme);
};

// Full (unsubsampled) geometry: every plane position is a receiver.
ReceiverGeometry make_full_geometry(const SimGrid& g);

// Regular decimation of the receiver plane.
//   scheme == total:    `factor` is the total receiver-count reduction;
//                       stride per lateral axis is sqrt(factor) in 3D and
//                       factor itself in 2D (single lateral axis).
//   scheme == per_axis: stride `factor` along every lateral axis.
ReceiverGeometry make_subsampled_geometry(const SimGrid& g, int factor,
                                          SubsampleScheme scheme);

// Receiver data: one time series per active receiver, row-major
// (receiver, time).
struct Traces {
  ReceiverGeometry geometry;
  int nt = 0;
  std::vector<double> values;

  static Traces zeros(const ReceiverGeometry& geom, int nt) {
    Traces t;
    t.geometry = geom;
    t.nt = nt;
    t.values.assign(geom.active_count() * static_cast<std::size_t>(nt), 0.0);
    return t;
  }

  double& at(std::size_t receiver, int t) {
    return values[receiver * nt + t];
  }
  double at(std::size_t receiver, int t) const {
    return values[receiver * nt + t];
  }
  std::size_t size() const { return values.size(); }
};

struct NoiseSpec {
  double snr_db = 10.0;
  std::uint64_t seed = 0;
};

// Thread-safe tally of PDE solves performed through one operator handle.
class SolveCounter {
 public:
  void count_forward() { forward_.fetch_add(1, std::memory_order_relaxed); }
  void count_adjoint() { adjoint_.fetch_add(1, std::memory_order_relaxed); }
  std::uint64_t forward_count() const {
    return forward_.load(std::memory_order_relaxed);
  }
  std::uint64_t adjoint_count() const {
    return adjoint_.load(std::memory_order_relaxed);
  }
  std::uint64_t total() const { return forward_count() + adjoint_count(); }

 private:
  std::atomic<std::uint64_t> forward_{0};
  std::atomic<std::uint64_t> adjoint_{0};
};

}  // namespace pai
