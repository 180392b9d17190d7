#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "pai/grid.hpp"

namespace pai {

// Linear acoustic forward model A and its exact discrete adjoint.
//
// A = R o P. P propagates the scalar wave equation with a second-order
// leapfrog scheme in time and second-order central differences in space,
// from the initial condition p(0) = x, dp/dt(0) = 0 (realized as
// p^{-1} = p^0 = x). R samples the wavefield on the masked receiver plane
// at every recorded time index n = 0 .. nt-1 (so nt-1 propagation steps).
//
// One step, with r2 = (c*dt/dx)^2, W the multiplicative cosine-taper sponge
// and L the 5/7-point Laplacian with zero-Dirichlet ghost cells:
//
//   p_next = W .* (2 p_cur - p_prev + r2 * L p_cur)
//   p_prev <- W .* p_cur          (both fields are damped each step)
//   p_cur  <- p_next
//
// The adjoint runs the exact transpose of this recurrence backwards in time
// with the trace samples injected at the receiver positions, so that
// <A x, y> == <x, A^T y> holds to machine precision.
class WaveOperator {
 public:
  WaveOperator(SimGrid grid, ReceiverGeometry geometry);

  const SimGrid& grid() const { return grid_; }
  const ReceiverGeometry& geometry() const { return geom_; }

  // A x. Counts one forward solve.
  Traces forward(const Volume& x) const;

  // A^T y. Counts one adjoint solve.
  Volume adjoint(const Traces& y) const;

  // A^T (A x - y_obs), the gradient of the misfit 1/2 ||A x - y||^2.
  // Exactly one forward and one adjoint solve. If misfit_out is non-null it
  // receives the misfit value at x.
  Volume misfit_gradient(const Volume& x, const Traces& y_obs,
                         double* misfit_out = nullptr) const;

  std::uint64_t forward_count() const { return counter_.forward_count(); }
  std::uint64_t adjoint_count() const { return counter_.adjoint_count(); }
  const SolveCounter& counter() const { return counter_; }

  // Per-cell sponge damping factors (product of per-axis tapers).
  const std::vector<double>& damping() const { return damping_; }

 private:
  SimGrid grid_;
  ReceiverGeometry geom_;
  std::vector<double> damping_;
  mutable SolveCounter counter_;
};

// Per-axis sponge taper: 1 in the interior, decaying cosine-smoothly to
// (1 - strength) at the outermost cell on both ends.
std::vector<double> sponge_taper(int n, int width, double strength);

// y + eps with eps ~ N(0, sigma^2 I), sigma = rms(y) / 10^(snr_db / 20),
// drawn from the seeded deterministic PRNG. Rejects all-zero signals.
Traces add_noise(const Traces& y, const NoiseSpec& spec);

}  // namespace pai
