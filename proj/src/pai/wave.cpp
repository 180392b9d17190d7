#include "pai/wave.hpp"

#include <cmath>
#include <string>

#include "pai/rng.hpp"

namespace pai {

std::vector<double> sponge_taper(int n, int width, double strength) {
  std::vector<double> w(n, 1.0);
  if (width <= 0 || strength <= 0.0) return w;
  for (int b = 0; b < width && b < n; ++b) {
    // b = distance from the boundary; b = 0 is the outermost cell.
    const double ramp = 0.5 * (1.0 + std::cos(M_PI * b / width));
    const double factor = 1.0 - strength * ramp;
    w[b] = std::min(w[b], factor);
    w[n - 1 - b] = std::min(w[n - 1 - b], factor);
  }
  return w;
}

namespace {

std::vector<double> cell_damping(const SimGrid& g) {
  const auto wx = sponge_taper(g.nx, g.sponge_width, g.sponge_strength);
  const auto wy = g.is_2d()
                      ? std::vector<double>(1, 1.0)
                      : sponge_taper(g.ny, g.sponge_width, g.sponge_strength);
  const auto wz = sponge_taper(g.nz, g.sponge_width, g.sponge_strength);
  std::vector<double> damp(g.cell_count());
  for (int i = 0; i < g.nx; ++i) {
    for (int j = 0; j < g.ny; ++j) {
      for (int k = 0; k < g.nz; ++k) {
        damp[g.index(i, j, k)] = wx[i] * wy[j] * wz[k];
      }
    }
  }
  return damp;
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      fail(ErrorCode::numeric, std::string(what) + " contains non-finite values");
    }
  }
}

// Zero-Dirichlet Laplacian (dimensionless: neighbor sum minus 2d * center).
// ny == 1 uses the 2D 5-point stencil over (x, z).
void laplacian(const SimGrid& g, const std::vector<double>& p,
               std::vector<double>& lap) {
  const int nx = g.nx, ny = g.ny, nz = g.nz;
  const std::size_t sx = static_cast<std::size_t>(ny) * nz;
  const std::size_t sy = nz;
  if (g.is_2d()) {
    for (int i = 0; i < nx; ++i) {
      for (int k = 0; k < nz; ++k) {
        const std::size_t c = static_cast<std::size_t>(i) * nz + k;
        double acc = -4.0 * p[c];
        if (i > 0) acc += p[c - sx];
        if (i + 1 < nx) acc += p[c + sx];
        if (k > 0) acc += p[c - 1];
        if (k + 1 < nz) acc += p[c + 1];
        lap[c] = acc;
      }
    }
    return;
  }
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      for (int k = 0; k < nz; ++k) {
        const std::size_t c = (static_cast<std::size_t>(i) * ny + j) * nz + k;
        double acc = -6.0 * p[c];
        if (i > 0) acc += p[c - sx];
        if (i + 1 < nx) acc += p[c + sx];
        if (j > 0) acc += p[c - sy];
        if (j + 1 < ny) acc += p[c + sy];
        if (k > 0) acc += p[c - 1];
        if (k + 1 < nz) acc += p[c + 1];
        lap[c] = acc;
      }
    }
  }
}

}  // namespace

WaveOperator::WaveOperator(SimGrid grid, ReceiverGeometry geometry)
    : grid_(SimGrid::validated(grid)), geom_(std::move(geometry)) {
  if (geom_.nx != grid_.nx || geom_.ny != grid_.ny) {
    fail(ErrorCode::config, "receiver geometry does not match the grid plane");
  }
  if (geom_.plane_k < 0 || geom_.plane_k >= grid_.nz) {
    fail(ErrorCode::config, "receiver plane index out of range");
  }
  damping_ = cell_damping(grid_);
}

Traces WaveOperator::forward(const Volume& x) const {
  if (!x.shape_matches(grid_)) {
    fail(ErrorCode::config, "volume shape does not match the grid");
  }
  check_finite(x.values, "forward input");
  const std::size_t n = grid_.cell_count();
  const double r2 = grid_.cfl_number() * grid_.cfl_number();

  std::vector<double> p_prev = x.values;
  std::vector<double> p_cur = x.values;
  std::vector<double> lap(n);

  Traces out = Traces::zeros(geom_, grid_.nt);
  const int kr = geom_.plane_k;
  auto record = [&](int t) {
    for (std::size_t r = 0; r < geom_.active.size(); ++r) {
      const auto [i, j] = geom_.active[r];
      out.at(r, t) = p_cur[grid_.index(i, j, kr)];
    }
  };

  record(0);
  for (int t = 1; t < grid_.nt; ++t) {
    laplacian(grid_, p_cur, lap);
    for (std::size_t c = 0; c < n; ++c) {
      // p_prev buffer becomes p_next in place.
      p_prev[c] = damping_[c] * (2.0 * p_cur[c] - p_prev[c] + r2 * lap[c]);
      p_cur[c] *= damping_[c];
    }
    p_prev.swap(p_cur);
    record(t);
  }
  counter_.count_forward();
  return out;
}

Volume WaveOperator::adjoint(const Traces& y) const {
  if (y.geometry.nx != geom_.nx || y.geometry.ny != geom_.ny ||
      y.geometry.plane_k != geom_.plane_k ||
      y.geometry.active.size() != geom_.active.size() || y.nt != grid_.nt) {
    fail(ErrorCode::config, "traces do not match the operator geometry");
  }
  check_finite(y.values, "adjoint input");
  const std::size_t n = grid_.cell_count();
  const double r2 = grid_.cfl_number() * grid_.cfl_number();

  // Adjoint state (u, v): v receives the injected trace samples and the
  // transposed step maps (u, v) -> (-W v, W u + (2I + r2 L) W v).
  std::vector<double> u(n, 0.0);
  std::vector<double> v(n, 0.0);
  std::vector<double> t(n);
  std::vector<double> lap(n);

  const int kr = geom_.plane_k;
  auto inject = [&](int step) {
    for (std::size_t r = 0; r < geom_.active.size(); ++r) {
      const auto [i, j] = geom_.active[r];
      v[grid_.index(i, j, kr)] += y.at(r, step);
    }
  };

  inject(grid_.nt - 1);
  for (int step = grid_.nt - 2; step >= 0; --step) {
    for (std::size_t c = 0; c < n; ++c) t[c] = damping_[c] * v[c];
    laplacian(grid_, t, lap);
    for (std::size_t c = 0; c < n; ++c) {
      u[c] = damping_[c] * u[c] + 2.0 * t[c] + r2 * lap[c];  // new v
      v[c] = -t[c];                                          // new u
    }
    u.swap(v);
    inject(step);
  }

  Volume out = Volume::zeros(grid_);
  for (std::size_t c = 0; c < n; ++c) out.values[c] = u[c] + v[c];
  counter_.count_adjoint();
  return out;
}

Volume WaveOperator::misfit_gradient(const Volume& x, const Traces& y_obs,
                                     double* misfit_out) const {
  Traces residual = forward(x);
  if (residual.size() != y_obs.size()) {
    fail(ErrorCode::config, "observed traces do not match the operator");
  }
  double misfit = 0.0;
  for (std::size_t i = 0; i < residual.values.size(); ++i) {
    residual.values[i] -= y_obs.values[i];
    misfit += residual.values[i] * residual.values[i];
  }
  if (misfit_out) *misfit_out = 0.5 * misfit;
  return adjoint(residual);
}

Traces add_noise(const Traces& y, const NoiseSpec& spec) {
  if (!std::isfinite(spec.snr_db)) {
    fail(ErrorCode::config, "noise snr_db must be finite");
  }
  if (y.values.empty()) {
    fail(ErrorCode::config, "cannot add noise to empty traces");
  }
  double sumsq = 0.0;
  for (double s : y.values) sumsq += s * s;
  const double rms = std::sqrt(sumsq / static_cast<double>(y.values.size()));
  if (rms == 0.0) {
    fail(ErrorCode::config, "SNR is undefined for an all-zero signal");
  }
  const double sigma = rms / std::pow(10.0, spec.snr_db / 20.0);
  Rng rng(spec.seed);
  Traces out = y;
  for (double& s : out.values) s += sigma * rng.normal();
  return out;
}

}  // namespace pai
