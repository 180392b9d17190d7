#include "pai/grid.hpp"

#include <cmath>
#include <sstream>

namespace pai {

SimGrid SimGrid::validated(SimGrid g) {
  std::ostringstream msg;
  if (g.nx < 1 || g.ny < 1 || g.nz < 1) {
    msg << "grid dims must be positive, got " << g.nx << "x" << g.ny << "x"
        << g.nz;
    fail(ErrorCode::config, msg.str());
  }
  if (g.dx <= 0.0 || g.dt <= 0.0 || g.nt < 1 || g.c <= 0.0) {
    fail(ErrorCode::config, "grid requires dx > 0, dt > 0, nt >= 1, c > 0");
  }
  if (g.sponge_width < 0 || g.sponge_strength < 0.0) {
    fail(ErrorCode::config, "sponge width/strength must be nonnegative");
  }
  const int d = g.spatial_rank();
  const double cfl = g.cfl_number();
  const double limit = 1.0 / std::sqrt(static_cast<double>(d));
  if (!(cfl <= limit)) {
    msg << "CFL violation: c*dt/dx = " << cfl << " exceeds 1/sqrt(" << d
        << ") = " << limit;
    fail(ErrorCode::config, msg.str());
  }
  const int min_extent = 2 * g.sponge_width + 4;
  const bool ok_x = g.nx >= min_extent;
  const bool ok_y = g.is_2d() || g.ny >= min_extent;
  const bool ok_z = g.nz >= min_extent;
  if (!ok_x || !ok_y || !ok_z) {
    msg << "grid " << g.nx << "x" << g.ny << "x" << g.nz
        << " too small for sponge_width " << g.sponge_width
        << " (each spatial extent must be >= " << min_extent << ")";
    fail(ErrorCode::config, msg.str());
  }
  return g;
}

std::string to_string(SubsampleScheme s) {
  return s == SubsampleScheme::total ? "total" : "per_axis";
}

SubsampleScheme subsample_scheme_from_string(const std::string& s) {
  if (s == "total") return SubsampleScheme::total;
  if (s == "per_axis") return SubsampleScheme::per_axis;
  fail(ErrorCode::config,
       "unknown subsample scheme '" + s + "' (expected total or per_axis)");
}

ReceiverGeometry ReceiverGeometry::from_mask(const SimGrid& g,
                                             std::vector<std::uint8_t> mask,
                                             int factor,
                                             SubsampleScheme scheme) {
  if (mask.size() != static_cast<std::size_t>(g.nx) * g.ny) {
    fail(ErrorCode::config, "receiver mask size does not match the plane");
  }
  ReceiverGeometry geom;
  geom.nx = g.nx;
  geom.ny = g.ny;
  geom.plane_k = g.receiver_plane();
  geom.subsample_factor = factor;
  geom.scheme = scheme;
  geom.mask = std::move(mask);
  for (int i = 0; i < g.nx; ++i) {
    for (int j = 0; j < g.ny; ++j) {
      if (geom.mask[static_cast<std::size_t>(i) * g.ny + j]) {
        geom.active.emplace_back(i, j);
      }
    }
  }
  if (geom.active.empty()) {
    fail(ErrorCode::config, "receiver geometry has no active receivers");
  }
  if (geom.plane_k >= g.nz - g.sponge_width) {
    fail(ErrorCode::config, "receiver plane does not lie in the grid interior");
  }
  return geom;
}

ReceiverGeometry make_full_geometry(const SimGrid& g) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(g.nx) * g.ny, 1);
  return ReceiverGeometry::from_mask(g, std::move(mask), 1,
                                     SubsampleScheme::total);
}

namespace {

int isqrt_exact(int n) {
  const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  return r * r == n ? r : -1;
}

}  // namespace

ReceiverGeometry make_subsampled_geometry(const SimGrid& g, int factor,
                                          SubsampleScheme scheme) {
  if (factor < 1) {
    fail(ErrorCode::config, "subsample factor must be >= 1");
  }
  int stride_x = 1;
  int stride_y = 1;
  if (factor > 1) {
    if (scheme == SubsampleScheme::per_axis) {
      stride_x = factor;
      stride_y = g.is_2d() ? 1 : factor;
    } else {
      if (g.is_2d()) {
        stride_x = factor;  // single lateral axis carries the whole reduction
      } else {
        const int s = isqrt_exact(factor);
        if (s < 0) {
          fail(ErrorCode::config,
               "total subsample factor must be a perfect square in 3D, got " +
                   std::to_string(factor));
        }
        stride_x = s;
        stride_y = s;
      }
    }
  }
  if (stride_x > g.nx || stride_y > g.ny) {
    fail(ErrorCode::config,
         "subsample factor " + std::to_string(factor) +
             " exceeds the receiver plane extent");
  }
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(g.nx) * g.ny, 0);
  for (int i = 0; i < g.nx; i += stride_x) {
    for (int j = 0; j < g.ny; j += stride_y) {
      mask[static_cast<std::size_t>(i) * g.ny + j] = 1;
    }
  }
  return ReceiverGeometry::from_mask(g, std::move(mask), factor, scheme);
}

}  // namespace pai
