#include "pai/metrics.hpp"

#include <cmath>
#include <limits>

#include "pai/errors.hpp"

namespace pai {

double mse(const Volume& a, const Volume& b) {
  if (!a.shape_matches(b)) {
    fail(ErrorCode::check, "mse requires matching volume shapes");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.values.size());
}

double psnr(const Volume& a, const Volume& b, double peak) {
  if (!(peak > 0)) fail(ErrorCode::check, "psnr needs a positive peak");
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak) - 10.0 * std::log10(m);
}

namespace {

struct AxisView {
  int depth;       // extent along the projection axis
  int rows, cols;  // image shape
};

AxisView axis_view(const Volume& v, Axis axis) {
  switch (axis) {
    case Axis::X: return {v.nx, v.ny, v.nz};
    case Axis::Y: return {v.ny, v.nx, v.nz};
    default: return {v.nz, v.nx, v.ny};
  }
}

std::size_t voxel(const Volume& v, Axis axis, int d, int r, int c) {
  // Map (depth, row, col) back to (i, j, k) for the chosen axis.
  int i, j, k;
  switch (axis) {
    case Axis::X: i = d; j = r; k = c; break;
    case Axis::Y: i = r; j = d; k = c; break;
    default: i = r; j = c; k = d; break;
  }
  return (static_cast<std::size_t>(i) * v.ny + j) * v.nz + k;
}

}  // namespace

Image mip(const Volume& v, Axis axis) {
  const AxisView view = axis_view(v, axis);
  Image img{view.rows, view.cols,
            std::vector<double>(static_cast<std::size_t>(view.rows) *
                                view.cols)};
  for (int r = 0; r < view.rows; ++r) {
    for (int c = 0; c < view.cols; ++c) {
      double best = v.values[voxel(v, axis, 0, r, c)];
      for (int d = 1; d < view.depth; ++d) {
        best = std::max(best, v.values[voxel(v, axis, d, r, c)]);
      }
      img.at(r, c) = best;
    }
  }
  return img;
}

Image slice(const Volume& v, Axis axis, int index) {
  const AxisView view = axis_view(v, axis);
  if (index < 0 || index >= view.depth) {
    fail(ErrorCode::check, "slice index out of bounds");
  }
  Image img{view.rows, view.cols,
            std::vector<double>(static_cast<std::size_t>(view.rows) *
                                view.cols)};
  for (int r = 0; r < view.rows; ++r) {
    for (int c = 0; c < view.cols; ++c) {
      img.at(r, c) = v.values[voxel(v, axis, index, r, c)];
    }
  }
  return img;
}

}  // namespace pai
