#pragma once

#include "pai/grid.hpp"
#include "pai/io.hpp"

namespace pai {

enum class Axis { X = 0, Y = 1, Z = 2 };

// Mean squared error over all voxels; shapes must match.
double mse(const Volume& a, const Volume& b);

// 20*log10(peak) - 10*log10(mse(a, b)); returns +infinity when mse is 0.
double psnr(const Volume& a, const Volume& b, double peak);

// Maximum intensity projection along `axis`. Projecting along X yields a
// (ny x nz) image, along Y (nx x nz), along Z (nx x ny).
Image mip(const Volume& v, Axis axis);

// Plane extraction at `index` along `axis`; same image layout as mip.
Image slice(const Volume& v, Axis axis, int index);

}  // namespace pai
