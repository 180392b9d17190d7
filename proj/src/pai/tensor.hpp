#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "pai/errors.hpp"
#include "pai/grid.hpp"

namespace pai {

// Channel-major field over a 2D or 3D spatial domain. Spatial layout matches
// Volume's row-major ordering so conversion is a straight copy.
template <typename T>
struct TensorField {
  int channels = 0;
  int rank = 2;                   // number of spatial dims (2 or 3)
  std::array<int, 3> dims{1, 1, 1};  // dims[rank..] stay 1
  std::vector<T> values;

  static TensorField zeros(int channels, int rank, std::array<int, 3> dims) {
    TensorField f;
    f.channels = channels;
    f.rank = rank;
    f.dims = dims;
    for (int a = rank; a < 3; ++a) f.dims[a] = 1;
    f.values.assign(static_cast<std::size_t>(channels) * f.spatial_size(),
                    T(0));
    return f;
  }

  std::size_t spatial_size() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t size() const { return values.size(); }

  T* channel(int c) { return values.data() + c * spatial_size(); }
  const T* channel(int c) const { return values.data() + c * spatial_size(); }

  bool same_shape(const TensorField& o) const {
    return channels == o.channels && rank == o.rank && dims == o.dims;
  }
  bool same_spatial(const TensorField& o) const {
    return rank == o.rank && dims == o.dims;
  }
};

// Volume <-> single-channel field conversions. ny == 1 collapses to rank 2.
template <typename T>
TensorField<T> volume_to_field(const Volume& v) {
  const bool flat = v.ny == 1;
  TensorField<T> f = TensorField<T>::zeros(
      1, flat ? 2 : 3,
      flat ? std::array<int, 3>{v.nx, v.nz, 1}
           : std::array<int, 3>{v.nx, v.ny, v.nz});
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    f.values[i] = static_cast<T>(v.values[i]);
  }
  return f;
}

template <typename T>
Volume field_channel_to_volume(const TensorField<T>& f, int channel,
                               const SimGrid& g) {
  if (f.spatial_size() != g.cell_count()) {
    fail(ErrorCode::check, "field spatial size does not match the grid");
  }
  Volume v = Volume::zeros(g);
  const T* src = f.channel(channel);
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    v.values[i] = static_cast<double>(src[i]);
  }
  return v;
}

}  // namespace pai
