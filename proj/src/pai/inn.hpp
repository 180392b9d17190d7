#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pai/errors.hpp"
#include "pai/rng.hpp"
#include "pai/tensor.hpp"

namespace pai {

// ---------------------------------------------------------------------------
// Convolution primitives (zero padding, shape preserving, hand-derived grads)
// ---------------------------------------------------------------------------

template <typename T>
struct ConvKernel {
  int out_channels = 0;
  int in_channels = 0;
  int k = 3;     // odd
  int rank = 2;  // spatial rank of the fields it applies to
  std::vector<T> weights;  // out * in * k^rank, row-major
  std::vector<T> bias;     // out

  std::size_t taps() const {
    std::size_t t = 1;
    for (int a = 0; a < rank; ++a) t *= static_cast<std::size_t>(k);
    return t;
  }

  static ConvKernel zeros(int out_c, int in_c, int k, int rank) {
    ConvKernel kn;
    kn.out_channels = out_c;
    kn.in_channels = in_c;
    kn.k = k;
    kn.rank = rank;
    kn.weights.assign(static_cast<std::size_t>(out_c) * in_c * kn.taps(), T(0));
    kn.bias.assign(out_c, T(0));
    return kn;
  }
};

namespace detail {

template <typename T>
void check_conv_shapes(const TensorField<T>& input, const ConvKernel<T>& k) {
  if (k.k < 1 || k.k % 2 == 0) {
    fail(ErrorCode::check, "conv kernel extent must be odd and positive");
  }
  if (input.rank != k.rank) {
    fail(ErrorCode::check, "conv kernel rank does not match the field");
  }
  if (input.channels != k.in_channels) {
    fail(ErrorCode::check,
         "conv input channels " + std::to_string(input.channels) +
             " do not match kernel in_channels " +
             std::to_string(k.in_channels));
  }
  for (int a = 0; a < input.rank; ++a) {
    if (input.dims[a] < k.k) {
      fail(ErrorCode::check, "field smaller than the conv kernel extent");
    }
  }
}

}  // namespace detail

// Discrete cross-correlation with zero padding; spatial shape preserved.
template <typename T>
TensorField<T> conv_forward(const TensorField<T>& input,
                            const ConvKernel<T>& kernel) {
  detail::check_conv_shapes(input, kernel);
  const int d0 = input.dims[0], d1 = input.dims[1], d2 = input.dims[2];
  const int K = kernel.k, P = K / 2;
  TensorField<T> out =
      TensorField<T>::zeros(kernel.out_channels, input.rank, input.dims);
  const std::size_t plane = input.spatial_size();

  for (int oc = 0; oc < kernel.out_channels; ++oc) {
    T* oPtr = out.channel(oc);
    std::fill(oPtr, oPtr + plane, kernel.bias[oc]);
  }

  if (input.rank == 2) {
    for (int oc = 0; oc < kernel.out_channels; ++oc) {
      T* o = out.channel(oc);
      for (int ic = 0; ic < kernel.in_channels; ++ic) {
        const T* in = input.channel(ic);
        const T* w =
            kernel.weights.data() +
            (static_cast<std::size_t>(oc) * kernel.in_channels + ic) * K * K;
        for (int dx = 0; dx < K; ++dx) {
          const int x0 = std::max(0, P - dx), x1 = std::min(d0, d0 + P - dx);
          for (int dy = 0; dy < K; ++dy) {
            const T wv = w[dx * K + dy];
            const int y0 = std::max(0, P - dy), y1 = std::min(d1, d1 + P - dy);
            for (int x = x0; x < x1; ++x) {
              T* orow = o + static_cast<std::size_t>(x) * d1;
              const T* irow =
                  in + static_cast<std::size_t>(x + dx - P) * d1 + (dy - P);
              for (int y = y0; y < y1; ++y) orow[y] += wv * irow[y];
            }
          }
        }
      }
    }
    return out;
  }

  for (int oc = 0; oc < kernel.out_channels; ++oc) {
    T* o = out.channel(oc);
    for (int ic = 0; ic < kernel.in_channels; ++ic) {
      const T* in = input.channel(ic);
      const T* w = kernel.weights.data() +
                   (static_cast<std::size_t>(oc) * kernel.in_channels + ic) *
                       K * K * K;
      for (int dx = 0; dx < K; ++dx) {
        const int x0 = std::max(0, P - dx), x1 = std::min(d0, d0 + P - dx);
        for (int dy = 0; dy < K; ++dy) {
          const int y0 = std::max(0, P - dy), y1 = std::min(d1, d1 + P - dy);
          for (int dz = 0; dz < K; ++dz) {
            const T wv = w[(dx * K + dy) * K + dz];
            const int z0 = std::max(0, P - dz), z1 = std::min(d2, d2 + P - dz);
            for (int x = x0; x < x1; ++x) {
              for (int y = y0; y < y1; ++y) {
                T* orow = o + (static_cast<std::size_t>(x) * d1 + y) * d2;
                const T* irow = in +
                                (static_cast<std::size_t>(x + dx - P) * d1 +
                                 (y + dy - P)) *
                                    d2 +
                                (dz - P);
                for (int z = z0; z < z1; ++z) orow[z] += wv * irow[z];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
struct ConvGrads {
  TensorField<T> input;
  ConvKernel<T> kernel;
};

// Exact gradients of conv_forward: grad_input is the correlation transpose,
// grad_kernel accumulates input x grad_out products, grad_bias sums grad_out.
template <typename T>
ConvGrads<T> conv_backward(const TensorField<T>& input,
                           const ConvKernel<T>& kernel,
                           const TensorField<T>& grad_out) {
  detail::check_conv_shapes(input, kernel);
  if (grad_out.channels != kernel.out_channels ||
      !grad_out.same_spatial(input)) {
    fail(ErrorCode::check, "conv grad_out shape mismatch");
  }
  const int d0 = input.dims[0], d1 = input.dims[1], d2 = input.dims[2];
  const int K = kernel.k, P = K / 2;
  ConvGrads<T> g;
  g.input = TensorField<T>::zeros(input.channels, input.rank, input.dims);
  g.kernel = ConvKernel<T>::zeros(kernel.out_channels, kernel.in_channels, K,
                                  kernel.rank);

  for (int oc = 0; oc < kernel.out_channels; ++oc) {
    const T* go = grad_out.channel(oc);
    T acc = T(0);
    for (std::size_t i = 0; i < grad_out.spatial_size(); ++i) acc += go[i];
    g.kernel.bias[oc] = acc;
  }

  if (input.rank == 2) {
    for (int oc = 0; oc < kernel.out_channels; ++oc) {
      const T* go = grad_out.channel(oc);
      for (int ic = 0; ic < kernel.in_channels; ++ic) {
        const T* in = input.channel(ic);
        T* gi = g.input.channel(ic);
        const std::size_t wbase =
            (static_cast<std::size_t>(oc) * kernel.in_channels + ic) * K * K;
        for (int dx = 0; dx < K; ++dx) {
          const int x0 = std::max(0, P - dx), x1 = std::min(d0, d0 + P - dx);
          for (int dy = 0; dy < K; ++dy) {
            const T wv = kernel.weights[wbase + dx * K + dy];
            const int y0 = std::max(0, P - dy), y1 = std::min(d1, d1 + P - dy);
            T wacc = T(0);
            for (int x = x0; x < x1; ++x) {
              const T* gorow = go + static_cast<std::size_t>(x) * d1;
              const std::size_t ibase =
                  static_cast<std::size_t>(x + dx - P) * d1 + (dy - P);
              const T* irow = in + ibase;
              T* girow = gi + ibase;
              for (int y = y0; y < y1; ++y) {
                const T gv = gorow[y];
                girow[y] += wv * gv;
                wacc += irow[y] * gv;
              }
            }
            g.kernel.weights[wbase + dx * K + dy] += wacc;
          }
        }
      }
    }
    return g;
  }

  for (int oc = 0; oc < kernel.out_channels; ++oc) {
    const T* go = grad_out.channel(oc);
    for (int ic = 0; ic < kernel.in_channels; ++ic) {
      const T* in = input.channel(ic);
      T* gi = g.input.channel(ic);
      const std::size_t wbase =
          (static_cast<std::size_t>(oc) * kernel.in_channels + ic) * K * K * K;
      for (int dx = 0; dx < K; ++dx) {
        const int x0 = std::max(0, P - dx), x1 = std::min(d0, d0 + P - dx);
        for (int dy = 0; dy < K; ++dy) {
          const int y0 = std::max(0, P - dy), y1 = std::min(d1, d1 + P - dy);
          for (int dz = 0; dz < K; ++dz) {
            const T wv = kernel.weights[wbase + (dx * K + dy) * K + dz];
            const int z0 = std::max(0, P - dz), z1 = std::min(d2, d2 + P - dz);
            T wacc = T(0);
            for (int x = x0; x < x1; ++x) {
              for (int y = y0; y < y1; ++y) {
                const T* gorow =
                    go + (static_cast<std::size_t>(x) * d1 + y) * d2;
                const std::size_t ibase =
                    (static_cast<std::size_t>(x + dx - P) * d1 + (y + dy - P)) *
                        d2 +
                    (dz - P);
                const T* irow = in + ibase;
                T* girow = gi + ibase;
                for (int z = z0; z < z1; ++z) {
                  const T gv = gorow[z];
                  girow[z] += wv * gv;
                  wacc += irow[z] * gv;
                }
              }
            }
            g.kernel.weights[wbase + (dx * K + dy) * K + dz] += wacc;
          }
        }
      }
    }
  }
  return g;
}

// Leaky ReLU; x == 0 takes the slope branch (consistent forward/backward).
template <typename T>
TensorField<T> leaky_relu(const TensorField<T>& x, T slope) {
  TensorField<T> y = x;
  for (T& v : y.values) v = v > T(0) ? v : slope * v;
  return y;
}

template <typename T>
TensorField<T> leaky_relu_backward(const TensorField<T>& pre,
                                   const TensorField<T>& grad_out, T slope) {
  TensorField<T> g = grad_out;
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    if (!(pre.values[i] > T(0))) g.values[i] *= slope;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Channel plumbing
// ---------------------------------------------------------------------------

template <typename T>
TensorField<T> concat_channels(const TensorField<T>& a,
                               const TensorField<T>& b) {
  if (!a.same_spatial(b)) {
    fail(ErrorCode::check, "concat requires matching spatial dims");
  }
  TensorField<T> out =
      TensorField<T>::zeros(a.channels + b.channels, a.rank, a.dims);
  std::copy(a.values.begin(), a.values.end(), out.values.begin());
  std::copy(b.values.begin(), b.values.end(),
            out.values.begin() + static_cast<std::ptrdiff_t>(a.values.size()));
  return out;
}

template <typename T>
TensorField<T> slice_channels(const TensorField<T>& f, int c0, int c1) {
  TensorField<T> out = TensorField<T>::zeros(c1 - c0, f.rank, f.dims);
  std::copy(f.channel(c0), f.channel(c0) + out.values.size(),
            out.values.begin());
  return out;
}

// ---------------------------------------------------------------------------
// Squeeze: space-to-channel by a factor of 2 per axis (exact permutation)
// ---------------------------------------------------------------------------

template <typename T>
TensorField<T> squeeze(const TensorField<T>& f) {
  for (int a = 0; a < f.rank; ++a) {
    if (f.dims[a] % 2 != 0) {
      fail(ErrorCode::check, "squeeze requires even spatial dims");
    }
  }
  const int factor = f.rank == 2 ? 4 : 8;
  std::array<int, 3> nd = f.dims;
  for (int a = 0; a < f.rank; ++a) nd[a] /= 2;
  TensorField<T> out = TensorField<T>::zeros(f.channels * factor, f.rank, nd);
  const int d1 = f.dims[1], d2 = f.dims[2];
  const int n1 = nd[1], n2 = nd[2];
  if (f.rank == 2) {
    for (int c = 0; c < f.channels; ++c) {
      const T* in = f.channel(c);
      for (int o0 = 0; o0 < 2; ++o0) {
        for (int o1 = 0; o1 < 2; ++o1) {
          T* o = out.channel(c * 4 + o0 * 2 + o1);
          for (int x = 0; x < nd[0]; ++x) {
            for (int y = 0; y < n1; ++y) {
              o[static_cast<std::size_t>(x) * n1 + y] =
                  in[static_cast<std::size_t>(2 * x + o0) * d1 + (2 * y + o1)];
            }
          }
        }
      }
    }
    return out;
  }
  for (int c = 0; c < f.channels; ++c) {
    const T* in = f.channel(c);
    for (int o0 = 0; o0 < 2; ++o0) {
      for (int o1 = 0; o1 < 2; ++o1) {
        for (int o2 = 0; o2 < 2; ++o2) {
          T* o = out.channel(c * 8 + (o0 * 2 + o1) * 2 + o2);
          for (int x = 0; x < nd[0]; ++x) {
            for (int y = 0; y < n1; ++y) {
              for (int z = 0; z < n2; ++z) {
                o[(static_cast<std::size_t>(x) * n1 + y) * n2 + z] =
                    in[(static_cast<std::size_t>(2 * x + o0) * d1 +
                        (2 * y + o1)) *
                           d2 +
                       (2 * z + o2)];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
TensorField<T> unsqueeze(const TensorField<T>& f) {
  const int factor = f.rank == 2 ? 4 : 8;
  if (f.channels % factor != 0) {
    fail(ErrorCode::check, "unsqueeze requires channels divisible by 2^rank");
  }
  std::array<int, 3> nd = f.dims;
  for (int a = 0; a < f.rank; ++a) nd[a] *= 2;
  TensorField<T> out = TensorField<T>::zeros(f.channels / factor, f.rank, nd);
  const int d1 = f.dims[1], d2 = f.dims[2];
  const int n1 = nd[1], n2 = nd[2];
  if (f.rank == 2) {
    for (int c = 0; c < out.channels; ++c) {
      T* o = out.channel(c);
      for (int o0 = 0; o0 < 2; ++o0) {
        for (int o1 = 0; o1 < 2; ++o1) {
          const T* in = f.channel(c * 4 + o0 * 2 + o1);
          for (int x = 0; x < f.dims[0]; ++x) {
            for (int y = 0; y < d1; ++y) {
              o[static_cast<std::size_t>(2 * x + o0) * n1 + (2 * y + o1)] =
                  in[static_cast<std::size_t>(x) * d1 + y];
            }
          }
        }
      }
    }
    return out;
  }
  for (int c = 0; c < out.channels; ++c) {
    T* o = out.channel(c);
    for (int o0 = 0; o0 < 2; ++o0) {
      for (int o1 = 0; o1 < 2; ++o1) {
        for (int o2 = 0; o2 < 2; ++o2) {
          const T* in = f.channel(c * 8 + (o0 * 2 + o1) * 2 + o2);
          for (int x = 0; x < f.dims[0]; ++x) {
            for (int y = 0; y < d1; ++y) {
              for (int z = 0; z < d2; ++z) {
                o[(static_cast<std::size_t>(2 * x + o0) * n1 + (2 * y + o1)) *
                      n2 +
                  (2 * z + o2)] =
                    in[(static_cast<std::size_t>(x) * d1 + y) * d2 + z];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Additive coupling layer conditioned on an injected field
// ---------------------------------------------------------------------------

template <typename T>
struct CouplingLayerParams {
  ConvKernel<T> conv1;  // (half + cond) -> hidden
  ConvKernel<T> conv2;  // hidden -> half
  T slope = T(0.1);
  // true: the second channel half is transformed, driven by the first half.
  bool transform_upper = true;
};

namespace detail {

template <typename T>
void check_coupling(const TensorField<T>& state, const TensorField<T>& cond,
                    const CouplingLayerParams<T>& p) {
  if (state.channels % 2 != 0) {
    fail(ErrorCode::check, "coupling requires an even channel count");
  }
  if (!state.same_spatial(cond)) {
    fail(ErrorCode::check, "conditioning field spatial dims mismatch");
  }
  const int half = state.channels / 2;
  if (p.conv1.in_channels != half + cond.channels ||
      p.conv2.out_channels != half) {
    fail(ErrorCode::check, "coupling layer channel bookkeeping mismatch");
  }
}

// The residual function f([driver, cond]) = conv2(leaky(conv1(concat))).
template <typename T>
struct ResidualCache {
  TensorField<T> f_in;
  TensorField<T> h_pre;
  TensorField<T> h_act;
};

template <typename T>
TensorField<T> run_residual(const TensorField<T>& driver,
                            const TensorField<T>& cond,
                            const CouplingLayerParams<T>& p,
                            ResidualCache<T>* cache) {
  TensorField<T> f_in = concat_channels(driver, cond);
  TensorField<T> h_pre = conv_forward(f_in, p.conv1);
  TensorField<T> h_act = leaky_relu(h_pre, p.slope);
  TensorField<T> delta = conv_forward(h_act, p.conv2);
  if (cache) {
    cache->f_in = std::move(f_in);
    cache->h_pre = std::move(h_pre);
    cache->h_act = std::move(h_act);
  }
  return delta;
}

}  // namespace detail

// (a, b) -> (a, b + f([a, cond])) when transform_upper, else the mirrored
// form. Bijective in the state for any fixed cond and params.
template <typename T>
TensorField<T> coupling_forward(const TensorField<T>& state,
                                const TensorField<T>& cond,
                                const CouplingLayerParams<T>& p) {
  detail::check_coupling(state, cond, p);
  const int half = state.channels / 2;
  TensorField<T> out = state;
  const int driver0 = p.transform_upper ? 0 : half;
  const int target0 = p.transform_upper ? half : 0;
  TensorField<T> driver = slice_channels(state, driver0, driver0 + half);
  TensorField<T> delta =
      detail::run_residual<T>(driver, cond, p, nullptr);
  T* tgt = out.channel(target0);
  for (std::size_t i = 0; i < delta.values.size(); ++i) {
    tgt[i] += delta.values[i];
  }
  return out;
}

// Exact algebraic inverse: subtract the same residual.
template <typename T>
TensorField<T> coupling_inverse(const TensorField<T>& state_out,
                                const TensorField<T>& cond,
                                const CouplingLayerParams<T>& p) {
  detail::check_coupling(state_out, cond, p);
  const int half = state_out.channels / 2;
  TensorField<T> in = state_out;
  const int driver0 = p.transform_upper ? 0 : half;
  const int target0 = p.transform_upper ? half : 0;
  TensorField<T> driver = slice_channels(state_out, driver0, driver0 + half);
  TensorField<T> delta =
      detail::run_residual<T>(driver, cond, p, nullptr);
  T* tgt = in.channel(target0);
  for (std::size_t i = 0; i < delta.values.size(); ++i) {
    tgt[i] -= delta.values[i];
  }
  return in;
}

// ---------------------------------------------------------------------------
// Stage: a sequence of coupling layers with an optional squeeze plan
// ---------------------------------------------------------------------------

struct StageSpec {
  int state_channels = 8;  // 1 estimate channel + memory channels, even
  int cond_channels = 1;   // injected gradient channels at base scale
  int n_layers = 12;
  int hidden_channels = 16;
  int kernel_size = 3;
  double leaky_slope = 0.1;
  // Positions are in [0, n_layers]; position p applies before layer p
  // (p == n_layers: after the last layer).
  std::vector<int> squeeze_before;
  std::vector<int> unsqueeze_before;
};

enum class StageOpKind { coupling, squeeze, unsqueeze };

struct StagePlanStep {
  StageOpKind kind = StageOpKind::coupling;
  int layer = -1;          // for coupling ops
  int state_channels = 0;  // channels entering this op
  int cond_channels = 0;
};

// Resolves the spec into an op sequence, validating channel bookkeeping.
std::vector<StagePlanStep> resolve_stage_plan(const StageSpec& spec, int rank);

template <typename T>
struct StageParams {
  StageSpec spec;
  int rank = 2;
  std::vector<CouplingLayerParams<T>> layers;
};

// Tracks intermediate tensors retained for gradient computation during one
// backward pass. Reset per pass.
struct ActivationCacheStats {
  int peak_cached_tensors = 0;
  long long peak_cached_scalars = 0;
};

namespace detail {

class CacheTracker {
 public:
  void acquire(std::size_t scalars) {
    ++cur_tensors_;
    cur_scalars_ += static_cast<long long>(scalars);
    stats_.peak_cached_tensors =
        std::max(stats_.peak_cached_tensors, cur_tensors_);
    stats_.peak_cached_scalars =
        std::max(stats_.peak_cached_scalars, cur_scalars_);
  }
  void release(std::size_t scalars) {
    --cur_tensors_;
    cur_scalars_ -= static_cast<long long>(scalars);
  }
  const ActivationCacheStats& stats() const { return stats_; }

 private:
  int cur_tensors_ = 0;
  long long cur_scalars_ = 0;
  ActivationCacheStats stats_;
};

}  // namespace detail

// Seeded deterministic initialization. conv1 gets He-style uniform fan-in
// weights; conv2 starts at zero so a fresh stage is the identity map.
template <typename T>
StageParams<T> init_params(const StageSpec& spec, int rank,
                           std::uint64_t seed) {
  const auto plan = resolve_stage_plan(spec, rank);
  StageParams<T> params;
  params.spec = spec;
  params.rank = rank;
  params.layers.resize(spec.n_layers);
  Rng rng(seed);
  for (const auto& step : plan) {
    if (step.kind != StageOpKind::coupling) continue;
    const int half = step.state_channels / 2;
    CouplingLayerParams<T> layer;
    layer.slope = static_cast<T>(spec.leaky_slope);
    layer.transform_upper = step.layer % 2 == 0;
    layer.conv1 = ConvKernel<T>::zeros(spec.hidden_channels,
                                       half + step.cond_channels,
                                       spec.kernel_size, rank);
    const double fan_in =
        static_cast<double>(layer.conv1.in_channels) * layer.conv1.taps();
    const double bound = std::sqrt(6.0 / fan_in);
    for (T& w : layer.conv1.weights) {
      w = static_cast<T>(rng.uniform(-bound, bound));
    }
    layer.conv2 =
        ConvKernel<T>::zeros(half, spec.hidden_channels, spec.kernel_size,
                             rank);
    params.layers[step.layer] = std::move(layer);
  }
  return params;
}

namespace detail {

template <typename T>
void check_stage_input(const TensorField<T>& state, const TensorField<T>& cond,
                       const StageParams<T>& params) {
  if (state.channels != params.spec.state_channels ||
      state.rank != params.rank) {
    fail(ErrorCode::check, "stage input state layout mismatch");
  }
  if (cond.channels != params.spec.cond_channels ||
      !cond.same_spatial(state)) {
    fail(ErrorCode::check, "stage conditioning field layout mismatch");
  }
}

}  // namespace detail

// Applies the layer sequence; cond is conditioning input to every coupling
// layer (squeezed alongside the state where the plan changes scale). The map
// state -> output is bijective for fixed cond and params.
template <typename T>
TensorField<T> stage_forward(const TensorField<T>& state_in,
                             const TensorField<T>& cond_in,
                             const StageParams<T>& params,
                             ActivationCacheStats* record = nullptr) {
  detail::check_stage_input(state_in, cond_in, params);
  const auto plan = resolve_stage_plan(params.spec, params.rank);
  TensorField<T> state = state_in;
  TensorField<T> cond = cond_in;
  for (const auto& step : plan) {
    switch (step.kind) {
      case StageOpKind::squeeze:
        state = squeeze(state);
        cond = squeeze(cond);
        break;
      case StageOpKind::unsqueeze:
        state = unsqueeze(state);
        cond = unsqueeze(cond);
        break;
      case StageOpKind::coupling:
        state = coupling_forward(state, cond, params.layers[step.layer]);
        break;
    }
  }
  if (record) *record = ActivationCacheStats{};  // forward retains nothing
  return state;
}

// Inverts the whole stage (used for round-trip checks and reconstruction).
template <typename T>
TensorField<T> stage_inverse(const TensorField<T>& state_out,
                             const TensorField<T>& cond_in,
                             const StageParams<T>& params) {
  const auto plan = resolve_stage_plan(params.spec, params.rank);
  TensorField<T> state = state_out;
  TensorField<T> cond = cond_in;  // at base scale, as at the end of forward
  for (auto it = plan.rbegin(); it != plan.rend(); ++it) {
    switch (it->kind) {
      case StageOpKind::squeeze:  // reverse of squeeze
        state = unsqueeze(state);
        cond = unsqueeze(cond);
        break;
      case StageOpKind::unsqueeze:
        state = squeeze(state);
        cond = squeeze(cond);
        break;
      case StageOpKind::coupling:
        state = coupling_inverse(state, cond, params.layers[it->layer]);
        break;
    }
  }
  return state;
}

template <typename T>
StageParams<T> zero_grads_like(const StageParams<T>& params) {
  StageParams<T> g;
  g.spec = params.spec;
  g.rank = params.rank;
  g.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& src = params.layers[l];
    auto& dst = g.layers[l];
    dst.slope = src.slope;
    dst.transform_upper = src.transform_upper;
    dst.conv1 = ConvKernel<T>::zeros(src.conv1.out_channels,
                                     src.conv1.in_channels, src.conv1.k,
                                     src.conv1.rank);
    dst.conv2 = ConvKernel<T>::zeros(src.conv2.out_channels,
                                     src.conv2.in_channels, src.conv2.k,
                                     src.conv2.rank);
  }
  return g;
}

template <typename T>
struct StageBackwardResult {
  TensorField<T> input;        // stage input reconstructed by inversion
  TensorField<T> grad_input;   // gradient w.r.t. the input state
  StageParams<T> param_grads;  // same shapes as the stage parameters
  ActivationCacheStats stats;
};

// Backward pass that reconstructs activations by inverting layers instead of
// storing them. Walks layers in reverse; each layer re-runs its residual
// function once with a per-layer cache that is freed before moving on, so the
// number of simultaneously retained activation tensors is a constant
// independent of depth. Gradients equal those of a stored-activation pass.
//
// `output` must have been produced by stage_forward with the same params and
// cond; an inconsistent pairing yields garbage reconstruction that is only
// detectable by downstream checks.
template <typename T>
StageBackwardResult<T> stage_backward(const TensorField<T>& output,
                                      const TensorField<T>& grad_wrt_output,
                                      const TensorField<T>& cond_in,
                                      const StageParams<T>& params) {
  if (!output.same_shape(grad_wrt_output)) {
    fail(ErrorCode::check, "stage_backward grad shape mismatch");
  }
  const auto plan = resolve_stage_plan(params.spec, params.rank);
  detail::CacheTracker tracker;

  StageBackwardResult<T> res;
  res.param_grads = zero_grads_like(params);
  TensorField<T> state = output;
  TensorField<T> grad = grad_wrt_output;
  TensorField<T> cond = cond_in;

  for (auto it = plan.rbegin(); it != plan.rend(); ++it) {
    if (it->kind == StageOpKind::squeeze) {
      state = unsqueeze(state);
      grad = unsqueeze(grad);
      cond = unsqueeze(cond);
      continue;
    }
    if (it->kind == StageOpKind::unsqueeze) {
      state = squeeze(state);
      grad = squeeze(grad);
      cond = squeeze(cond);
      continue;
    }

    const auto& p = params.layers[it->layer];
    auto& pg = res.param_grads.layers[it->layer];
    const int half = state.channels / 2;
    const int driver0 = p.transform_upper ? 0 : half;
    const int target0 = p.transform_upper ? half : 0;

    // Recompute the residual once, caching its internals for backprop.
    detail::ResidualCache<T> cache;
    TensorField<T> driver = slice_channels(state, driver0, driver0 + half);
    TensorField<T> delta = detail::run_residual<T>(driver, cond, p, &cache);
    tracker.acquire(cache.f_in.size());
    tracker.acquire(cache.h_pre.size());
    tracker.acquire(cache.h_act.size());
    tracker.acquire(delta.size());

    // Invert: the target half of the input is output minus the residual.
    T* tgt = state.channel(target0);
    for (std::size_t i = 0; i < delta.values.size(); ++i) {
      tgt[i] -= delta.values[i];
    }
    tracker.release(delta.size());
    delta = TensorField<T>();

    // Backprop. The target half's upstream gradient drives the residual;
    // the driver half additionally receives the residual's input gradient.
    TensorField<T> grad_target = slice_channels(grad, target0, target0 + half);
    ConvGrads<T> g2 = conv_backward(cache.h_act, p.conv2, grad_target);
    tracker.release(cache.h_act.size());
    cache.h_act = TensorField<T>();
    pg.conv2 = std::move(g2.kernel);
    TensorField<T> grad_h_pre =
        leaky_relu_backward(cache.h_pre, g2.input, p.slope);
    tracker.release(cache.h_pre.size());
    cache.h_pre = TensorField<T>();
    ConvGrads<T> g1 = conv_backward(cache.f_in, p.conv1, grad_h_pre);
    tracker.release(cache.f_in.size());
    cache.f_in = TensorField<T>();
    pg.conv1 = std::move(g1.kernel);

    T* gdriver = grad.channel(driver0);
    const T* gf = g1.input.channel(0);  // first `half` channels of f_in
    for (std::size_t i = 0;
         i < static_cast<std::size_t>(half) * grad.spatial_size(); ++i) {
      gdriver[i] += gf[i];
    }
    // Gradient w.r.t. cond is dropped: the conditioning field is an external
    // input that greedy training never differentiates through.
  }

  res.stats = tracker.stats();
  res.input = std::move(state);
  res.grad_input = std::move(grad);
  return res;
}

// ---------------------------------------------------------------------------
// Flat parameter views (optimizer plumbing)
// ---------------------------------------------------------------------------

template <typename T>
std::size_t param_count(const StageParams<T>& p) {
  std::size_t n = 0;
  for (const auto& l : p.layers) {
    n += l.conv1.weights.size() + l.conv1.bias.size() +
         l.conv2.weights.size() + l.conv2.bias.size();
  }
  return n;
}

template <typename T>
std::vector<T> flatten_params(const StageParams<T>& p) {
  std::vector<T> out;
  out.reserve(param_count(p));
  for (const auto& l : p.layers) {
    out.insert(out.end(), l.conv1.weights.begin(), l.conv1.weights.end());
    out.insert(out.end(), l.conv1.bias.begin(), l.conv1.bias.end());
    out.insert(out.end(), l.conv2.weights.begin(), l.conv2.weights.end());
    out.insert(out.end(), l.conv2.bias.begin(), l.conv2.bias.end());
  }
  return out;
}

template <typename T>
void unflatten_params(StageParams<T>& p, const std::vector<T>& flat) {
  if (flat.size() != param_count(p)) {
    fail(ErrorCode::check, "flattened parameter count mismatch");
  }
  std::size_t pos = 0;
  auto take = [&](std::vector<T>& dst) {
    std::copy(flat.begin() + pos, flat.begin() + pos + dst.size(),
              dst.begin());
    pos += dst.size();
  };
  for (auto& l : p.layers) {
    take(l.conv1.weights);
    take(l.conv1.bias);
    take(l.conv2.weights);
    take(l.conv2.bias);
  }
}

}  // namespace pai
