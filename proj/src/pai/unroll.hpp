#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "pai/inn.hpp"
#include "pai/tensor.hpp"
#include "pai/wave.hpp"

namespace pai {

// ---------------------------------------------------------------------------
// State plumbing: the invertible state stacks the current estimate x as
// channel 0 with the carried memory channels behind it.
// ---------------------------------------------------------------------------

template <typename T>
TensorField<T> make_memory(const SimGrid& g, int channels) {
  const TensorField<T> probe = volume_to_field<T>(Volume::zeros(g));
  return TensorField<T>::zeros(channels, probe.rank, probe.dims);
}

template <typename T>
TensorField<T> pack_state(const Volume& x, const TensorField<T>& memory) {
  const TensorField<T> xf = volume_to_field<T>(x);
  if (!xf.same_spatial(memory)) {
    fail(ErrorCode::check, "memory field does not match the volume grid");
  }
  return concat_channels(xf, memory);
}

template <typename T>
void unpack_state(const TensorField<T>& state, const SimGrid& g, Volume* x,
                  TensorField<T>* memory) {
  if (x) *x = field_channel_to_volume(state, 0, g);
  if (memory) *memory = slice_channels(state, 1, state.channels);
}

// ---------------------------------------------------------------------------
// One unrolled iteration
// ---------------------------------------------------------------------------

template <typename T>
struct StepResult {
  Volume x_next;
  TensorField<T> s_next;
  Volume gradient;  // misfit gradient at the incoming estimate
  double misfit = 0.0;
};

// Computes the data-misfit gradient at x_i (exactly one forward and one
// adjoint solve), stacks (x_i, s_i), and runs the stage with the gradient as
// conditioning input.
template <typename T>
StepResult<T> unrolled_step(const Volume& x_i, const TensorField<T>& s_i,
                            const Traces& y_obs, const WaveOperator& op,
                            const StageParams<T>& stage) {
  StepResult<T> r;
  r.gradient = op.misfit_gradient(x_i, y_obs, &r.misfit);
  const TensorField<T> state = pack_state<T>(x_i, s_i);
  const TensorField<T> cond = volume_to_field<T>(r.gradient);
  const TensorField<T> out = stage_forward(state, cond, stage);
  unpack_state(out, op.grid(), &r.x_next, &r.s_next);
  return r;
}

// ---------------------------------------------------------------------------
// Full reconstruction
// ---------------------------------------------------------------------------

template <typename T>
struct ReconstructionPlan {
  std::vector<StageParams<T>> stages;  // applied in order; x0 = 0, s0 = 0

  int n_stages() const { return static_cast<int>(stages.size()); }

  void validate() const {
    if (stages.empty()) {
      fail(ErrorCode::config, "reconstruction plan has no stages");
    }
    for (const auto& s : stages) {
      if (s.spec.state_channels != stages[0].spec.state_channels ||
          s.rank != stages[0].rank) {
        fail(ErrorCode::config, "stages disagree on the state layout");
      }
    }
  }
};

struct ReconstructionDiagnostics {
  std::vector<double> stage_misfits;  // data misfit at each stage's input
  Volume first_gradient;              // gradient injected into stage 0
  std::uint64_t pde_solves = 0;       // total solves consumed (2 per stage)
};

template <typename T>
Volume reconstruct(const Traces& y_obs, const WaveOperator& op,
                   const ReconstructionPlan<T>& plan,
                   ReconstructionDiagnostics* diag = nullptr) {
  plan.validate();
  const std::uint64_t solves_before = op.counter().total();
  Volume x = Volume::zeros(op.grid());
  TensorField<T> s =
      make_memory<T>(op.grid(), plan.stages[0].spec.state_channels - 1);
  for (int i = 0; i < plan.n_stages(); ++i) {
    StepResult<T> r = unrolled_step(x, s, y_obs, op, plan.stages[i]);
    if (diag) {
      diag->stage_misfits.push_back(r.misfit);
      if (i == 0) diag->first_gradient = r.gradient;
    }
    x = std::move(r.x_next);
    s = std::move(r.s_next);
  }
  if (diag) diag->pde_solves = op.counter().total() - solves_before;
  return x;
}

// ---------------------------------------------------------------------------
// Greedy stagewise training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs_per_stage = 0;  // 0 keeps the identity initialization
  int batch_size = 1;
  std::uint64_t seed = 0;
  // loss is mean squared error against ground truth; no other option.

  void validate() const {
    if (!(learning_rate > 0)) {
      fail(ErrorCode::config, "learning_rate must be positive");
    }
    if (!(adam_beta1 > 0 && adam_beta1 < 1) ||
        !(adam_beta2 > 0 && adam_beta2 < 1)) {
      fail(ErrorCode::config, "adam betas must lie in (0, 1)");
    }
    if (!(adam_eps > 0)) fail(ErrorCode::config, "adam_eps must be positive");
    if (epochs_per_stage < 0) {
      fail(ErrorCode::config, "epochs_per_stage must be nonnegative");
    }
    if (batch_size < 1) fail(ErrorCode::config, "batch_size must be positive");
  }
};

// A training sample frozen at a stage boundary: everything the inner loop
// needs, with the PDE work already done.
template <typename T>
struct SampleRecord {
  Volume ground_truth;
  Volume x_i;
  TensorField<T> s_i;
  Volume g_i;  // misfit gradient at x_i under the recorded acquisition
  int sample_id = 0;
  int stage_index = 0;
  std::uint64_t solve_tally = 0;  // operator tally when the record was made
};

// Rolls every sample through the frozen stages 0..i-1 and records
// (x_i, s_i, g_i). All PDE solves for stage i's training happen here:
// 2 * (i + 1) per sample. `state_channels` fixes the memory layout (it must
// match the frozen stages when there are any).
template <typename T>
std::vector<SampleRecord<T>> make_stage_dataset(
    const std::vector<Volume>& ground_truth, const std::vector<Traces>& y_obs,
    const WaveOperator& op, const std::vector<StageParams<T>>& frozen,
    int state_channels) {
  if (ground_truth.size() != y_obs.size()) {
    fail(ErrorCode::check, "sample lists disagree in length");
  }
  if (!frozen.empty() && frozen[0].spec.state_channels != state_channels) {
    fail(ErrorCode::check, "frozen stages disagree with the state layout");
  }
  const int stage_index = static_cast<int>(frozen.size());
  std::vector<SampleRecord<T>> records;
  records.reserve(ground_truth.size());
  for (std::size_t s = 0; s < ground_truth.size(); ++s) {
    SampleRecord<T> rec;
    rec.sample_id = static_cast<int>(s);
    rec.stage_index = stage_index;
    rec.ground_truth = ground_truth[s];
    rec.x_i = Volume::zeros(op.grid());
    rec.s_i = make_memory<T>(op.grid(), state_channels - 1);
    for (const auto& stage : frozen) {
      StepResult<T> step = unrolled_step(rec.x_i, rec.s_i, y_obs[s], op, stage);
      rec.x_i = std::move(step.x_next);
      rec.s_i = std::move(step.s_next);
    }
    rec.g_i = op.misfit_gradient(rec.x_i, y_obs[s]);
    rec.solve_tally = op.counter().total();
    records.push_back(std::move(rec));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Adam on flat parameter vectors (layout = flatten_params order)
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  std::vector<T> m;  // first moments
  std::vector<T> v;  // second moments
  long step = 0;

  static AdamState zeros(std::size_t n) {
    AdamState s;
    s.m.assign(n, T(0));
    s.v.assign(n, T(0));
    return s;
  }
};

template <typename T>
void adam_update(std::vector<T>& params, const std::vector<T>& grads,
                 AdamState<T>& opt, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != opt.m.size() ||
      params.size() != opt.v.size()) {
    fail(ErrorCode::check, "adam state shape mismatch");
  }
  ++opt.step;
  const T b1 = static_cast<T>(cfg.adam_beta1);
  const T b2 = static_cast<T>(cfg.adam_beta2);
  const T lr = static_cast<T>(cfg.learning_rate);
  const T eps = static_cast<T>(cfg.adam_eps);
  const T bc1 = T(1) - static_cast<T>(std::pow(cfg.adam_beta1, opt.step));
  const T bc2 = T(1) - static_cast<T>(std::pow(cfg.adam_beta2, opt.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.m[i] = b1 * opt.m[i] + (T(1) - b1) * grads[i];
    opt.v[i] = b2 * opt.v[i] + (T(1) - b2) * grads[i] * grads[i];
    const T mhat = opt.m[i] / bc1;
    const T vhat = opt.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

// ---------------------------------------------------------------------------
// Per-stage training loop
// ---------------------------------------------------------------------------

struct TrainStageResult {
  std::vector<double> loss_history;   // mean loss per epoch
  std::vector<double> epoch_seconds;  // informational wall time
};

namespace detail {

// Loss and upstream gradient for one record: MSE between the stage's
// x-output (channel 0) and the ground truth.
template <typename T>
double record_loss_grad(const TensorField<T>& out, const Volume& gt,
                        TensorField<T>* grad_out) {
  const std::size_t n = out.spatial_size();
  const T* x = out.channel(0);
  double acc = 0.0;
  if (grad_out) *grad_out = TensorField<T>::zeros(out.channels, out.rank, out.dims);
  T* g = grad_out ? grad_out->channel(0) : nullptr;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - gt.values[i];
    acc += d * d;
    if (g) g[i] = static_cast<T>(2.0 * d * inv_n);
  }
  return acc * inv_n;
}

}  // namespace detail

// Mean loss of a stage over records without touching parameters.
template <typename T>
double stage_loss(const std::vector<SampleRecord<T>>& records,
                  const StageParams<T>& stage) {
  if (records.empty()) fail(ErrorCode::check, "no records to evaluate");
  double acc = 0.0;
  for (const auto& rec : records) {
    const TensorField<T> state = pack_state<T>(rec.x_i, rec.s_i);
    const TensorField<T> cond = volume_to_field<T>(rec.g_i);
    const TensorField<T> out = stage_forward(state, cond, stage);
    acc += detail::record_loss_grad<T>(out, rec.ground_truth, nullptr);
  }
  return acc / static_cast<double>(records.size());
}

// Adam on per-batch mean gradients over a deterministic seeded shuffle.
// Records stay fixed (physics happens in make_stage_dataset); gradients flow
// through stage_backward only. Aborts with a numeric error on NaN loss.
template <typename T>
TrainStageResult train_stage(const std::vector<SampleRecord<T>>& records,
                             StageParams<T>& stage, const TrainConfig& cfg) {
  cfg.validate();
  if (records.empty()) fail(ErrorCode::check, "no training records");
  TrainStageResult result;
  std::vector<T> flat = flatten_params(stage);
  AdamState<T> opt = AdamState<T>::zeros(flat.size());

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(
          shuffle_rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t batch_end =
          std::min(done + static_cast<std::size_t>(cfg.batch_size),
                   order.size());
      std::vector<T> batch_grad(flat.size(), T(0));
      for (std::size_t b = done; b < batch_end; ++b) {
        const SampleRecord<T>& rec = records[order[b]];
        const TensorField<T> state = pack_state<T>(rec.x_i, rec.s_i);
        const TensorField<T> cond = volume_to_field<T>(rec.g_i);
        const TensorField<T> out = stage_forward(state, cond, stage);
        TensorField<T> grad_out;
        epoch_loss +=
            detail::record_loss_grad<T>(out, rec.ground_truth, &grad_out);
        StageBackwardResult<T> back =
            stage_backward(out, grad_out, cond, stage);
        const std::vector<T> g = flatten_params(back.param_grads);
        for (std::size_t k = 0; k < g.size(); ++k) batch_grad[k] += g[k];
      }
      const T inv = T(1) / static_cast<T>(batch_end - done);
      for (T& g : batch_grad) g *= inv;
      adam_update(flat, batch_grad, opt, cfg);
      unflatten_params(stage, flat);
      done = batch_end;
    }
    epoch_loss /= static_cast<double>(records.size());
    if (!std::isfinite(epoch_loss)) {
      fail(ErrorCode::numeric,
           "training loss became non-finite at epoch " +
               std::to_string(epoch));
    }
    result.loss_history.push_back(epoch_loss);
    result.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count());
  }
  return result;
}

}  // namespace pai
