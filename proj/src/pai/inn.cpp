#include "pai/inn.hpp"

#include <algorithm>

namespace pai {

std::vector<StagePlanStep> resolve_stage_plan(const StageSpec& spec,
                                              int rank) {
  if (rank != 2 && rank != 3) {
    fail(ErrorCode::config, "stage rank must be 2 or 3");
  }
  if (spec.n_layers < 1) {
    fail(ErrorCode::config, "stage needs at least one coupling layer");
  }
  if (spec.state_channels < 2 || spec.state_channels % 2 != 0) {
    fail(ErrorCode::config, "state_channels must be even and >= 2");
  }
  if (spec.cond_channels < 1) {
    fail(ErrorCode::config, "cond_channels must be positive");
  }
  if (spec.hidden_channels < 1) {
    fail(ErrorCode::config, "hidden_channels must be positive");
  }
  if (spec.kernel_size < 1 || spec.kernel_size % 2 == 0) {
    fail(ErrorCode::config, "kernel_size must be odd and positive");
  }
  auto check_positions = [&](const std::vector<int>& v, const char* what) {
    for (int p : v) {
      if (p < 0 || p > spec.n_layers) {
        fail(ErrorCode::config,
             std::string(what) + " position out of [0, n_layers]");
      }
    }
  };
  check_positions(spec.squeeze_before, "squeeze_before");
  check_positions(spec.unsqueeze_before, "unsqueeze_before");
  for (int p : spec.squeeze_before) {
    if (std::count(spec.unsqueeze_before.begin(), spec.unsqueeze_before.end(),
                   p) > 0) {
      fail(ErrorCode::config,
           "squeeze and unsqueeze scheduled at the same position");
    }
  }

  const int factor = rank == 2 ? 4 : 8;
  std::vector<StagePlanStep> plan;
  int c = spec.state_channels;
  int cc = spec.cond_channels;
  int depth = 0;  // net squeezes applied so far
  for (int pos = 0; pos <= spec.n_layers; ++pos) {
    const auto sq = std::count(spec.squeeze_before.begin(),
                               spec.squeeze_before.end(), pos);
    const auto un = std::count(spec.unsqueeze_before.begin(),
                               spec.unsqueeze_before.end(), pos);
    for (long i = 0; i < sq; ++i) {
      plan.push_back({StageOpKind::squeeze, -1, c, cc});
      c *= factor;
      cc *= factor;
      ++depth;
    }
    for (long i = 0; i < un; ++i) {
      if (depth == 0) {
        fail(ErrorCode::config, "unsqueeze scheduled below the base scale");
      }
      c /= factor;
      cc /= factor;
      --depth;
      plan.push_back({StageOpKind::unsqueeze, -1, c * factor, cc * factor});
    }
    if (pos < spec.n_layers) {
      if (c % 2 != 0) {
        fail(ErrorCode::config, "odd channel count at a coupling layer");
      }
      plan.push_back({StageOpKind::coupling, pos, c, cc});
    }
  }
  if (depth != 0) {
    fail(ErrorCode::config,
         "squeeze plan does not return the stage to its base scale");
  }
  return plan;
}

}  // namespace pai
