#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pai/grid.hpp"
#include "pai/inn.hpp"
#include "pai/lsqr.hpp"
#include "pai/phantom.hpp"
#include "pai/unroll.hpp"

namespace pai {

// Everything a command needs, mirrored 1:1 by the JSON config file. Section
// seeds (noise, phantom, training, per-stage init) are derived from the
// single global seed, so one knob reproduces a whole run.
struct RunConfig {
  SimGrid grid;
  int subsample_factor = 4;
  SubsampleScheme scheme = SubsampleScheme::per_axis;
  double snr_db = 10.0;
  PhantomSpec phantom;  // seed filled from the global seed
  int n_samples = 8;
  StageSpec network;
  TrainConfig train;
  int n_stages = 1;
  LsqrOptions lsqr;
  std::filesystem::path dataset_dir = "data";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  int threads = 1;

  // Desk-scale 2D defaults that satisfy every validation rule.
  static RunConfig defaults();

  // Overlays a JSON document onto the defaults. Unknown keys are rejected
  // with their dotted path; parse errors report the line number.
  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_file(const std::filesystem::path& path);

  // Applies a single `dotted.path=json_value` override (CLI --set).
  void apply_override(const std::string& assignment);

  // Full effective config, round-trippable through from_json_text.
  std::string to_json() const;

  // Cross-field validation; every command runs this before heavy work.
  void validate() const;

  // Derived values.
  NoiseSpec noise_spec() const;
  PhantomSpec phantom_spec() const;  // phantom with its derived seed
  std::uint64_t train_seed() const;
  std::uint64_t stage_init_seed(int stage) const;
  ReceiverGeometry make_geometry() const;
};

}  // namespace pai
