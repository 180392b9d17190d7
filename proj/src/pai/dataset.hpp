#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pai/grid.hpp"
#include "pai/phantom.hpp"

namespace pai {

struct DatasetManifest {
  int format_version = 1;
  SimGrid grid;
  int subsample_factor = 1;
  SubsampleScheme scheme = SubsampleScheme::per_axis;
  NoiseSpec noise;
  PhantomSpec phantom;
  int n_samples = 0;
  struct Entry {
    std::string gt_file;
    std::string gt_checksum;
    std::string traces_file;
    std::string traces_checksum;
  };
  std::vector<Entry> samples;
  std::uint64_t forward_solves = 0;  // PDE tally consumed by generation

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

// Generates n samples into out_dir: phantom -> forward -> noise, written as
// sample_<k>_gt.f64 / sample_<k>_traces.f64 with sidecars, manifest.json
// last (atomically). Per-sample seeds derive from the phantom/noise seeds,
// so the result is independent of the thread count. Consumes exactly n
// forward solves. out_dir must already exist.
DatasetManifest simulate_dataset(int n, const SimGrid& grid,
                                 const ReceiverGeometry& geom,
                                 const NoiseSpec& noise,
                                 const PhantomSpec& phantom,
                                 const std::filesystem::path& out_dir,
                                 int threads = 1);

struct LoadedDataset {
  DatasetManifest manifest;
  ReceiverGeometry geometry;
  std::vector<Volume> ground_truth;
  std::vector<Traces> traces;
};

// Reads a dataset directory back, verifying every checksum.
LoadedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace pai
