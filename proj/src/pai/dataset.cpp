#include "pai/dataset.hpp"

#include <algorithm>
#include <thread>

#include "json.hpp"
#include "pai/errors.hpp"
#include "pai/io.hpp"
#include "pai/rng.hpp"
#include "pai/wave.hpp"

namespace pai {

namespace {

using nlohmann::json;

json grid_to_json(const SimGrid& g) {
  return json{{"nx", g.nx},
              {"ny", g.ny},
              {"nz", g.nz},
              {"dx", g.dx},
              {"dt", g.dt},
              {"nt", g.nt},
              {"c", g.c},
              {"sponge_width", g.sponge_width},
              {"sponge_strength", g.sponge_strength}};
}

SimGrid grid_from_json(const json& j) {
  SimGrid g;
  g.nx = j.at("nx").get<int>();
  g.ny = j.at("ny").get<int>();
  g.nz = j.at("nz").get<int>();
  g.dx = j.at("dx").get<double>();
  g.dt = j.at("dt").get<double>();
  g.nt = j.at("nt").get<int>();
  g.c = j.at("c").get<double>();
  g.sponge_width = j.at("sponge_width").get<int>();
  g.sponge_strength = j.at("sponge_strength").get<double>();
  return SimGrid::validated(g);
}

json phantom_to_json(const PhantomSpec& p) {
  return json{{"n_vessels", p.n_vessels},
              {"radius_min", p.radius_min},
              {"radius_max", p.radius_max},
              {"curvature", p.curvature},
              {"branch_prob", p.branch_prob},
              {"intensity_min", p.intensity_min},
              {"intensity_max", p.intensity_max},
              {"seed", p.seed}};
}

PhantomSpec phantom_from_json(const json& j) {
  PhantomSpec p;
  p.n_vessels = j.at("n_vessels").get<int>();
  p.radius_min = j.at("radius_min").get<double>();
  p.radius_max = j.at("radius_max").get<double>();
  p.curvature = j.at("curvature").get<double>();
  p.branch_prob = j.at("branch_prob").get<double>();
  p.intensity_min = j.at("intensity_min").get<double>();
  p.intensity_max = j.at("intensity_max").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

}  // namespace

std::string DatasetManifest::to_json() const {
  json j;
  j["format_version"] = format_version;
  j["grid"] = grid_to_json(grid);
  j["geometry"] = {{"subsample_factor", subsample_factor},
                   {"scheme", to_string(scheme)}};
  j["noise"] = {{"snr_db", noise.snr_db}, {"seed", noise.seed}};
  j["phantom"] = phantom_to_json(phantom);
  j["n_samples"] = n_samples;
  json list = json::array();
  for (const auto& e : samples) {
    list.push_back({{"gt", e.gt_file},
                    {"gt_checksum", e.gt_checksum},
                    {"traces", e.traces_file},
                    {"traces_checksum", e.traces_checksum}});
  }
  j["samples"] = std::move(list);
  j["forward_solves"] = forward_solves;
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::io, std::string("bad manifest: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1) {
      fail(ErrorCode::io, "unsupported manifest format version");
    }
    m.grid = grid_from_json(j.at("grid"));
    m.subsample_factor = j.at("geometry").at("subsample_factor").get<int>();
    m.scheme = subsample_scheme_from_string(
        j.at("geometry").at("scheme").get<std::string>());
    m.noise.snr_db = j.at("noise").at("snr_db").get<double>();
    m.noise.seed = j.at("noise").at("seed").get<std::uint64_t>();
    m.phantom = phantom_from_json(j.at("phantom"));
    m.n_samples = j.at("n_samples").get<int>();
    for (const auto& e : j.at("samples")) {
      m.samples.push_back({e.at("gt").get<std::string>(),
                           e.at("gt_checksum").get<std::string>(),
                           e.at("traces").get<std::string>(),
                           e.at("traces_checksum").get<std::string>()});
    }
    m.forward_solves = j.at("forward_solves").get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail(ErrorCode::io, std::string("manifest field error: ") + e.what());
  }
  if (static_cast<int>(m.samples.size()) != m.n_samples) {
    fail(ErrorCode::io, "manifest sample list does not match n_samples");
  }
  return m;
}

DatasetManifest simulate_dataset(int n, const SimGrid& grid,
                                 const ReceiverGeometry& geom,
                                 const NoiseSpec& noise,
                                 const PhantomSpec& phantom,
                                 const std::filesystem::path& out_dir,
                                 int threads) {
  if (n < 1) fail(ErrorCode::config, "dataset needs at least one sample");
  phantom.validate();
  if (!std::filesystem::is_directory(out_dir)) {
    fail(ErrorCode::config, "output directory missing: " + out_dir.string());
  }

  const WaveOperator op(grid, geom);
  DatasetManifest m;
  m.grid = grid;
  m.subsample_factor = geom.subsample_factor;
  m.scheme = geom.scheme;
  m.noise = noise;
  m.phantom = phantom;
  m.n_samples = n;
  m.samples.resize(n);

  auto generate = [&](int k) {
    PhantomSpec ps = phantom;
    ps.seed = mix_seed(phantom.seed, static_cast<std::uint64_t>(2 * k));
    const Volume gt = gen_phantom(grid, ps);
    const Traces clean = op.forward(gt);
    NoiseSpec ns = noise;
    ns.seed = mix_seed(noise.seed, static_cast<std::uint64_t>(2 * k + 1));
    const Traces noisy = add_noise(clean, ns);

    auto& entry = m.samples[k];
    entry.gt_file = "sample_" + std::to_string(k) + "_gt.f64";
    entry.traces_file = "sample_" + std::to_string(k) + "_traces.f64";
    write_f64(out_dir / entry.gt_file, gt.values, {grid.nx, grid.ny, grid.nz});
    write_f64(out_dir / entry.traces_file, noisy.values,
              {static_cast<int>(geom.active_count()), grid.nt});
  };

  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int k = 0; k < n; ++k) generate(k);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int k = next.fetch_add(1); k < n; k = next.fetch_add(1)) {
          generate(k);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  for (auto& e : m.samples) {
    e.gt_checksum = file_checksum(out_dir / e.gt_file);
    e.traces_checksum = file_checksum(out_dir / e.traces_file);
  }
  m.forward_solves = op.forward_count();
  atomic_write_text(out_dir / "manifest.json", m.to_json());
  return m;
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  LoadedDataset ds;
  ds.manifest = DatasetManifest::from_json(read_text(dir / "manifest.json"));
  const SimGrid& g = ds.manifest.grid;
  ds.geometry = make_subsampled_geometry(g, ds.manifest.subsample_factor,
                                         ds.manifest.scheme);
  for (const auto& e : ds.manifest.samples) {
    if (file_checksum(dir / e.gt_file) != e.gt_checksum ||
        file_checksum(dir / e.traces_file) != e.traces_checksum) {
      fail(ErrorCode::io, "dataset checksum mismatch for " + e.gt_file);
    }
    const ArrayF64 gt = read_f64(dir / e.gt_file);
    if (gt.shape != std::vector<int>{g.nx, g.ny, g.nz}) {
      fail(ErrorCode::io, "ground-truth shape mismatch in " + e.gt_file);
    }
    Volume v;
    v.nx = g.nx;
    v.ny = g.ny;
    v.nz = g.nz;
    v.values = std::move(gt.values);
    ds.ground_truth.push_back(std::move(v));

    const ArrayF64 tr = read_f64(dir / e.traces_file);
    if (tr.shape !=
        std::vector<int>{static_cast<int>(ds.geometry.active_count()), g.nt}) {
      fail(ErrorCode::io, "traces shape mismatch in " + e.traces_file);
    }
    Traces t = Traces::zeros(ds.geometry, g.nt);
    t.values = std::move(tr.values);
    ds.traces.push_back(std::move(t));
  }
  return ds;
}

}  // namespace pai
