#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "pai/dataset.hpp"
#include "pai/errors.hpp"
#include "pai/io.hpp"
#include "pai/metrics.hpp"
#include "pai/phantom.hpp"
#include "pai/rng.hpp"
#include "pai/wave.hpp"

using namespace pai;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    const auto tick =
        std::chrono::steady_clock::now().time_since_epoch().count();
    path = fs::temp_directory_path() /
           ("pai_test_" + std::to_string(tick % 1000000) + "_" +
            std::to_string(counter.fetch_add(1)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SimGrid phantom_grid() {
  SimGrid g;
  g.nx = 32;
  g.ny = 1;
  g.nz = 32;
  g.dx = 1e-3;
  g.dt = 4.5e-7;
  g.nt = 16;
  g.c = 1500.0;
  g.sponge_width = 4;
  g.sponge_strength = 0.05;
  return SimGrid::validated(g);
}

}  // namespace

TEST_CASE("phantoms are deterministic, bounded, and sparse") {
  const SimGrid g = phantom_grid();
  PhantomSpec spec;
  // Walker centers stay sponge_width + 2 cells off the boundary and the
  // Gaussian stamp cuts off at 1.5 radii, so everything beyond that reach
  // is exact background.
  const int reach = g.sponge_width + 2 -
                    static_cast<int>(std::ceil(1.5 * spec.radius_max));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = seed;
    const Volume v = gen_phantom(g, spec);
    const Volume again = gen_phantom(g, spec);
    CHECK(v.values == again.values);

    double peak = 0.0;
    std::size_t nonzero = 0;
    for (double x : v.values) {
      CHECK(x >= 0.0);
      CHECK(x <= spec.intensity_max);
      peak = std::max(peak, x);
      if (x != 0.0) ++nonzero;
    }
    // The brightest voxel is a vessel core, so it carries a full intensity.
    CHECK(peak >= spec.intensity_min);
    const double frac =
        static_cast<double>(nonzero) / static_cast<double>(v.size());
    CHECK(frac > 0.0);
    CHECK(frac < 0.5);

    // Outside the walkers' reach the background is exactly zero.
    for (int i = 0; i < g.nx; ++i) {
      for (int k = 0; k < g.nz; ++k) {
        if (i >= reach && i <= g.nx - 1 - reach && k >= reach &&
            k <= g.nz - 1 - reach) {
          continue;
        }
        CHECK(v.at(i, 0, k) == 0.0);
      }
    }
  }
}

TEST_CASE("phantom spec validation") {
  PhantomSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.radius_min = 3.0;  // > radius_max
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = PhantomSpec{};
  spec.n_vessels = -1;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.n_vessels = 0;  // legal: renders an all-zero volume
  CHECK_NOTHROW(spec.validate());
  const Volume empty = gen_phantom(phantom_grid(), spec);
  for (double x : empty.values) CHECK(x == 0.0);
  spec = PhantomSpec{};
  spec.intensity_min = -0.1;
  CHECK_THROWS_AS(spec.validate(), Error);

  // Interior too small for the largest vessel radius.
  SimGrid g = phantom_grid();
  g.nx = 20;
  g.nz = 20;
  g.sponge_width = 8;
  try {
    gen_phantom(SimGrid::validated(g), PhantomSpec{});
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config);
  }
}

TEST_CASE("f64 files round trip exactly") {
  TempDir tmp;
  const fs::path p = tmp.path / "a.f64";
  const std::vector<double> values = {0.0, -1.5, 3.25e300, 5e-324,
                                      -0.0, 1.0 / 3.0};
  write_f64(p, values, {3, 2});

  const ArrayF64 back = read_f64(p);
  CHECK(back.shape == std::vector<int>{3, 2});
  REQUIRE(back.values.size() == values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    CHECK(std::memcmp(&back.values[i], &values[i], sizeof(double)) == 0);
  }

  SUBCASE("missing sidecar is an i/o error") {
    fs::remove(tmp.path / "a.f64.meta.json");
    try {
      read_f64(p);
      FAIL("expected an i/o error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io);
    }
  }
  SUBCASE("payload size must match the sidecar shape") {
    std::ofstream f(p, std::ios::binary | std::ios::app);
    f.write("xxxxxxxx", 8);
    f.close();
    CHECK_THROWS_AS(read_f64(p), Error);
  }
  SUBCASE("missing file is an i/o error") {
    try {
      read_f64(tmp.path / "nope.f64");
      FAIL("expected an i/o error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io);
    }
  }
}

TEST_CASE("checksums follow FNV-1a and detect corruption") {
  TempDir tmp;
  const fs::path p = tmp.path / "x.bin";
  atomic_write_text(p, "");
  CHECK(file_checksum(p) == "cbf29ce484222325");  // FNV-1a offset basis
  atomic_write_text(p, "a");
  CHECK(file_checksum(p) == "af63dc4c8601ec8c");

  atomic_write_text(p, "some payload bytes");
  const std::string before = file_checksum(p);
  atomic_write_text(p, "some payload bytez");
  CHECK(file_checksum(p) != before);
}

TEST_CASE("pgm export quantizes and round trips") {
  TempDir tmp;
  Image img;
  img.rows = 2;
  img.cols = 2;
  img.values = {0.0, 1.0, 0.5, 1.0};

  SUBCASE("minmax") {
    const fs::path p = tmp.path / "m.pgm";
    export_pgm(img, p, PgmNormalization::minmax);
    const PgmImage back = read_pgm(p);
    REQUIRE(back.rows == 2);
    REQUIRE(back.cols == 2);
    CHECK(back.samples == std::vector<std::uint16_t>{0, 65535, 32768, 65535});

    // Big-endian sample bytes.
    std::ifstream f(p, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
    const std::size_t data = all.size() - 8;
    CHECK(static_cast<unsigned char>(all[data + 2]) == 0xff);
    CHECK(static_cast<unsigned char>(all[data + 3]) == 0xff);
    CHECK(static_cast<unsigned char>(all[data + 4]) == 0x80);
    CHECK(static_cast<unsigned char>(all[data + 5]) == 0x00);

    const std::string note = read_text(p.string() + ".norm.txt");
    CHECK(note.find("minmax") != std::string::npos);
  }
  SUBCASE("fixed peak") {
    const fs::path p = tmp.path / "f.pgm";
    export_pgm(img, p, PgmNormalization::fixed, 2.0);
    const PgmImage back = read_pgm(p);
    CHECK(back.samples == std::vector<std::uint16_t>{0, 32768, 16384, 32768});
    const std::string note = read_text(p.string() + ".norm.txt");
    CHECK(note.find("fixed") != std::string::npos);
    CHECK(note.find("2") != std::string::npos);
  }
  SUBCASE("values beyond the peak clamp") {
    const fs::path p = tmp.path / "c.pgm";
    export_pgm(img, p, PgmNormalization::fixed, 0.5);
    const PgmImage back = read_pgm(p);
    CHECK(back.samples == std::vector<std::uint16_t>{0, 65535, 65535, 65535});
  }
  SUBCASE("a constant image maps to zeros") {
    Image flat;
    flat.rows = 1;
    flat.cols = 3;
    flat.values = {0.7, 0.7, 0.7};
    const fs::path p = tmp.path / "z.pgm";
    export_pgm(flat, p, PgmNormalization::minmax);
    const PgmImage back = read_pgm(p);
    CHECK(back.samples == std::vector<std::uint16_t>{0, 0, 0});
  }
}

TEST_CASE("mse and psnr") {
  Volume a = Volume::zeros(2, 1, 2);
  Volume b = Volume::zeros(2, 1, 2);
  b.values = {1.0, 1.0, 1.0, 1.0};
  CHECK(mse(a, b) == 1.0);
  CHECK(psnr(a, b, 1.0) == doctest::Approx(0.0));
  CHECK(psnr(a, b, 2.0) == doctest::Approx(20.0 * std::log10(2.0)));
  CHECK(std::isinf(psnr(a, a, 1.0)));

  b.values = {0.5, 0.0, 0.0, 0.0};
  CHECK(mse(a, b) == doctest::Approx(0.0625));

  CHECK_THROWS_AS(mse(a, Volume::zeros(2, 1, 3)), Error);
}

TEST_CASE("mip and slice extract the documented layouts") {
  Volume v = Volume::zeros(2, 3, 4);
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    v.values[i] = static_cast<double>(i % 7);
  }
  v.at(1, 2, 3) = 50.0;

  const Image mx = mip(v, Axis::X);
  REQUIRE(mx.rows == 3);
  REQUIRE(mx.cols == 4);
  for (int j = 0; j < 3; ++j) {
    for (int k = 0; k < 4; ++k) {
      CHECK(mx.at(j, k) == std::max(v.at(0, j, k), v.at(1, j, k)));
    }
  }

  const Image my = mip(v, Axis::Y);
  REQUIRE(my.rows == 2);
  REQUIRE(my.cols == 4);
  CHECK(my.at(1, 3) == 50.0);

  const Image mz = mip(v, Axis::Z);
  REQUIRE(mz.rows == 2);
  REQUIRE(mz.cols == 3);
  CHECK(mz.at(1, 2) == 50.0);

  // A slice never exceeds the projection.
  for (int k = 0; k < 4; ++k) {
    const Image s = slice(v, Axis::Z, k);
    REQUIRE(s.rows == 2);
    REQUIRE(s.cols == 3);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 3; ++j) {
        CHECK(s.at(i, j) <= mz.at(i, j));
        CHECK(s.at(i, j) == v.at(i, j, k));
      }
    }
  }

  CHECK_THROWS_AS(slice(v, Axis::Z, 4), Error);
  CHECK_THROWS_AS(slice(v, Axis::X, -1), Error);
}

TEST_CASE("dataset simulation round trips through the loader") {
  TempDir tmp;
  const SimGrid g = phantom_grid();
  const ReceiverGeometry geom =
      make_subsampled_geometry(g, 4, SubsampleScheme::per_axis);
  NoiseSpec noise;
  noise.seed = 5;
  PhantomSpec phantom;
  phantom.seed = 6;

  const DatasetManifest manifest =
      simulate_dataset(3, g, geom, noise, phantom, tmp.path);
  CHECK(manifest.n_samples == 3);
  CHECK(manifest.forward_solves == 3);
  REQUIRE(manifest.samples.size() == 3);

  const LoadedDataset loaded = load_dataset(tmp.path);
  CHECK(loaded.manifest.n_samples == 3);
  CHECK(loaded.geometry.active_count() == geom.active_count());
  REQUIRE(loaded.ground_truth.size() == 3);
  REQUIRE(loaded.traces.size() == 3);

  // Loader output equals a direct regeneration, bit for bit.
  const WaveOperator op(g, geom);
  for (int s = 0; s < 3; ++s) {
    PhantomSpec ps = phantom;
    ps.seed = mix_seed(phantom.seed, 2 * static_cast<std::uint64_t>(s));
    const Volume gt = gen_phantom(g, ps);
    CHECK(loaded.ground_truth[s].values == gt.values);
    NoiseSpec ns = noise;
    ns.seed = mix_seed(noise.seed, 2 * static_cast<std::uint64_t>(s) + 1);
    const Traces y = add_noise(op.forward(gt), ns);
    CHECK(loaded.traces[s].values == y.values);
  }

  SUBCASE("manifest json round trips") {
    const DatasetManifest back =
        DatasetManifest::from_json(manifest.to_json());
    CHECK(back.n_samples == manifest.n_samples);
    CHECK(back.grid.nx == g.nx);
    CHECK(back.grid.dt == g.dt);
    CHECK(back.subsample_factor == 4);
    CHECK(to_string(back.scheme) == "per_axis");
    CHECK(back.samples[2].gt_checksum == manifest.samples[2].gt_checksum);
    CHECK(back.forward_solves == 3);
  }

  SUBCASE("corrupting a payload byte is caught at load") {
    const fs::path victim = tmp.path / manifest.samples[1].traces_file;
    std::fstream f(victim,
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(16);
    char b;
    f.seekg(16);
    f.read(&b, 1);
    b = static_cast<char>(b ^ 0x40);
    f.seekp(16);
    f.write(&b, 1);
    f.close();
    try {
      load_dataset(tmp.path);
      FAIL("expected an i/o error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io);
    }
  }

  SUBCASE("a missing output directory is a config error naming the path") {
    try {
      simulate_dataset(1, g, geom, noise, phantom, tmp.path / "absent");
      FAIL("expected a config error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::config);
      CHECK(std::string(e.what()).find("absent") != std::string::npos);
    }
  }
}

TEST_CASE("threaded simulation matches single-threaded output") {
  TempDir a, b;
  const SimGrid g = phantom_grid();
  const ReceiverGeometry geom =
      make_subsampled_geometry(g, 4, SubsampleScheme::per_axis);
  NoiseSpec noise;
  noise.seed = 9;
  PhantomSpec phantom;
  phantom.seed = 10;

  simulate_dataset(4, g, geom, noise, phantom, a.path, 1);
  simulate_dataset(4, g, geom, noise, phantom, b.path, 3);
  for (int s = 0; s < 4; ++s) {
    const std::string gt = "sample_" + std::to_string(s) + "_gt.f64";
    const std::string tr = "sample_" + std::to_string(s) + "_traces.f64";
    CHECK(file_checksum(a.path / gt) == file_checksum(b.path / gt));
    CHECK(file_checksum(a.path / tr) == file_checksum(b.path / tr));
  }
}
