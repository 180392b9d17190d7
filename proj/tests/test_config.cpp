#include <functional>
#include <string>

#include "doctest.h"
#include "pai/config.hpp"
#include "pai/errors.hpp"

using namespace pai;

namespace {

std::string message_of(ErrorCode want, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    CHECK(e.code() == want);
    return e.what();
  }
  FAIL("expected an error");
  return {};
}

}  // namespace

TEST_CASE("defaults validate and round trip through json") {
  const RunConfig cfg = RunConfig::defaults();
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.grid.nx == 64);
  CHECK(cfg.grid.ny == 1);
  CHECK(cfg.subsample_factor == 4);
  CHECK(cfg.snr_db == 10.0);
  CHECK(cfg.n_stages == 1);

  const RunConfig back = RunConfig::from_json_text(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("an empty document keeps the defaults") {
  const RunConfig cfg = RunConfig::from_json_text("{}");
  CHECK(cfg.to_json() == RunConfig::defaults().to_json());
}

TEST_CASE("unknown keys are rejected with their dotted path") {
  const std::string msg = message_of(ErrorCode::config, [] {
    RunConfig::from_json_text(R"({"grid": {"nxx": 3}})");
  });
  CHECK(msg.find("grid.nxx") != std::string::npos);

  const std::string top = message_of(ErrorCode::config, [] {
    RunConfig::from_json_text(R"({"grids": {}})");
  });
  CHECK(top.find("grids") != std::string::npos);
}

TEST_CASE("parse errors report the line") {
  const std::string msg = message_of(ErrorCode::config, [] {
    RunConfig::from_json_text("{\n  \"grid\": {\n  oops\n}\n}");
  });
  CHECK(msg.find("line 3") != std::string::npos);
}

TEST_CASE("overrides") {
  RunConfig cfg = RunConfig::defaults();
  cfg.apply_override("grid.nx=128");
  CHECK(cfg.grid.nx == 128);
  cfg.apply_override("train.learning_rate=5e-4");
  CHECK(cfg.train.learning_rate == 5e-4);
  cfg.apply_override("geometry.scheme=total");
  CHECK(cfg.scheme == SubsampleScheme::total);
  cfg.apply_override("network.squeeze_before=[2,3]");
  CHECK(cfg.network.squeeze_before == std::vector<int>{2, 3});
  cfg.apply_override("paths.dataset_dir=/tmp/somewhere");
  CHECK(cfg.dataset_dir == std::filesystem::path("/tmp/somewhere"));
  cfg.apply_override("seed=42");
  CHECK(cfg.seed == 42);

  CHECK_THROWS_AS(cfg.apply_override("no_equals_sign"), Error);
  CHECK_THROWS_AS(cfg.apply_override("grid.bogus=1"), Error);
  CHECK_THROWS_AS(cfg.apply_override("grid.nx=true"), Error);
}

TEST_CASE("validation catches cross-field mistakes") {
  auto expect_config_error = [](RunConfig cfg) {
    try {
      cfg.validate();
      FAIL("expected a config error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::config);
    }
  };

  RunConfig cfg = RunConfig::defaults();
  cfg.grid.dt = 1e-6;  // CFL violation
  expect_config_error(cfg);

  cfg = RunConfig::defaults();
  cfg.network.state_channels = 7;
  expect_config_error(cfg);

  // One squeeze halves the grid once; 64 works, an odd extent does not.
  cfg = RunConfig::defaults();
  cfg.grid.nx = 63;
  expect_config_error(cfg);

  cfg = RunConfig::defaults();
  cfg.n_samples = 0;
  expect_config_error(cfg);

  cfg = RunConfig::defaults();
  cfg.n_stages = 0;
  expect_config_error(cfg);

  cfg = RunConfig::defaults();
  cfg.lsqr.max_iters = 0;
  expect_config_error(cfg);

  cfg = RunConfig::defaults();
  cfg.threads = 0;
  expect_config_error(cfg);

  cfg = RunConfig::defaults();
  cfg.train.batch_size = 0;
  expect_config_error(cfg);

  // 3D with a total scheme needs a perfect-square factor.
  cfg = RunConfig::defaults();
  cfg.grid.ny = 64;
  cfg.grid.dt = 3.8e-7;
  cfg.scheme = SubsampleScheme::total;
  cfg.subsample_factor = 8;
  CHECK_THROWS_AS(cfg.make_geometry(), Error);
  cfg.subsample_factor = 4;
  CHECK_NOTHROW(cfg.make_geometry());
}

TEST_CASE("derived seeds are distinct streams of the global seed") {
  RunConfig cfg = RunConfig::defaults();
  cfg.seed = 17;
  const auto noise = cfg.noise_spec();
  const auto phantom = cfg.phantom_spec();
  CHECK(noise.snr_db == cfg.snr_db);
  CHECK(noise.seed != phantom.seed);
  CHECK(noise.seed != cfg.train_seed());
  CHECK(phantom.seed != cfg.train_seed());
  CHECK(cfg.stage_init_seed(0) != cfg.stage_init_seed(1));

  RunConfig other = cfg;
  other.seed = 18;
  CHECK(other.noise_spec().seed != noise.seed);
  CHECK(other.phantom_spec().seed != phantom.seed);

  RunConfig same = cfg;
  CHECK(same.noise_spec().seed == noise.seed);
}

TEST_CASE("missing config files are i/o errors") {
  try {
    RunConfig::from_file("/nonexistent/config.json");
    FAIL("expected an i/o error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::io);
  }
}

TEST_CASE("geometry derivation matches the grid") {
  RunConfig cfg = RunConfig::defaults();
  const ReceiverGeometry geom = cfg.make_geometry();
  CHECK(geom.active_count() == 16);  // 64 / 4 on the single lateral axis
  CHECK(geom.plane_k == cfg.grid.sponge_width);
}
