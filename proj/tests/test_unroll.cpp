#include <cmath>
#include <vector>

#include "doctest.h"
#include "pai/errors.hpp"
#include "pai/rng.hpp"
#include "pai/unroll.hpp"
#include "test_helpers.hpp"

using namespace pai;
using pai_test::random_stage;

namespace {

SimGrid toy_grid() {
  SimGrid g;
  g.nx = 8;
  g.ny = 1;
  g.nz = 8;
  g.dx = 1.0;
  g.c = 1.0;
  g.dt = 0.5;
  g.nt = 12;
  g.sponge_width = 2;
  g.sponge_strength = 0.1;
  return SimGrid::validated(g);
}

StageSpec toy_spec() {
  StageSpec spec;
  spec.state_channels = 4;
  spec.cond_channels = 1;
  spec.n_layers = 2;
  spec.hidden_channels = 6;
  return spec;
}

Volume random_volume(const SimGrid& g, std::uint64_t seed) {
  Volume v = Volume::zeros(g);
  Rng rng(seed);
  for (double& x : v.values) x = rng.uniform(0.0, 1.0);
  return v;
}

double half_sq_norm(const Traces& y) {
  double acc = 0.0;
  for (double v : y.values) acc += v * v;
  return 0.5 * acc;
}

}  // namespace

TEST_CASE("adam takes the textbook first step") {
  std::vector<double> params = {1.0, -2.0};
  const std::vector<double> grads = {0.5, -0.25};
  AdamState<double> opt = AdamState<double>::zeros(2);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;

  adam_update(params, grads, opt, cfg);
  // Bias correction makes the first step lr * sign(g) up to eps.
  CHECK(params[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
  CHECK(params[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-6));
  CHECK(opt.step == 1);

  // Zero gradient from a fresh state leaves parameters untouched (with
  // accumulated momentum it would keep drifting).
  AdamState<double> fresh = AdamState<double>::zeros(2);
  std::vector<double> frozen = params;
  adam_update(params, {0.0, 0.0}, fresh, cfg);
  CHECK(params == frozen);
}

TEST_CASE("adam rejects mismatched shapes") {
  std::vector<double> params = {1.0};
  AdamState<double> opt = AdamState<double>::zeros(2);
  TrainConfig cfg;
  CHECK_THROWS_AS(adam_update(params, {0.0}, opt, cfg), Error);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.adam_beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.epochs_per_stage = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("state packing puts the estimate in channel 0") {
  const SimGrid g = toy_grid();
  const Volume x = random_volume(g, 1);
  const TensorField<float> mem = pai_test::random_field<float>(
      3, 2, {g.nx, g.nz, 1}, 2);
  const TensorField<float> state = pack_state<float>(x, mem);
  REQUIRE(state.channels == 4);

  Volume x2;
  TensorField<float> mem2;
  unpack_state(state, g, &x2, &mem2);
  CHECK(mem2.values == mem.values);
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    CHECK(x2.values[i] == static_cast<double>(static_cast<float>(x.values[i])));
  }
}

TEST_CASE("an identity stage leaves the estimate unchanged") {
  const SimGrid g = toy_grid();
  const WaveOperator op(g, make_full_geometry(g));
  const auto stage = init_params<float>(toy_spec(), 2, 3);  // conv2 == 0

  const Volume x = random_volume(g, 4);
  const TensorField<float> s = make_memory<float>(g, 3);
  const Traces y = op.forward(random_volume(g, 5));

  const std::uint64_t before = op.counter().total();
  const StepResult<float> r = unrolled_step(x, s, y, op, stage);
  CHECK(op.counter().total() - before == 2);
  CHECK(op.forward_count() - 1 == 1);  // one from data generation

  for (std::size_t i = 0; i < x.values.size(); ++i) {
    CHECK(r.x_next.values[i] ==
          static_cast<double>(static_cast<float>(x.values[i])));
  }
  for (float v : r.s_next.values) CHECK(v == 0.0f);
}

TEST_CASE("reconstruct from an identity plan returns zeros with exact accounting") {
  const SimGrid g = toy_grid();
  const WaveOperator op(g, make_subsampled_geometry(
                               g, 2, SubsampleScheme::per_axis));
  const Traces y = add_noise(op.forward(random_volume(g, 6)),
                             NoiseSpec{10.0, 7});

  ReconstructionPlan<float> plan;
  for (int i = 0; i < 3; ++i) {
    plan.stages.push_back(init_params<float>(toy_spec(), 2, 10 + i));
  }

  const std::uint64_t before = op.counter().total();
  ReconstructionDiagnostics diag;
  const Volume x = reconstruct(y, op, plan, &diag);

  CHECK(diag.pde_solves == 6);
  CHECK(op.counter().total() - before == 6);
  for (double v : x.values) CHECK(v == 0.0);

  // Every stage sees x = 0, so every misfit is half the data norm and the
  // first gradient is the negated adjoint image.
  const double want = half_sq_norm(y);
  REQUIRE(diag.stage_misfits.size() == 3);
  for (double m : diag.stage_misfits) {
    CHECK(m == doctest::Approx(want).epsilon(1e-12));
  }
  const Volume aty = op.adjoint(y);
  for (std::size_t i = 0; i < aty.values.size(); ++i) {
    CHECK(diag.first_gradient.values[i] == -aty.values[i]);
  }
}

TEST_CASE("an empty plan is rejected") {
  ReconstructionPlan<float> plan;
  CHECK_THROWS_AS(plan.validate(), Error);
}

TEST_CASE("stage dataset accounting") {
  const SimGrid g = toy_grid();
  const WaveOperator op(g, make_full_geometry(g));

  std::vector<Volume> gts;
  std::vector<Traces> ys;
  for (int i = 0; i < 3; ++i) {
    gts.push_back(random_volume(g, 20 + i));
    ys.push_back(op.forward(gts.back()));
  }
  const std::uint64_t data_solves = op.counter().total();
  CHECK(data_solves == 3);

  SUBCASE("stage 0 records cost 2 solves per sample") {
    const auto records = make_stage_dataset<float>(gts, ys, op, {}, 4);
    REQUIRE(records.size() == 3);
    CHECK(op.counter().total() - data_solves == 6);
    for (const auto& rec : records) {
      for (double v : rec.x_i.values) CHECK(v == 0.0);
      for (float v : rec.s_i.values) CHECK(v == 0.0f);
      CHECK(rec.stage_index == 0);
      // g_0 = A^T(A*0 - y) = -A^T y.
      const Volume aty = op.adjoint(ys[rec.sample_id]);
      for (std::size_t i = 0; i < aty.values.size(); ++i) {
        CHECK(rec.g_i.values[i] == -aty.values[i]);
      }
    }
  }

  SUBCASE("stage 1 records cost 4 solves per sample") {
    std::vector<StageParams<float>> frozen = {
        random_stage<float>(toy_spec(), 2, 30)};
    const auto records = make_stage_dataset<float>(gts, ys, op, frozen, 4);
    CHECK(op.counter().total() - data_solves == 12);
    for (const auto& rec : records) CHECK(rec.stage_index == 1);
  }

  SUBCASE("mismatched layouts are rejected") {
    std::vector<StageParams<float>> frozen = {
        random_stage<float>(toy_spec(), 2, 31)};
    CHECK_THROWS_AS(make_stage_dataset<float>(gts, ys, op, frozen, 6), Error);
    std::vector<Traces> short_ys(ys.begin(), ys.begin() + 2);
    CHECK_THROWS_AS(make_stage_dataset<float>(gts, short_ys, op, {}, 4),
                    Error);
  }
}

TEST_CASE("training behaves") {
  const SimGrid g = toy_grid();
  const WaveOperator op(g, make_subsampled_geometry(
                               g, 2, SubsampleScheme::per_axis));
  std::vector<Volume> gts;
  std::vector<Traces> ys;
  for (int i = 0; i < 4; ++i) {
    gts.push_back(random_volume(g, 40 + i));
    ys.push_back(add_noise(op.forward(gts.back()), NoiseSpec{10.0, 50u + i}));
  }
  const auto records = make_stage_dataset<float>(gts, ys, op, {}, 4);

  SUBCASE("zero epochs keep the identity initialization") {
    auto stage = init_params<float>(toy_spec(), 2, 60);
    const auto before = flatten_params(stage);
    TrainConfig cfg;
    cfg.epochs_per_stage = 0;
    const auto res = train_stage(records, stage, cfg);
    CHECK(res.loss_history.empty());
    CHECK(flatten_params(stage) == before);
  }

  SUBCASE("identity-stage loss equals the mean squared ground truth") {
    const auto stage = init_params<float>(toy_spec(), 2, 61);
    double want = 0.0;
    for (const auto& rec : records) {
      double acc = 0.0;
      for (double v : rec.ground_truth.values) acc += v * v;
      want += acc / static_cast<double>(rec.ground_truth.values.size());
    }
    want /= static_cast<double>(records.size());
    CHECK(stage_loss(records, stage) == doctest::Approx(want).epsilon(1e-6));
  }

  SUBCASE("training is deterministic and reduces the loss") {
    TrainConfig cfg;
    cfg.epochs_per_stage = 12;
    cfg.batch_size = 2;
    cfg.seed = 70;

    auto stage_a = init_params<float>(toy_spec(), 2, 62);
    const double loss0 = stage_loss(records, stage_a);
    const auto res_a = train_stage(records, stage_a, cfg);
    REQUIRE(res_a.loss_history.size() == 12);
    // The first epoch's mean loss is measured while updates happen, so it
    // sits near but not exactly at the initial loss.
    CHECK(res_a.loss_history.front() == doctest::Approx(loss0).epsilon(0.05));
    CHECK(stage_loss(records, stage_a) < 0.7 * loss0);

    auto stage_b = init_params<float>(toy_spec(), 2, 62);
    const auto res_b = train_stage(records, stage_b, cfg);
    CHECK(flatten_params(stage_a) == flatten_params(stage_b));
    CHECK(res_a.loss_history == res_b.loss_history);

    // A different shuffle seed takes a different path.
    auto stage_c = init_params<float>(toy_spec(), 2, 62);
    auto cfg_c = cfg;
    cfg_c.seed = 71;
    train_stage(records, stage_c, cfg_c);
    CHECK(flatten_params(stage_a) != flatten_params(stage_c));
  }

  SUBCASE("non-finite loss aborts with a numeric error") {
    auto poisoned = records;
    poisoned[0].g_i.values[3] = std::nan("");
    auto stage = random_stage<float>(toy_spec(), 2, 63);
    TrainConfig cfg;
    cfg.epochs_per_stage = 1;
    try {
      train_stage(poisoned, stage, cfg);
      FAIL("expected a numeric error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::numeric);
    }
  }

  SUBCASE("empty record lists are rejected") {
    auto stage = random_stage<float>(toy_spec(), 2, 64);
    TrainConfig cfg;
    CHECK_THROWS_AS(train_stage({}, stage, cfg), Error);
    CHECK_THROWS_AS(stage_loss<float>({}, stage), Error);
  }
}
