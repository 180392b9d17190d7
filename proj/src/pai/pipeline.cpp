#include "pai/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "json.hpp"
#include "pai/dataset.hpp"
#include "pai/io.hpp"
#include "pai/metrics.hpp"
#include "pai/rng.hpp"

namespace pai {

namespace {

using nlohmann::json;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void require_dir(const std::filesystem::path& p, const char* what) {
  if (!std::filesystem::is_directory(p)) {
    fail(ErrorCode::config,
         std::string(what) + " directory missing: " + p.string());
  }
}

StageSpec spec_of(const RunConfig& cfg) {
  StageSpec spec = cfg.network;
  spec.cond_channels = 1;
  return spec;
}

Volume load_volume(const RunConfig& cfg, const std::filesystem::path& path) {
  const ArrayF64 arr = read_f64(path);
  if (arr.shape != std::vector<int>{cfg.grid.nx, cfg.grid.ny, cfg.grid.nz}) {
    fail(ErrorCode::check,
         "volume " + path.string() + " does not match the configured grid");
  }
  Volume v;
  v.nx = cfg.grid.nx;
  v.ny = cfg.grid.ny;
  v.nz = cfg.grid.nz;
  v.values = std::move(arr.values);
  return v;
}

Traces load_traces(const RunConfig& cfg, const ReceiverGeometry& geom,
                   const std::filesystem::path& path) {
  const ArrayF64 arr = read_f64(path);
  if (arr.shape != std::vector<int>{static_cast<int>(geom.active_count()),
                                    cfg.grid.nt}) {
    fail(ErrorCode::check,
         "traces " + path.string() + " do not match the configured geometry");
  }
  Traces t = Traces::zeros(geom, cfg.grid.nt);
  t.values = std::move(arr.values);
  return t;
}

json spec_to_json(const StageSpec& s) {
  return json{{"state_channels", s.state_channels},
              {"cond_channels", s.cond_channels},
              {"n_layers", s.n_layers},
              {"hidden_channels", s.hidden_channels},
              {"kernel_size", s.kernel_size},
              {"leaky_slope", s.leaky_slope},
              {"squeeze_before", s.squeeze_before},
              {"unsqueeze_before", s.unsqueeze_before}};
}

bool spec_equal(const StageSpec& a, const StageSpec& b) {
  return a.state_channels == b.state_channels &&
         a.cond_channels == b.cond_channels && a.n_layers == b.n_layers &&
         a.hidden_channels == b.hidden_channels &&
         a.kernel_size == b.kernel_size && a.leaky_slope == b.leaky_slope &&
         a.squeeze_before == b.squeeze_before &&
         a.unsqueeze_before == b.unsqueeze_before;
}

StageSpec spec_from_json(const json& j) {
  StageSpec s;
  s.state_channels = j.at("state_channels").get<int>();
  s.cond_channels = j.at("cond_channels").get<int>();
  s.n_layers = j.at("n_layers").get<int>();
  s.hidden_channels = j.at("hidden_channels").get<int>();
  s.kernel_size = j.at("kernel_size").get<int>();
  s.leaky_slope = j.at("leaky_slope").get<double>();
  s.squeeze_before = j.at("squeeze_before").get<std::vector<int>>();
  s.unsqueeze_before = j.at("unsqueeze_before").get<std::vector<int>>();
  return s;
}

std::string stage_file_name(int i) {
  return "stage_" + std::to_string(i) + ".f64";
}

// Writes an evaluation panel set for one volume. 3D volumes get a middle
// slice and a MIP per axis; 2D volumes collapse to the plane itself plus its
// projection.
void write_panels(const Volume& v, const std::filesystem::path& dir,
                  const std::string& stem, PgmNormalization norm,
                  double peak) {
  const bool flat = v.ny == 1;
  const char* axis_names = "xyz";
  const std::vector<Axis> axes =
      flat ? std::vector<Axis>{Axis::Y}
           : std::vector<Axis>{Axis::X, Axis::Y, Axis::Z};
  for (Axis a : axes) {
    const int depth = a == Axis::X ? v.nx : (a == Axis::Y ? v.ny : v.nz);
    const int mid = depth / 2;
    const char axis_name = axis_names[static_cast<int>(a)];
    export_pgm(slice(v, a, mid),
               dir / (stem + "_slice_" + axis_name + std::to_string(mid) +
                      ".pgm"),
               norm, peak);
    export_pgm(mip(v, a), dir / (stem + "_mip_" + axis_name + ".pgm"), norm,
               peak);
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_plan(const std::filesystem::path& dir,
               const ReconstructionPlan<float>& plan, int rank) {
  require_dir(dir, "checkpoint");
  plan.validate();
  json j;
  j["format_version"] = 1;
  j["rank"] = rank;
  j["n_stages"] = plan.n_stages();
  j["spec"] = spec_to_json(plan.stages[0].spec);
  json stages = json::array();
  for (int i = 0; i < plan.n_stages(); ++i) {
    const std::vector<float> flat = flatten_params(plan.stages[i]);
    std::vector<double> wide(flat.begin(), flat.end());
    const std::string name = stage_file_name(i);
    write_f64(dir / name, wide, {static_cast<int>(wide.size())});
    stages.push_back(
        {{"file", name}, {"checksum", file_checksum(dir / name)}});
  }
  j["stages"] = std::move(stages);
  atomic_write_text(dir / "plan.json", j.dump(2) + "\n");
}

ReconstructionPlan<float> load_plan(const std::filesystem::path& dir,
                                    const StageSpec& expected_spec,
                                    int expected_rank, int* trained_stages) {
  json j;
  try {
    j = json::parse(read_text(dir / "plan.json"));
  } catch (const json::exception& e) {
    fail(ErrorCode::io, std::string("bad plan manifest: ") + e.what());
  }
  ReconstructionPlan<float> plan;
  try {
    if (j.at("format_version").get<int>() != 1) {
      fail(ErrorCode::io, "unsupported plan format version");
    }
    if (j.at("rank").get<int>() != expected_rank ||
        !spec_equal(spec_from_json(j.at("spec")), expected_spec)) {
      fail(ErrorCode::config,
           "checkpoint architecture differs from the configured network");
    }
    for (const auto& entry : j.at("stages")) {
      const std::string name = entry.at("file").get<std::string>();
      if (file_checksum(dir / name) !=
          entry.at("checksum").get<std::string>()) {
        fail(ErrorCode::io, "checkpoint checksum mismatch for " + name);
      }
      const ArrayF64 arr = read_f64(dir / name);
      StageParams<float> params =
          init_params<float>(expected_spec, expected_rank, 0);
      if (arr.values.size() != param_count(params)) {
        fail(ErrorCode::io, "checkpoint size mismatch for " + name);
      }
      std::vector<float> flat(arr.values.begin(), arr.values.end());
      unflatten_params(params, flat);
      plan.stages.push_back(std::move(params));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::io, std::string("plan manifest field error: ") + e.what());
  }
  if (trained_stages) *trained_stages = plan.n_stages();
  return plan;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void run_simulate(const RunConfig& cfg) {
  cfg.validate();
  require_dir(cfg.dataset_dir, "dataset output");
  const auto t0 = std::chrono::steady_clock::now();
  const ReceiverGeometry geom = cfg.make_geometry();
  const DatasetManifest m =
      simulate_dataset(cfg.n_samples, cfg.grid, geom, cfg.noise_spec(),
                       cfg.phantom_spec(), cfg.dataset_dir, cfg.threads);
  std::cout << "simulate: " << m.n_samples << " samples on " << cfg.grid.nx
            << "x" << cfg.grid.ny << "x" << cfg.grid.nz
            << " grid, nt=" << cfg.grid.nt << "\n"
            << "  receivers: " << geom.active_count() << " active (factor "
            << m.subsample_factor << ", " << to_string(m.scheme) << ")\n"
            << "  noise: " << m.noise.snr_db << " dB SNR\n"
            << "  forward PDE solves: " << m.forward_solves << "\n"
            << "  wrote " << (1 + 2 * m.n_samples) << " files to "
            << cfg.dataset_dir.string() << " (plus .meta.json sidecars)\n"
            << "  wall time: " << seconds_since(t0) << " s\n";
}

void run_train(const RunConfig& cfg) {
  cfg.validate();
  require_dir(cfg.checkpoint_dir, "checkpoint");
  const auto t0 = std::chrono::steady_clock::now();
  const LoadedDataset ds = load_dataset(cfg.dataset_dir);
  if (ds.manifest.grid.nx != cfg.grid.nx ||
      ds.manifest.grid.ny != cfg.grid.ny ||
      ds.manifest.grid.nz != cfg.grid.nz ||
      ds.manifest.grid.nt != cfg.grid.nt ||
      ds.manifest.subsample_factor != cfg.subsample_factor ||
      ds.manifest.scheme != cfg.scheme) {
    fail(ErrorCode::config,
         "dataset in " + cfg.dataset_dir.string() +
             " was generated under a different grid/geometry");
  }
  const WaveOperator op(cfg.grid, ds.geometry);
  const StageSpec spec = spec_of(cfg);
  const int rank = cfg.grid.spatial_rank();

  ReconstructionPlan<float> plan;
  std::string loss_lines;
  int trained = 0;
  if (std::filesystem::exists(cfg.checkpoint_dir / "plan.json")) {
    plan = load_plan(cfg.checkpoint_dir, spec, rank, &trained);
    if (trained > cfg.n_stages) {
      fail(ErrorCode::config,
           "checkpoint already has more stages than plan.n_stages");
    }
    if (std::filesystem::exists(cfg.checkpoint_dir / "loss_history.txt")) {
      loss_lines = read_text(cfg.checkpoint_dir / "loss_history.txt");
    }
    std::cout << "train: resuming after " << trained << " trained stage(s)\n";
  }

  for (int i = trained; i < cfg.n_stages; ++i) {
    const auto stage_t0 = std::chrono::steady_clock::now();
    const auto records = make_stage_dataset<float>(
        ds.ground_truth, ds.traces, op, plan.stages, spec.state_channels);
    StageParams<float> params =
        init_params<float>(spec, rank, cfg.stage_init_seed(i));
    TrainConfig tc = cfg.train;
    tc.seed = mix_seed(cfg.train_seed(), static_cast<std::uint64_t>(i));
    const TrainStageResult tr = train_stage(records, params, tc);
    for (std::size_t e = 0; e < tr.loss_history.size(); ++e) {
      char line[128];
      std::snprintf(line, sizeof line, "%d %zu %.17g %.3f\n", i, e,
                    tr.loss_history[e], tr.epoch_seconds[e]);
      loss_lines += line;
    }
    plan.stages.push_back(std::move(params));
    save_plan(cfg.checkpoint_dir, plan, rank);
    atomic_write_text(cfg.checkpoint_dir / "loss_history.txt", loss_lines);
    std::cout << "train: stage " << i << " done in "
              << seconds_since(stage_t0) << " s";
    if (!tr.loss_history.empty()) {
      std::cout << ", loss " << tr.loss_history.front() << " -> "
                << tr.loss_history.back();
    } else {
      std::cout << " (0 epochs: identity checkpoint)";
    }
    std::cout << "\n";
  }
  std::cout << "train: " << cfg.n_stages << " stage(s) in "
            << cfg.checkpoint_dir.string() << ", PDE solves consumed: "
            << op.counter().total() << ", wall time " << seconds_since(t0)
            << " s\n";
}

void run_reconstruct(const RunConfig& cfg,
                     const std::filesystem::path& checkpoint_dir,
                     const std::filesystem::path& traces_file) {
  cfg.validate();
  require_dir(cfg.output_dir, "output");
  const std::filesystem::path ckpt =
      checkpoint_dir.empty() ? cfg.checkpoint_dir : checkpoint_dir;
  const StageSpec spec = spec_of(cfg);
  const int rank = cfg.grid.spatial_rank();
  int trained = 0;
  ReconstructionPlan<float> plan = load_plan(ckpt, spec, rank, &trained);
  if (trained < cfg.n_stages) {
    fail(ErrorCode::io, "checkpoint has " + std::to_string(trained) +
                            " trained stage(s); plan.n_stages is " +
                            std::to_string(cfg.n_stages));
  }
  plan.stages.resize(cfg.n_stages);

  const ReceiverGeometry geom = cfg.make_geometry();
  const WaveOperator op(cfg.grid, geom);
  const Traces y = load_traces(cfg, geom, traces_file);

  const auto t0 = std::chrono::steady_clock::now();
  ReconstructionDiagnostics diag;
  const Volume x = reconstruct(y, op, plan, &diag);
  const double wall = seconds_since(t0);
  if (diag.pde_solves != 2 * static_cast<std::uint64_t>(cfg.n_stages)) {
    fail(ErrorCode::check, "PDE solve accounting mismatch in reconstruct");
  }

  write_f64(cfg.output_dir / "reconstruction.f64", x.values,
            {cfg.grid.nx, cfg.grid.ny, cfg.grid.nz});
  write_f64(cfg.output_dir / "first_gradient.f64",
            diag.first_gradient.values,
            {cfg.grid.nx, cfg.grid.ny, cfg.grid.nz});
  json summary;
  summary["n_stages"] = cfg.n_stages;
  summary["pde_solves"] = diag.pde_solves;
  summary["stage_misfits"] = diag.stage_misfits;
  atomic_write_text(cfg.output_dir / "reconstruct_summary.json",
                    summary.dump(2) + "\n");

  std::cout << "reconstruct: " << cfg.n_stages << " stage(s), "
            << diag.pde_solves << " PDE solves (2 per stage)\n";
  for (std::size_t i = 0; i < diag.stage_misfits.size(); ++i) {
    std::cout << "  stage " << i << " input misfit: " << diag.stage_misfits[i]
              << "\n";
  }
  std::cout << "  wrote reconstruction.f64, first_gradient.f64 to "
            << cfg.output_dir.string() << "\n"
            << "  wall time: " << wall << " s\n";
}

void run_lsqr(const RunConfig& cfg, const std::filesystem::path& traces_file) {
  cfg.validate();
  require_dir(cfg.output_dir, "output");
  const ReceiverGeometry geom = cfg.make_geometry();
  const WaveOperator op(cfg.grid, geom);
  const Traces y = load_traces(cfg, geom, traces_file);

  const auto t0 = std::chrono::steady_clock::now();
  const LsqrReconstruction rec = lsqr_reconstruct(op, y, cfg.lsqr);
  const double wall = seconds_since(t0);

  write_f64(cfg.output_dir / "lsqr_volume.f64", rec.volume.values,
            {cfg.grid.nx, cfg.grid.ny, cfg.grid.nz});
  std::string lines;
  for (std::size_t k = 0; k < rec.stats.residual_history.size(); ++k) {
    char line[64];
    std::snprintf(line, sizeof line, "%zu %.17g\n", k,
                  rec.stats.residual_history[k] /
                      rec.stats.residual_history[0]);
    lines += line;
  }
  atomic_write_text(cfg.output_dir / "lsqr_residuals.txt", lines);

  const std::uint64_t body = 2 * static_cast<std::uint64_t>(rec.stats.iterations);
  std::cout << "lsqr: " << rec.stats.iterations << " iterations, " << body
            << " PDE solves in the iteration body, " << op.counter().total()
            << " including initialization\n"
            << "  relative residual: "
            << rec.stats.residual_norm / rec.stats.b_norm
            << (rec.stats.converged ? " (tolerance reached)" : "")
            << (rec.stats.breakdown ? " (breakdown)" : "") << "\n"
            << "  wrote lsqr_volume.f64, lsqr_residuals.txt to "
            << cfg.output_dir.string() << "\n"
            << "  wall time: " << wall << " s\n";
}

void run_eval(const RunConfig& cfg, const std::filesystem::path& truth_file,
              const std::vector<std::filesystem::path>& estimate_files,
              const std::filesystem::path& traces_file) {
  cfg.validate();
  require_dir(cfg.output_dir, "output");
  const Volume truth = load_volume(cfg, truth_file);
  double peak = 0.0;
  for (double v : truth.values) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) peak = 1.0;

  write_panels(truth, cfg.output_dir, truth_file.stem().string(),
               PgmNormalization::fixed, peak);
  for (const auto& path : estimate_files) {
    const Volume est = load_volume(cfg, path);
    const double m = mse(truth, est);
    const double p = psnr(truth, est, peak);
    std::cout << "eval " << path.string() << ": mse " << m << ", psnr ";
    if (std::isinf(p)) {
      std::cout << "inf\n";
    } else {
      std::cout << p << " dB\n";
    }
    write_panels(est, cfg.output_dir, path.stem().string(),
                 PgmNormalization::fixed, peak);
  }
  if (!traces_file.empty()) {
    const ReceiverGeometry geom = cfg.make_geometry();
    const WaveOperator op(cfg.grid, geom);
    const Traces y = load_traces(cfg, geom, traces_file);
    const Volume g0 = op.misfit_gradient(Volume::zeros(cfg.grid), y);
    // The raw gradient is signed; min-max normalization keeps it visible.
    write_panels(g0, cfg.output_dir, "first_gradient",
                 PgmNormalization::minmax, 1.0);
    std::cout << "eval: wrote first-gradient input panel ("
              << op.counter().total() << " PDE solves)\n";
  }
  std::cout << "eval: panels written to " << cfg.output_dir.string() << "\n";
}

void run_diagnose(const RunConfig& cfg, bool sabotage_adjoint) {
  cfg.validate();
  bool all_pass = true;
  auto report = [&](const char* name, bool pass, const std::string& detail) {
    std::cout << (pass ? "PASS" : "FAIL") << "  " << name << ": " << detail
              << "\n";
    all_pass = all_pass && pass;
  };

  const ReceiverGeometry geom = cfg.make_geometry();
  const WaveOperator op(cfg.grid, geom);
  const int rank = cfg.grid.spatial_rank();

  {  // Adjoint dot test: <A x, y> == <x, A' y> over random draws.
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(mix_seed(cfg.seed, 7));
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      Volume x = Volume::zeros(cfg.grid);
      for (double& v : x.values) v = rng.normal();
      Traces y = Traces::zeros(geom, cfg.grid.nt);
      for (double& v : y.values) v = rng.normal();
      const Traces ax = op.forward(x);
      const Volume aty = op.adjoint(y);
      const double lhs = dot(ax.values, y.values);
      double rhs = dot(x.values, aty.values);
      if (sabotage_adjoint) rhs *= 1.0001;
      const double rel =
          std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs));
      worst = std::max(worst, rel);
    }
    char detail[128];
    std::snprintf(detail, sizeof detail,
                  "max relative error %.3e over 5 draws (%.2f s)", worst,
                  seconds_since(t0));
    report("adjoint dot test", worst < 1e-12, detail);
  }

  {  // Stage round trip at the configured architecture, both precisions.
    const auto t0 = std::chrono::steady_clock::now();
    const StageSpec spec = spec_of(cfg);
    const std::array<int, 3> dims =
        rank == 2 ? std::array<int, 3>{cfg.grid.nx, cfg.grid.nz, 1}
                  : std::array<int, 3>{cfg.grid.nx, cfg.grid.ny, cfg.grid.nz};
    auto round_trip = [&](auto precision_tag) {
      using T = decltype(precision_tag);
      StageParams<T> params = init_params<T>(spec, rank, mix_seed(cfg.seed, 8));
      Rng rng(mix_seed(cfg.seed, 9));
      for (auto& layer : params.layers) {  // non-identity inverse
        // Residual output weights at a trained-plausible scale: large draws
        // blow up intermediate magnitudes and with them the float error.
        const double bound =
            0.1 * std::sqrt(6.0 / (static_cast<double>(
                                       layer.conv2.in_channels) *
                                   layer.conv2.taps()));
        for (T& w : layer.conv2.weights) {
          w = static_cast<T>(rng.uniform(-bound, bound));
        }
      }
      TensorField<T> state =
          TensorField<T>::zeros(spec.state_channels, rank, dims);
      TensorField<T> cond = TensorField<T>::zeros(1, rank, dims);
      for (T& v : state.values) v = static_cast<T>(rng.normal());
      for (T& v : cond.values) v = static_cast<T>(rng.normal());
      const TensorField<T> out = stage_forward(state, cond, params);
      const TensorField<T> back = stage_inverse(out, cond, params);
      double scale = 0.0, err = 0.0;
      for (std::size_t i = 0; i < state.values.size(); ++i) {
        scale = std::max(scale, std::abs(static_cast<double>(state.values[i])));
        err = std::max(err, std::abs(static_cast<double>(back.values[i]) -
                                     static_cast<double>(state.values[i])));
      }
      return err / scale;
    };
    const double err_d = round_trip(double{});
    const double err_f = round_trip(float{});
    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "double %.3e (tol 1e-10), single %.3e (tol 1e-4) (%.2f s)",
                  err_d, err_f, seconds_since(t0));
    report("stage round trip", err_d < 1e-10 && err_f < 1e-4, detail);
  }

  {  // Parameter-gradient check against central finite differences.
    const auto t0 = std::chrono::steady_clock::now();
    StageSpec spec;
    spec.state_channels = 4;
    spec.cond_channels = 1;
    spec.n_layers = 2;
    spec.hidden_channels = 4;
    spec.kernel_size = 3;
    spec.leaky_slope = 0.1;
    const std::array<int, 3> dims =
        rank == 2 ? std::array<int, 3>{8, 6, 1} : std::array<int, 3>{6, 4, 4};
    StageParams<double> params =
        init_params<double>(spec, rank, mix_seed(cfg.seed, 10));
    Rng rng(mix_seed(cfg.seed, 11));
    std::vector<double> flat = flatten_params(params);
    for (double& w : flat) w = rng.uniform(-0.3, 0.3);
    unflatten_params(params, flat);
    TensorField<double> state =
        TensorField<double>::zeros(spec.state_channels, rank, dims);
    TensorField<double> cond = TensorField<double>::zeros(1, rank, dims);
    for (double& v : state.values) v = rng.normal();
    for (double& v : cond.values) v = rng.normal();
    TensorField<double> w_loss =
        TensorField<double>::zeros(spec.state_channels, rank, dims);
    for (double& v : w_loss.values) v = rng.normal();

    auto loss_of = [&](const StageParams<double>& p) {
      const TensorField<double> out = stage_forward(state, cond, p);
      double acc = 0.0;
      for (std::size_t i = 0; i < out.values.size(); ++i) {
        acc += out.values[i] * w_loss.values[i];
      }
      return acc;
    };
    const TensorField<double> out = stage_forward(state, cond, params);
    const StageBackwardResult<double> back =
        stage_backward(out, w_loss, cond, params);
    const std::vector<double> analytic = flatten_params(back.param_grads);

    double worst = 0.0;
    const double h = 1e-6;
    for (int pick = 0; pick < 10; ++pick) {
      const std::size_t idx = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(flat.size()) - 1));
      StageParams<double> p = params;
      std::vector<double> f = flat;
      f[idx] = flat[idx] + h;
      unflatten_params(p, f);
      const double lp = loss_of(p);
      f[idx] = flat[idx] - h;
      unflatten_params(p, f);
      const double lm = loss_of(p);
      const double fd = (lp - lm) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(analytic[idx]), 1e-8});
      worst = std::max(worst, std::abs(fd - analytic[idx]) / denom);
    }
    char detail[128];
    std::snprintf(detail, sizeof detail,
                  "max relative error %.3e over 10 params (%.2f s)", worst,
                  seconds_since(t0));
    report("parameter gradient vs finite differences", worst < 1e-5, detail);
  }

  {  // Constant-memory depth sweep.
    const auto t0 = std::chrono::steady_clock::now();
    const std::array<int, 3> dims =
        rank == 2 ? std::array<int, 3>{16, 16, 1} : std::array<int, 3>{8, 8, 8};
    auto peak_at_depth = [&](int depth) {
      StageSpec spec;
      spec.state_channels = 8;
      spec.cond_channels = 1;
      spec.n_layers = depth;
      spec.hidden_channels = 16;
      StageParams<float> params =
          init_params<float>(spec, rank, mix_seed(cfg.seed, 12));
      Rng rng(mix_seed(cfg.seed, 13));
      TensorField<float> state =
          TensorField<float>::zeros(spec.state_channels, rank, dims);
      TensorField<float> cond = TensorField<float>::zeros(1, rank, dims);
      for (float& v : state.values) v = static_cast<float>(rng.normal());
      for (float& v : cond.values) v = static_cast<float>(rng.normal());
      const TensorField<float> out = stage_forward(state, cond, params);
      TensorField<float> grad = out;
      const StageBackwardResult<float> back =
          stage_backward(out, grad, cond, params);
      return back.stats;
    };
    const ActivationCacheStats a = peak_at_depth(4);
    const ActivationCacheStats b = peak_at_depth(64);
    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "peak_cached_tensors depth 4: %d, depth 64: %d (%.2f s)",
                  a.peak_cached_tensors, b.peak_cached_tensors,
                  seconds_since(t0));
    report("constant-memory depth sweep",
           a.peak_cached_tensors == b.peak_cached_tensors, detail);
  }

  if (!all_pass) fail(ErrorCode::check, "diagnostics failed");
  std::cout << "diagnose: all checks passed\n";
}

}  // namespace pai
