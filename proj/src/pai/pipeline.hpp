#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pai/config.hpp"
#include "pai/unroll.hpp"

namespace pai {

// Command implementations behind the CLI and the C API. All of them print a
// human-readable report to stdout, write artifacts under the configured
// paths, and throw Error on failure (the callers map codes to exit status).

// Generates cfg.n_samples samples into cfg.dataset_dir.
void run_simulate(const RunConfig& cfg);

// Greedy stagewise training from the dataset in cfg.dataset_dir into
// cfg.checkpoint_dir (plan.json + stage_<i>.f64 + loss_history.txt).
// Stages already recorded in plan.json are not retrained.
void run_train(const RunConfig& cfg);

// Applies the trained plan in `checkpoint_dir` to a traces file; writes
// reconstruction.f64, first_gradient.f64, and reconstruct_summary.json into
// cfg.output_dir.
void run_reconstruct(const RunConfig& cfg,
                     const std::filesystem::path& checkpoint_dir,
                     const std::filesystem::path& traces_file);

// LSQR baseline on a traces file; writes lsqr_volume.f64 and
// lsqr_residuals.txt (iteration, relative residual) into cfg.output_dir.
void run_lsqr(const RunConfig& cfg, const std::filesystem::path& traces_file);

// Prints MSE/PSNR of each estimate against the truth and writes PGM panels
// (middle slice + MIP per axis) for the truth and every estimate. With a
// traces file it also renders the first-gradient input panel.
void run_eval(const RunConfig& cfg, const std::filesystem::path& truth_file,
              const std::vector<std::filesystem::path>& estimate_files,
              const std::filesystem::path& traces_file = {});

// Self-checks: adjoint dot test, stage round trip, gradient check, and the
// constant-memory depth sweep. Throws Error(check) if any check fails.
// `sabotage_adjoint` deliberately corrupts the adjoint inside the dot test
// (negative control for the check itself).
void run_diagnose(const RunConfig& cfg, bool sabotage_adjoint = false);

// Checkpoint plumbing shared by train/reconstruct (exposed for tests).
void save_plan(const std::filesystem::path& dir,
               const ReconstructionPlan<float>& plan, int rank);
ReconstructionPlan<float> load_plan(const std::filesystem::path& dir,
                                    const StageSpec& expected_spec,
                                    int expected_rank,
                                    int* trained_stages = nullptr);

}  // namespace pai
