// Command-line front end. Talks to the library exclusively through the C
// API, so it exercises the same surface any other binding would.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pai.h"

namespace {

struct ConfigGuard {
  pai_config* cfg = nullptr;
  ~ConfigGuard() { pai_config_destroy(cfg); }
};

int report(pai_status status) {
  if (status != PAI_OK) {
    std::fprintf(stderr, "error: %s\n", pai_last_error());
  }
  return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loop-unrolled invertible-network reconstruction for "
               "limited-view photoacoustic imaging"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  int threads = -1;
  app.add_option("--config", config_path,
                 "JSON config file (default: $PAI_CONFIG if set)");
  app.add_option("--set", overrides,
                 "Override a config value, e.g. --set grid.nx=128")
      ->take_all();
  app.add_option("--threads", threads, "Worker thread cap (default 1)");

  CLI::App* simulate = app.add_subcommand("simulate", "Generate a dataset");
  CLI::App* train = app.add_subcommand("train", "Greedy stagewise training");

  std::string checkpoint_dir, traces_file;
  CLI::App* reconstruct =
      app.add_subcommand("reconstruct", "Apply a trained plan to traces");
  reconstruct->add_option("--checkpoint", checkpoint_dir,
                          "Checkpoint directory (default: config paths)");
  reconstruct->add_option("--traces", traces_file, "Observed traces (.f64)")
      ->required();

  std::string lsqr_traces;
  CLI::App* lsqr = app.add_subcommand("lsqr", "Iterative baseline solve");
  lsqr->add_option("--traces", lsqr_traces, "Observed traces (.f64)")
      ->required();

  std::string truth_file, eval_traces;
  std::vector<std::string> estimates;
  CLI::App* eval =
      app.add_subcommand("eval", "Metrics and image panels vs ground truth");
  eval->add_option("--truth", truth_file, "Ground-truth volume (.f64)")
      ->required();
  eval->add_option("--traces", eval_traces,
                   "Observed traces for the first-gradient panel");
  eval->add_option("estimates", estimates, "Estimate volumes (.f64)");

  bool sabotage = false;
  CLI::App* diagnose =
      app.add_subcommand("diagnose", "Run numerical self-checks");
  diagnose->add_flag("--sabotage-adjoint", sabotage,
                     "Corrupt the adjoint test on purpose (negative control)");

  CLI::App* dump =
      app.add_subcommand("dump-config", "Print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(PAI_ERR_CONFIG);
  }

  if (config_path.empty()) {
    if (const char* env = std::getenv("PAI_CONFIG")) config_path = env;
  }

  ConfigGuard guard;
  if (!config_path.empty()) {
    const pai_status st = pai_config_load(config_path.c_str(), &guard.cfg);
    if (st != PAI_OK) return report(st);
  } else {
    guard.cfg = pai_config_create_default();
    if (!guard.cfg) return report(PAI_ERR_CONFIG);
  }
  for (const std::string& o : overrides) {
    const pai_status st = pai_config_set(guard.cfg, o.c_str());
    if (st != PAI_OK) return report(st);
  }
  if (threads >= 0) {
    const std::string o = "threads=" + std::to_string(threads);
    const pai_status st = pai_config_set(guard.cfg, o.c_str());
    if (st != PAI_OK) return report(st);
  }

  if (simulate->parsed()) return report(pai_run_simulate(guard.cfg));
  if (train->parsed()) return report(pai_run_train(guard.cfg));
  if (reconstruct->parsed()) {
    return report(pai_run_reconstruct(
        guard.cfg, checkpoint_dir.empty() ? nullptr : checkpoint_dir.c_str(),
        traces_file.c_str()));
  }
  if (lsqr->parsed()) {
    return report(pai_run_lsqr(guard.cfg, lsqr_traces.c_str()));
  }
  if (eval->parsed()) {
    std::vector<const char*> ptrs;
    for (const std::string& e : estimates) ptrs.push_back(e.c_str());
    return report(pai_run_eval(guard.cfg, truth_file.c_str(),
                               ptrs.empty() ? nullptr : ptrs.data(),
                               ptrs.size(),
                               eval_traces.empty() ? nullptr
                                                   : eval_traces.c_str()));
  }
  if (diagnose->parsed()) {
    return report(pai_run_diagnose(guard.cfg, sabotage ? 1 : 0));
  }
  if (dump->parsed()) {
    char* text = nullptr;
    const pai_status st = pai_config_dump(guard.cfg, &text);
    if (st != PAI_OK) return report(st);
    std::fputs(text, stdout);
    pai_string_free(text);
    return 0;
  }
  return static_cast<int>(PAI_ERR_CONFIG);
}
