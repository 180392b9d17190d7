#include "pai.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "pai/config.hpp"
#include "pai/pipeline.hpp"

namespace {

thread_local std::string g_last_error;

struct ConfigHandle {
  pai::RunConfig cfg;
};

const pai::RunConfig& unwrap(const pai_config* cfg) {
  return reinterpret_cast<const ConfigHandle*>(cfg)->cfg;
}

template <typename Fn>
pai_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return PAI_OK;
  } catch (const pai::Error& e) {
    g_last_error = e.what();
    return static_cast<pai_status>(static_cast<int>(e.code()));
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PAI_ERR_CHECK;
  } catch (...) {
    g_last_error = "unknown error";
    return PAI_ERR_CHECK;
  }
}

}  // namespace

extern "C" {

pai_config* pai_config_create_default(void) {
  auto* h = new (std::nothrow) ConfigHandle{pai::RunConfig::defaults()};
  return reinterpret_cast<pai_config*>(h);
}

pai_status pai_config_load(const char* path, pai_config** out) {
  if (!out) return PAI_ERR_CONFIG;
  *out = nullptr;
  return guarded([&] {
    if (!path) pai::fail(pai::ErrorCode::config, "config path is null");
    auto* h = new ConfigHandle{pai::RunConfig::from_file(path)};
    *out = reinterpret_cast<pai_config*>(h);
  });
}

pai_status pai_config_set(pai_config* cfg, const char* assignment) {
  return guarded([&] {
    if (!cfg || !assignment) {
      pai::fail(pai::ErrorCode::config, "null argument to pai_config_set");
    }
    reinterpret_cast<ConfigHandle*>(cfg)->cfg.apply_override(assignment);
  });
}

pai_status pai_config_dump(const pai_config* cfg, char** out_json) {
  return guarded([&] {
    if (!cfg || !out_json) {
      pai::fail(pai::ErrorCode::config, "null argument to pai_config_dump");
    }
    const std::string text = unwrap(cfg).to_json();
    char* buf = static_cast<char*>(std::malloc(text.size() + 1));
    if (!buf) pai::fail(pai::ErrorCode::io, "allocation failure");
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out_json = buf;
  });
}

void pai_config_destroy(pai_config* cfg) {
  delete reinterpret_cast<ConfigHandle*>(cfg);
}

pai_status pai_run_simulate(const pai_config* cfg) {
  return guarded([&] {
    if (!cfg) pai::fail(pai::ErrorCode::config, "null config");
    pai::run_simulate(unwrap(cfg));
  });
}

pai_status pai_run_train(const pai_config* cfg) {
  return guarded([&] {
    if (!cfg) pai::fail(pai::ErrorCode::config, "null config");
    pai::run_train(unwrap(cfg));
  });
}

pai_status pai_run_reconstruct(const pai_config* cfg,
                               const char* checkpoint_dir,
                               const char* traces_file) {
  return guarded([&] {
    if (!cfg || !traces_file) {
      pai::fail(pai::ErrorCode::config, "null argument to reconstruct");
    }
    pai::run_reconstruct(unwrap(cfg),
                         checkpoint_dir ? checkpoint_dir : "",
                         traces_file);
  });
}

pai_status pai_run_lsqr(const pai_config* cfg, const char* traces_file) {
  return guarded([&] {
    if (!cfg || !traces_file) {
      pai::fail(pai::ErrorCode::config, "null argument to lsqr");
    }
    pai::run_lsqr(unwrap(cfg), traces_file);
  });
}

pai_status pai_run_eval(const pai_config* cfg, const char* truth_file,
                        const char* const* estimate_files, size_t n_estimates,
                        const char* traces_file) {
  return guarded([&] {
    if (!cfg || !truth_file || (n_estimates > 0 && !estimate_files)) {
      pai::fail(pai::ErrorCode::config, "null argument to eval");
    }
    std::vector<std::filesystem::path> estimates;
    for (size_t i = 0; i < n_estimates; ++i) {
      if (!estimate_files[i]) {
        pai::fail(pai::ErrorCode::config, "null estimate path");
      }
      estimates.emplace_back(estimate_files[i]);
    }
    pai::run_eval(unwrap(cfg), truth_file, estimates,
                  traces_file ? std::filesystem::path(traces_file)
                              : std::filesystem::path());
  });
}

pai_status pai_run_diagnose(const pai_config* cfg, int sabotage_adjoint) {
  return guarded([&] {
    if (!cfg) pai::fail(pai::ErrorCode::config, "null config");
    pai::run_diagnose(unwrap(cfg), sabotage_adjoint != 0);
  });
}

const char* pai_last_error(void) { return g_last_error.c_str(); }

void pai_string_free(char* s) { std::free(s); }

const char* pai_version(void) { return "1.0.0"; }

}  // extern "C"
