/* C interface to the photoacoustic reconstruction pipeline.
 *
 * All entry points return pai_status; 0 is success. On failure the message
 * is available from pai_last_error() until the next call on the same thread.
 * The status values double as CLI exit codes.
 */
#ifndef PAI_H
#define PAI_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pai_status {
  PAI_OK = 0,
  PAI_ERR_CHECK = 1,   /* a verification/consistency check failed */
  PAI_ERR_CONFIG = 2,  /* bad configuration or usage */
  PAI_ERR_IO = 3,      /* file system or artifact-integrity failure */
  PAI_ERR_NUMERIC = 4  /* numerical failure (non-finite values) */
} pai_status;

/* Opaque run configuration. */
typedef struct pai_config pai_config;

/* Never fails; returns the built-in desk-scale 2D defaults. */
pai_config* pai_config_create_default(void);

/* Loads a JSON config file over the defaults. On failure *out is NULL. */
pai_status pai_config_load(const char* path, pai_config** out);

/* Applies one "dotted.path=value" override (value parsed as JSON scalar,
 * unquoted strings pass through). */
pai_status pai_config_set(pai_config* cfg, const char* assignment);

/* Emits the full effective config as JSON. Free with pai_string_free. */
pai_status pai_config_dump(const pai_config* cfg, char** out_json);

void pai_config_destroy(pai_config* cfg);

/* Pipeline commands. Directories referenced by the config must exist. */
pai_status pai_run_simulate(const pai_config* cfg);
pai_status pai_run_train(const pai_config* cfg);

/* checkpoint_dir NULL means the configured paths.checkpoint_dir. */
pai_status pai_run_reconstruct(const pai_config* cfg,
                               const char* checkpoint_dir,
                               const char* traces_file);
pai_status pai_run_lsqr(const pai_config* cfg, const char* traces_file);

/* traces_file may be NULL (skips the first-gradient panel). */
pai_status pai_run_eval(const pai_config* cfg, const char* truth_file,
                        const char* const* estimate_files, size_t n_estimates,
                        const char* traces_file);

/* Self-checks; sabotage_adjoint != 0 corrupts the adjoint dot test on
 * purpose (negative control). */
pai_status pai_run_diagnose(const pai_config* cfg, int sabotage_adjoint);

/* Last error message for the calling thread; empty string if none. The
 * pointer stays valid until the next library call on this thread. */
const char* pai_last_error(void);

void pai_string_free(char* s);

const char* pai_version(void);

#ifdef __cplusplus
}
#endif

#endif /* PAI_H */
