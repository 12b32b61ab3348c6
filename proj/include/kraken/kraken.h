/* C interface to the kraken simulator and density-matrix reconstruction
 * library. All objects are opaque handles released with their _free
 * function; every fallible call returns a kraken_status and leaves a
 * message retrievable with kraken_last_error() on the calling thread.
 * Strings returned through char** are owned by the caller and released
 * with kraken_string_free(). */
#ifndef KRAKEN_H
#define KRAKEN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(KRAKEN_BUILDING_LIBRARY)
#    define KRAKEN_API __declspec(dllexport)
#  else
#    define KRAKEN_API __declspec(dllimport)
#  endif
#else
#  define KRAKEN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kraken_status {
  KRAKEN_OK = 0,
  KRAKEN_ERR_INVALID_ARGUMENT = 1, /* null handle, bad index, ... */
  KRAKEN_ERR_STRUCTURAL = 2,
  KRAKEN_ERR_CONFIGURATION = 3,
  KRAKEN_ERR_DATA = 4,
  KRAKEN_ERR_DEGENERATE = 5,
  KRAKEN_ERR_NUMERICAL = 6,
  KRAKEN_ERR_TUNING = 7,
  KRAKEN_ERR_INSUFFICIENT_SAMPLES = 8,
  KRAKEN_ERR_IO = 9,
  KRAKEN_ERR_INTERNAL = 10
} kraken_status;

KRAKEN_API const char* kraken_version(void);
KRAKEN_API const char* kraken_status_name(kraken_status status);
/* Message of the most recent failure on this thread ("" if none). */
KRAKEN_API const char* kraken_last_error(void);
KRAKEN_API void kraken_string_free(char* s);

/* ---- density matrices ------------------------------------------------ */

typedef struct kraken_dm kraken_dm;

/* Row-major n*n real and imaginary parts; the result is checked for
 * Hermiticity, unit trace and positivity. */
KRAKEN_API kraken_status kraken_dm_create(double epsilon_min, double delta_epsilon, size_t n,
                                          const double* re, const double* im, kraken_dm** out);
/* Reads without checking invariants (raw assembled matrices may be
 * indefinite). */
KRAKEN_API kraken_status kraken_dm_read(const char* path, kraken_dm** out);
KRAKEN_API kraken_status kraken_dm_write(const kraken_dm* dm, const char* path);
KRAKEN_API void kraken_dm_free(kraken_dm* dm);

KRAKEN_API size_t kraken_dm_dimension(const kraken_dm* dm);
KRAKEN_API kraken_status kraken_dm_grid(const kraken_dm* dm, double* epsilon_min,
                                        double* delta_epsilon);
KRAKEN_API kraken_status kraken_dm_elements(const kraken_dm* dm, double* re, double* im);
KRAKEN_API kraken_status kraken_dm_purity(const kraken_dm* dm, double* out);
KRAKEN_API kraken_status kraken_dm_concurrence(const kraken_dm* dm, double* out);
KRAKEN_API kraken_status kraken_dm_min_eigenvalue(const kraken_dm* dm, double* out);
KRAKEN_API kraken_status kraken_dm_fidelity(const kraken_dm* a, const kraken_dm* b, double* out);
KRAKEN_API kraken_status kraken_dm_project_psd(const kraken_dm* dm, kraken_dm** out);

/* ---- scenarios --------------------------------------------------------- */

typedef struct kraken_scenario kraken_scenario;

/* "helium" or "argon". */
KRAKEN_API kraken_status kraken_scenario_builtin(const char* name, kraken_scenario** out);
/* Merges a JSON object (nested sections, same layout as the manifest echo)
 * onto the scenario; on failure the scenario is unchanged. */
KRAKEN_API kraken_status kraken_scenario_merge_json(kraken_scenario* sc, const char* json);
KRAKEN_API kraken_status kraken_scenario_set_seed(kraken_scenario* sc, uint64_t seed);
KRAKEN_API kraken_status kraken_scenario_to_json(const kraken_scenario* sc, char** json);
KRAKEN_API kraken_status kraken_scenario_truth(const kraken_scenario* sc, kraken_dm** out);
KRAKEN_API size_t kraken_scenario_beat_count(const kraken_scenario* sc);
KRAKEN_API void kraken_scenario_free(kraken_scenario* sc);

/* ---- spectrograms and traces ----------------------------------------- */

typedef struct kraken_spectrogram kraken_spectrogram;
typedef struct kraken_trace kraken_trace;

/* Spectrogram for the index-th beat energy of the scenario. */
KRAKEN_API kraken_status kraken_simulate(const kraken_scenario* sc, size_t index,
                                         kraken_spectrogram** out);
KRAKEN_API kraken_status kraken_spectrogram_read(const char* path, kraken_spectrogram** out);
KRAKEN_API kraken_status kraken_spectrogram_write(const kraken_spectrogram* s, const char* path);
KRAKEN_API void kraken_spectrogram_free(kraken_spectrogram* s);

KRAKEN_API kraken_status kraken_extract(const kraken_spectrogram* s, kraken_trace** out);
KRAKEN_API kraken_status kraken_trace_read(const char* path, kraken_trace** out);
KRAKEN_API kraken_status kraken_trace_write(const kraken_trace* t, const char* path);
KRAKEN_API size_t kraken_trace_size(const kraken_trace* t);
/* Copies the amplitude and phase columns (kraken_trace_size() values each). */
KRAKEN_API kraken_status kraken_trace_columns(const kraken_trace* t, double* amplitude,
                                              double* phase);
KRAKEN_API void kraken_trace_free(kraken_trace* t);

/* Raw assembled matrix (Hermitian, unit trace, not necessarily PSD). */
KRAKEN_API kraken_status kraken_assemble(const kraken_trace* const* traces, size_t n,
                                         int interpolate, kraken_dm** out);

/* ---- reconstruction -------------------------------------------------- */

typedef struct kraken_result kraken_result;

/* Estimator settings and response come from the scenario. */
KRAKEN_API kraken_status kraken_reconstruct(const kraken_scenario* sc,
                                            const kraken_trace* const* traces, size_t n,
                                            kraken_result** out);
KRAKEN_API kraken_status kraken_result_map(const kraken_result* r, kraken_dm** out);
KRAKEN_API kraken_status kraken_result_purity(const kraken_result* r, double* mean, double* lo,
                                              double* hi);
KRAKEN_API kraken_status kraken_result_concurrence(const kraken_result* r, double* mean,
                                                   double* lo, double* hi);
KRAKEN_API kraken_status kraken_result_metrics_json(const kraken_result* r, char** json);
KRAKEN_API void kraken_result_free(kraken_result* r);

/* ---- file-level commands (one directory per stage, with manifest) ---- */

KRAKEN_API kraken_status kraken_cmd_simulate(const kraken_scenario* sc, const char* out_dir);
/* inputs: files or directories (expanded to spectrogram_*.csv). */
KRAKEN_API kraken_status kraken_cmd_extract(const char* const* inputs, size_t n,
                                            const char* out_dir);
/* inputs: files or directories (expanded to trace_*.csv). */
KRAKEN_API kraken_status kraken_cmd_assemble(const char* const* inputs, size_t n, int interpolate,
                                             const char* out_dir);
KRAKEN_API kraken_status kraken_cmd_reconstruct(const kraken_scenario* sc,
                                                const char* const* inputs, size_t n,
                                                const char* out_dir, char** metrics_json);
/* b_path may be NULL. */
KRAKEN_API kraken_status kraken_cmd_metrics(const char* a_path, const char* b_path, char** json);
/* estimate: a .dm file or a reconstruction directory (uses map.dm). */
KRAKEN_API kraken_status kraken_cmd_compare(const char* estimate, const char* truth_path,
                                            const char* out_dir, char** report_json);
/* End-to-end run; *summary (may be NULL) receives the top-level manifest. */
KRAKEN_API kraken_status kraken_run_pipeline(const kraken_scenario* sc, const char* out_dir,
                                             char** summary);

#ifdef __cplusplus
}
#endif

#endif /* KRAKEN_H */
