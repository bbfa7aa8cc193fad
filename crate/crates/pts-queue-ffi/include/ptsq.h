#ifndef PTSQ_H
#define PTSQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define PTSQ_OK 0

#define PTSQ_MISUSE 1

#define PTSQ_INVALID 2

#define PTSQ_DEGENERATE 3

#define PTSQ_NUMERICAL 4

// Opaque scenario configuration.
typedef struct PtsqConfig PtsqConfig;

// Opaque posterior parameter sample from a fit.
typedef struct PtsqFit PtsqFit;

// Opaque per-step observation sequence.
typedef struct PtsqObservations PtsqObservations;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string.
const char *ptsq_version(void);

// Retrieve the current thread's last error message. Returns the message
// length (excluding the NUL terminator); the copy into `buf` is truncated
// to `cap` bytes including the terminator.
size_t ptsq_last_error(char *buf, size_t cap);

// New configuration with every key at its default.
struct PtsqConfig *ptsq_config_default(void);

// Load a `key = value` config file.
int32_t ptsq_config_load(const char *path, struct PtsqConfig **out);

// Parse config text in the same format as [`ptsq_config_load`].
int32_t ptsq_config_parse(const char *text, struct PtsqConfig **out);

// Set one dotted config key (e.g. `"window.hours"`, `"2.5"`).
int32_t ptsq_config_set(struct PtsqConfig *cfg, const char *key, const char *value);

// Hex digest identifying the full effective configuration; needs a buffer
// of at least 65 bytes.
int32_t ptsq_config_hash(const struct PtsqConfig *cfg, char *buf, size_t cap);

// Number of model steps in the configured analysis window.
int32_t ptsq_config_horizon(const struct PtsqConfig *cfg, size_t *out);

void ptsq_config_free(struct PtsqConfig *cfg);

// Simulate the configured scenario and return its probe observations.
// `replication` selects an independent random stream under the same seed.
int32_t ptsq_simulate(const struct PtsqConfig *cfg,
                      uint64_t replication,
                      struct PtsqObservations **out);

// Read an observation CSV (`t,arrival,slot`).
int32_t ptsq_observations_read(const char *path, struct PtsqObservations **out);

int32_t ptsq_observations_write(const struct PtsqObservations *obs, const char *path);

// Steps in the sequence; 0 on a null handle.
size_t ptsq_observations_horizon(const struct PtsqObservations *obs);

// Count of steps with a reported stop position; 0 on a null handle.
size_t ptsq_observations_count(const struct PtsqObservations *obs);

// Look up step `t` (1-based). `*out_arrival` reports whether a probe
// arrival was seen; `*out_slot` its stop position (0 when it passed
// unimpeded or when there was no arrival).
int32_t ptsq_observations_at(const struct PtsqObservations *obs,
                             size_t t,
                             bool *out_arrival,
                             uint32_t *out_slot);

void ptsq_observations_free(struct PtsqObservations *obs);

// Fit the arrival and penetration parameters to one or more observation
// days, honoring the config's fit method, and return the posterior sample.
int32_t ptsq_fit(const struct PtsqConfig *cfg,
                 const struct PtsqObservations *const *days,
                 size_t n_days,
                 struct PtsqFit **out);

// Number of fitted scalar parameters (rates, then penetration).
size_t ptsq_fit_dim(const struct PtsqFit *fit);

// Name of parameter `i`; same copy semantics as [`ptsq_last_error`].
// Returns 0 on a bad handle or index.
size_t ptsq_fit_name(const struct PtsqFit *fit, size_t i, char *buf, size_t cap);

// Posterior mean of parameter `i` (NaN on a bad handle or index).
double ptsq_fit_mean(const struct PtsqFit *fit, size_t i);

// Posterior standard deviation of parameter `i` (NaN on a bad handle or
// index).
double ptsq_fit_sd(const struct PtsqFit *fit, size_t i);

// Maximized log likelihood (NaN on a bad handle).
double ptsq_fit_log_lik(const struct PtsqFit *fit);

// Whether the winning optimizer start met its tolerances.
bool ptsq_fit_converged(const struct PtsqFit *fit);

size_t ptsq_fit_draw_count(const struct PtsqFit *fit);

// Copy draw `j` into `values` (length `dim`, natural parameter order) and
// its normalized weight into `*out_weight`.
int32_t ptsq_fit_draw(const struct PtsqFit *fit,
                      size_t j,
                      double *values,
                      size_t dim,
                      double *out_weight);

void ptsq_fit_free(struct PtsqFit *fit);

// Posterior mean queue length per step, filtering at the config's own
// parameters. `out_mean` must hold exactly the configured horizon.
int32_t ptsq_filter_mean(const struct PtsqConfig *cfg,
                         const struct PtsqObservations *obs,
                         double *out_mean,
                         size_t len);

// Posterior mean queue length per step, mixed over a fit's parameter
// draws. `out_mean` must hold exactly the configured horizon.
int32_t ptsq_mixture_mean(const struct PtsqConfig *cfg,
                          const struct PtsqObservations *obs,
                          const struct PtsqFit *fit,
                          double *out_mean,
                          size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PTSQ_H */
