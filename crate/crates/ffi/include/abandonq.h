#ifndef ABANDONQ_H
#define ABANDONQ_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AqStatus {
  AQ_STATUS_OK = 0,
  AQ_STATUS_NULL_POINTER = 1,
  AQ_STATUS_INVALID_STRING = 2,
  AQ_STATUS_CONFIG = 3,
  AQ_STATUS_VALIDATION = 4,
  AQ_STATUS_STABILITY = 5,
  AQ_STATUS_NON_INTEGRABLE = 6,
  AQ_STATUS_QUADRATURE = 7,
  AQ_STATUS_MISMATCH = 8,
  AQ_STATUS_IO = 9,
  AQ_STATUS_JSON = 10,
  AQ_STATUS_PANIC = 11,
} AqStatus;

/**
 * Stationary law of the reflected diffusion. Opaque.
 */
typedef struct AqStationary AqStationary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a
 * successful call. Valid until the next call into the library.
 */
const char *aq_last_error_message(void);

/**
 * Library version, a static string.
 */
const char *aq_version(void);

/**
 * Frees a string returned by the library. Null is ignored.
 */
void aq_string_free(char *s);

/**
 * Builds the stationary law for `H(x) = coeffs[0] + coeffs[1] x + ...`,
 * variance `sigma2` and drift constant `theta / lambda`. `tol` is the
 * relative tolerance of the normalization (e.g. 1e-10).
 */
enum AqStatus aq_stationary_build(double sigma2,
                                  double drift_const,
                                  const double *coeffs,
                                  size_t num_coeffs,
                                  double tol,
                                  struct AqStationary **out);

/**
 * As [`aq_stationary_build`], with `H` given as the JSON of a function
 * (`{"polynomial": [...]}`, `{"power": {"coef": c, "exponent": p}}` or a table).
 */
enum AqStatus aq_stationary_build_json(double sigma2,
                                       double drift_const,
                                       const char *h_json,
                                       double tol,
                                       struct AqStationary **out);

void aq_stationary_free(struct AqStationary *h);

/**
 * Normalizing constant `M`.
 */
enum AqStatus aq_stationary_normalizer(const struct AqStationary *h, double *out);

enum AqStatus aq_stationary_density(const struct AqStationary *h, double x, double *out);

enum AqStatus aq_stationary_cdf(const struct AqStationary *h, double x, double *out);

/**
 * `E[V^m]`, `m > 0`.
 */
enum AqStatus aq_stationary_moment(const struct AqStationary *h, double m, double *out);

enum AqStatus aq_stationary_quantile(const struct AqStationary *h, double q, double *out);

/**
 * `E[H(V)]`, the limit of `sqrt(n)` times the abandonment probability.
 */
enum AqStatus aq_stationary_expect_h(const struct AqStationary *h, double *out);

/**
 * Simulates one replication. `config_json` is a simulator configuration;
 * on success `*result_json` receives the result as JSON, to be freed with
 * `aq_string_free`.
 */
enum AqStatus aq_simulate_json(const char *config_json, char **result_json);

/**
 * Runs a whole experiment from its JSON configuration.
 *
 * `out_dir` may be null, in which case the configuration's `output_dir` is
 * used (relative to the working directory) when present. `threads = 0`
 * uses the default pool. `*exit_code` receives the CLI exit status (0
 * pass, 1 gate failure, 2 configuration or validation, 3 stability) and is
 * written even when the call fails. On success `*report_json` receives the
 * report; gate failures are not call failures.
 */
enum AqStatus aq_run_experiment(const char *config_json,
                                const char *out_dir,
                                uint32_t threads,
                                bool waive_a5,
                                char **report_json,
                                int *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ABANDONQ_H */
