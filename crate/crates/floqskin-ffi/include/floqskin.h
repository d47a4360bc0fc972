#ifndef FLOQSKIN_H
#define FLOQSKIN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FqsBoundary {
  FQS_BOUNDARY_PERIODIC = 0,
  FQS_BOUNDARY_OPEN = 1,
} FqsBoundary;

/**
 * Result of every fallible call.
 */
typedef enum FqsStatus {
  FQS_STATUS_OK = 0,
  FQS_STATUS_NULL_POINTER = 1,
  FQS_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad parameters or configuration.
   */
  FQS_STATUS_CONFIG = 3,
  /**
   * The numerics failed (defective propagator, non-finite state, ...).
   */
  FQS_STATUS_NUMERICAL = 4,
  /**
   * The output buffer is too small; the required length was written.
   */
  FQS_STATUS_BUFFER_TOO_SMALL = 5,
  FQS_STATUS_OUT_OF_RANGE = 6,
  FQS_STATUS_IO = 7,
  FQS_STATUS_PANIC = 8,
} FqsStatus;

/**
 * Chain parameters.
 */
typedef struct FqsModel FqsModel;

/**
 * Floquet spectrum of a finite chain.
 */
typedef struct FqsSpectrum FqsSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *fqs_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into the library on this thread.
 */
const char *fqs_last_error(void);

/**
 * The reference chain: `q = 3`, `u = v = 1`, `Omega = 0.4`, loss `-1.2`
 * on the first site of each cell, 100 cells, periodic boundary.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum FqsStatus fqs_model_reference(struct FqsModel **out);

/**
 * Parses a model from its JSON document and validates it.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum FqsStatus fqs_model_from_json(const char *json, struct FqsModel **out);

/**
 * Serializes the model to JSON. The returned string must be released with
 * [`fqs_string_free`].
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum FqsStatus fqs_model_to_json(const struct FqsModel *model, char **out);

/**
 * Number of lattice sites.
 *
 * # Safety
 * `model` must be a live handle or NULL (which yields 0).
 */
size_t fqs_model_n_sites(const struct FqsModel *model);

/**
 * Sets the boundary condition.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum FqsStatus fqs_model_set_boundary(struct FqsModel *model, enum FqsBoundary boundary);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards. NULL is
 * ignored.
 */
void fqs_model_free(struct FqsModel *model);

/**
 * Quasienergies of the Bloch block at momentum `k`, principal branch.
 * `re` and `im` receive `len` values each (the number of bands).
 *
 * # Safety
 * `re` and `im` must hold `cap` doubles; `len` must be writable.
 */
enum FqsStatus fqs_bloch_quasienergies(const struct FqsModel *model,
                                       double k,
                                       size_t n_steps,
                                       double *re,
                                       double *im,
                                       size_t cap,
                                       size_t *len);

/**
 * Diagonalizes the one-period propagator of the finite chain.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum FqsStatus fqs_spectrum_compute(const struct FqsModel *model,
                                    enum FqsBoundary boundary,
                                    size_t n_steps,
                                    struct FqsSpectrum **out);

/**
 * Number of eigenstates.
 *
 * # Safety
 * `spectrum` must be a live handle or NULL (which yields 0).
 */
size_t fqs_spectrum_len(const struct FqsSpectrum *spectrum);

/**
 * Quasienergy of state `index`, sorted by real then imaginary part.
 *
 * # Safety
 * `spectrum` must be a live handle; `re` and `im` must be writable.
 */
enum FqsStatus fqs_spectrum_eigenvalue(const struct FqsSpectrum *spectrum,
                                       size_t index,
                                       double *re,
                                       double *im);

/**
 * `|phi(x)|^2` of state `index`, one value per site.
 *
 * # Safety
 * `out` must hold `cap` doubles; `len` must be writable.
 */
enum FqsStatus fqs_spectrum_density(const struct FqsSpectrum *spectrum,
                                    size_t index,
                                    double *out,
                                    size_t cap,
                                    size_t *len);

/**
 * # Safety
 * `spectrum` must come from this library and not be used afterwards. NULL
 * is ignored.
 */
void fqs_spectrum_free(struct FqsSpectrum *spectrum);

/**
 * Evolves the initial state given as JSON (e.g.
 * `{"kind":"delta","x0":150}`) and fits the centre-of-mass drift after
 * discarding the first `burn_in` fraction. The velocity is in unit cells
 * per unit time.
 *
 * # Safety
 * `model` must be a live handle, `initial_json` NUL-terminated, and
 * `velocity`, `r_squared` writable.
 */
enum FqsStatus fqs_drift_velocity(const struct FqsModel *model,
                                  const char *initial_json,
                                  size_t n_periods,
                                  double burn_in,
                                  double *velocity,
                                  double *r_squared);

/**
 * Runs one experiment configuration (the JSON accepted by the command-line
 * tool) or a preset name into `out_dir`.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum FqsStatus fqs_run(const char *config_or_preset, const char *out_dir);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards. NULL is
 * ignored.
 */
void fqs_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOQSKIN_H */
