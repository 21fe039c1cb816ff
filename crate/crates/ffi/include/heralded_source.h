#ifndef HERALDED_SOURCE_H
#define HERALDED_SOURCE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PhsStatus {
  PHS_STATUS_OK = 0,
  PHS_STATUS_NULL_POINTER = 1,
  PHS_STATUS_DOMAIN = 2,
  PHS_STATUS_UNDEFINED = 3,
  PHS_STATUS_TRUNCATION = 4,
  PHS_STATUS_NEGATIVE_STORAGE = 5,
  PHS_STATUS_INFEASIBLE = 6,
  PHS_STATUS_NON_CONVERGENCE = 7,
  PHS_STATUS_DEGENERATE = 8,
  PHS_STATUS_MALFORMED = 9,
  PHS_STATUS_MEMORY_BUDGET = 10,
  PHS_STATUS_CONFIG = 11,
  PHS_STATUS_IO = 12,
  PHS_STATUS_PANIC = 13,
} PhsStatus;

typedef enum PhsSourceMode {
  PHS_SOURCE_MODE_THERMAL = 0,
  PHS_SOURCE_MODE_COHERENT = 1,
  PHS_SOURCE_MODE_SINGLE_EMITTER = 2,
} PhsSourceMode;

typedef enum PhsObservable {
  PHS_OBSERVABLE_HERALD = 0,
  PHS_OBSERVABLE_P2 = 1,
  PHS_OBSERVABLE_P3 = 2,
  PHS_OBSERVABLE_P23 = 3,
  PHS_OBSERVABLE_G2 = 4,
  PHS_OBSERVABLE_ETA_D = 5,
  PHS_OBSERVABLE_P2_COND = 6,
  PHS_OBSERVABLE_P3_COND = 7,
  PHS_OBSERVABLE_P23_COND = 8,
  PHS_OBSERVABLE_ALPHA = 9,
  PHS_OBSERVABLE_G_SI = 10,
} PhsObservable;

/**
 * Opaque detection record with its cached estimates.
 */
typedef struct PhsRecord PhsRecord;

/**
 * Opaque validated source.
 */
typedef struct PhsSource PhsSource;

/**
 * Physical parameters. Times in seconds; `tau_c` may be `INFINITY`.
 */
typedef struct PhsSourceParams {
  double p1;
  double eta_s;
  double eta_i0;
  double tau_c;
  double t0;
  double bg_idler;
  double bg_signal;
  double read_factor;
  double halt_offset;
} PhsSourceParams;

/**
 * Heralded click and coincidence probabilities at one storage time.
 */
typedef struct PhsConditional {
  double p2_1;
  double p3_1;
  double p23_1;
  /**
   * NaN when undefined.
   */
  double alpha;
} PhsConditional;

/**
 * Per-slot observables of the N-trial protocol. Ratios are NaN when undefined.
 */
typedef struct PhsProtocol {
  uint32_t n_trials;
  double p2;
  double p3;
  double p23;
  double herald;
  double g2;
  double eta_d;
  double alpha;
  double g_si;
} PhsProtocol;

typedef struct PhsEstimate {
  double value;
  double std_error;
  uint64_t n_samples;
} PhsEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *phs_last_error(void);

/**
 * Static name of a status code.
 */
const char *phs_status_name(enum PhsStatus status);

/**
 * Fills `out` with the measured parameters of the reference experiment.
 */
enum PhsStatus phs_source_params_experiment(struct PhsSourceParams *out_params);

/**
 * Validates `params` and allocates a source handle.
 */
enum PhsStatus phs_source_new(const struct PhsSourceParams *params, struct PhsSource **out_source);

void phs_source_free(struct PhsSource *source);

/**
 * Mean excitation number of the write process.
 */
enum PhsStatus phs_source_mean_excitation(const struct PhsSource *source, double *out_n);

/**
 * Heralded probabilities after storage time `tau` seconds.
 */
enum PhsStatus phs_source_conditional(const struct PhsSource *source,
                                      double tau,
                                      struct PhsConditional *out_probs);

/**
 * Closed-form protocol observables for `n_trials` trials.
 */
enum PhsStatus phs_source_protocol(const struct PhsSource *source,
                                   uint32_t n_trials,
                                   struct PhsProtocol *out_obs);

/**
 * Protocol observables by photon-number enumeration. `n_max = 0` picks the
 * smallest truncation meeting the tail bound.
 */
enum PhsStatus phs_source_oracle_protocol(const struct PhsSource *source,
                                          uint32_t n_trials,
                                          size_t n_max,
                                          struct PhsProtocol *out_obs);

/**
 * Trial count in `1..=n_limit` maximizing `eta_D` subject to `g2 <= g2_max`.
 */
enum PhsStatus phs_source_optimize(const struct PhsSource *source,
                                   double g2_max,
                                   uint32_t n_limit,
                                   uint32_t *out_n_star,
                                   double *out_eta_d,
                                   double *out_g2);

/**
 * Runs a seeded protocol campaign in memory.
 */
enum PhsStatus phs_simulate(const struct PhsSource *source,
                            enum PhsSourceMode mode,
                            uint32_t n_trials,
                            uint64_t shots,
                            uint64_t seed,
                            struct PhsRecord **out_record);

/**
 * Loads a binary record file.
 */
enum PhsStatus phs_record_read(const char *path, struct PhsRecord **out_record);

/**
 * Writes the record in binary form, or as CSV when `as_csv` is nonzero.
 */
enum PhsStatus phs_record_write(const struct PhsRecord *record, const char *path, int32_t as_csv);

/**
 * Number of shots covered by the record.
 */
enum PhsStatus phs_record_shot_count(const struct PhsRecord *record, uint64_t *out_count);

/**
 * Estimate of one observable; `PHS_STATUS_UNDEFINED` when a denominator count is zero.
 */
enum PhsStatus phs_record_estimate(const struct PhsRecord *record,
                                   enum PhsObservable observable,
                                   struct PhsEstimate *out_estimate);

void phs_record_free(struct PhsRecord *record);

/**
 * Fits `1 + B exp(-tau^2 / tau_c^2)` to `n` points. `std_error` may be null
 * for an unweighted fit.
 */
enum PhsStatus phs_fit_memory_decay(const double *tau,
                                    const double *g_si,
                                    const double *std_error,
                                    size_t n,
                                    double *out_b,
                                    double *out_tau_c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HERALDED_SOURCE_H */
