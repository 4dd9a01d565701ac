#ifndef BETAQM_H
#define BETAQM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum BqmStatus {
  BQM_STATUS_OK = 0,
  BQM_STATUS_NULL_POINTER = 1,
  BQM_STATUS_INVALID_ARGUMENT = 2,
  BQM_STATUS_DOMAIN = 3,
  BQM_STATUS_IO = 4,
  BQM_STATUS_INTERNAL = 5,
} BqmStatus;

/**
 * Opaque beta drop curve.
 */
typedef struct BqmDropCurve BqmDropCurve;

/**
 * Opaque experiment: a validated spec and, after a run, its results.
 */
typedef struct BqmExperiment BqmExperiment;

/**
 * Opaque queue discipline.
 */
typedef struct BqmQueueDisc BqmQueueDisc;

/**
 * Seed-level metrics of one run.
 */
typedef struct BqmMetrics {
  uint64_t seed;
  double aql;
  double equilibrium_aql;
  double drop_rate;
  double throughput_bps;
  double utilisation_bps;
  double latency_s;
  double jitter_s;
} BqmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *bqm_last_error_message(void);

/**
 * Regularized incomplete beta `I_z(alpha, beta)`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum BqmStatus bqm_beta_inc(double z, double alpha, double beta, double *out);

/**
 * Beta shape parameters with mean `mu` and standard deviation `sigma`.
 *
 * # Safety
 * `alpha` and `beta` must be null or valid for writes.
 */
enum BqmStatus bqm_moments_to_shape(double mu, double sigma, double *alpha, double *beta);

/**
 * Builds the drop curve `p_max * I_z` centred on `center` over
 * `[q_min, q_max]`, with spread `theta` in (0, 1).
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum BqmStatus bqm_drop_curve_new(double q_min,
                                  double q_max,
                                  double center,
                                  double theta,
                                  double p_max,
                                  struct BqmDropCurve **out);

/**
 * Drop probability at average queue `q_avg`; 1 at or above `q_max`.
 *
 * # Safety
 * `curve` must be null or a live handle; `out` null or valid for writes.
 */
enum BqmStatus bqm_drop_curve_eval(const struct BqmDropCurve *curve, double q_avg, double *out);

/**
 * # Safety
 * `curve` must be null or a handle from [`bqm_drop_curve_new`] not yet freed.
 */
void bqm_drop_curve_free(struct BqmDropCurve *curve);

/**
 * Builds a queue discipline by scheme name (`droptail`, `red`, `ared`,
 * `codel`, `pie`, `betared`, `abetared`, `dbetared`). `params` is null or
 * a TOML spec fragment, e.g. `"[betared]\ntheta = 0.2\n"`; unset values
 * take their defaults on the standard dumbbell.
 *
 * # Safety
 * `scheme` must be a NUL-terminated string, `params` null or one, and
 * `out` null or valid for writes.
 */
enum BqmStatus bqm_queue_disc_new(const char *scheme,
                                  const char *params,
                                  struct BqmQueueDisc **out);

/**
 * Arrival hook: `q_cur` packets are waiting at time `now` (seconds).
 * Writes the drop probability, and sets `forced` to 1 when the packet
 * must be dropped regardless of chance.
 *
 * # Safety
 * `disc` must be null or a live handle; `probability` and `forced` null or
 * valid for writes.
 */
enum BqmStatus bqm_queue_disc_on_arrival(struct BqmQueueDisc *disc,
                                         double now,
                                         size_t q_cur,
                                         double *probability,
                                         int32_t *forced);

/**
 * Dequeue hook for sojourn-based schemes. Sets `drop_out` to 1 when the
 * head packet should be discarded.
 *
 * # Safety
 * `disc` must be null or a live handle; `drop_out` null or valid for writes.
 */
enum BqmStatus bqm_queue_disc_on_dequeue(struct BqmQueueDisc *disc,
                                         double now,
                                         double sojourn,
                                         size_t backlog,
                                         int32_t *drop_out);

/**
 * Current average queue estimate, or NaN for schemes without one.
 *
 * # Safety
 * `disc` must be null or a live handle; `out` null or valid for writes.
 */
enum BqmStatus bqm_queue_disc_average(const struct BqmQueueDisc *disc, double *out);

/**
 * # Safety
 * `disc` must be null or a handle from [`bqm_queue_disc_new`] not yet freed.
 */
void bqm_queue_disc_free(struct BqmQueueDisc *disc);

/**
 * Parses and validates a spec given as TOML text.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` null or valid for writes.
 */
enum BqmStatus bqm_experiment_from_str(const char *text, struct BqmExperiment **out);

/**
 * Loads and validates a spec file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` null or valid for writes.
 */
enum BqmStatus bqm_experiment_load(const char *path, struct BqmExperiment **out);

/**
 * Runs every sweep point and seed, replacing earlier results.
 *
 * # Safety
 * `exp` must be null or a live handle.
 */
enum BqmStatus bqm_experiment_run(struct BqmExperiment *exp);

/**
 * Number of (sweep point, seed) results; zero before a run.
 *
 * # Safety
 * `exp` must be null or a live handle; `out` null or valid for writes.
 */
enum BqmStatus bqm_experiment_result_count(const struct BqmExperiment *exp, size_t *out);

/**
 * Metrics of result `index`, in sweep-point then seed order.
 *
 * # Safety
 * `exp` must be null or a live handle; `out` null or valid for writes.
 */
enum BqmStatus bqm_experiment_metrics(const struct BqmExperiment *exp,
                                      size_t index,
                                      struct BqmMetrics *out);

/**
 * Writes the CSV outputs into `dir`, or into the spec's `out` when `dir`
 * is null.
 *
 * # Safety
 * `exp` must be null or a live handle; `dir` null or a NUL-terminated string.
 */
enum BqmStatus bqm_experiment_write(const struct BqmExperiment *exp, const char *dir);

/**
 * # Safety
 * `exp` must be null or a handle from this library not yet freed.
 */
void bqm_experiment_free(struct BqmExperiment *exp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BETAQM_H */
