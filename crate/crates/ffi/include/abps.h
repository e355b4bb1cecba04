#ifndef ABPS_H
#define ABPS_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AbpsStatus {
  ABPS_STATUS_OK = 0,
  ABPS_STATUS_NULL_POINTER = 1,
  ABPS_STATUS_INVALID_ARGUMENT = 2,
  ABPS_STATUS_CONFIG = 3,
  ABPS_STATUS_TRAINING = 4,
  ABPS_STATUS_IO = 5,
  /**
   * The call has not produced a result yet (e.g. reading results before
   * `abps_experiment_run`).
   */
  ABPS_STATUS_NOT_READY = 6,
  ABPS_STATUS_PANIC = 7,
} AbpsStatus;

typedef enum AbpsStrategyKind {
  ABPS_STRATEGY_KIND_RANDOM = 0,
  /**
   * `param` is ξ.
   */
  ABPS_STRATEGY_KIND_UCB = 1,
  /**
   * `param` is ε.
   */
  ABPS_STRATEGY_KIND_EPSILON_GREEDY = 2,
  /**
   * `param` is the temperature.
   */
  ABPS_STRATEGY_KIND_SOFTMAX = 3,
} AbpsStrategyKind;

/**
 * A bandit over `k` arms with its own selection RNG.
 */
typedef struct AbpsBandit AbpsBandit;

/**
 * An experiment config plus, after a run, its results.
 */
typedef struct AbpsExperiment AbpsExperiment;

typedef struct AbpsMetrics {
  double best;
  double top25_quantile;
  double variance;
  double median;
} AbpsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *abps_last_error(void);

/**
 * Creates a bandit over `k` arms, arm `i` initialized with
 * `initial_rewards[i]`. `window == 0` selects cumulative means, otherwise a
 * sliding window of that many time steps.
 *
 * # Safety
 * `initial_rewards` must point to `k` doubles; `out` must be writable.
 */
enum AbpsStatus abps_bandit_new(size_t k,
                                const double *initial_rewards,
                                uint64_t window,
                                uint64_t seed,
                                struct AbpsBandit **out);

/**
 * # Safety
 * `bandit` must come from [`abps_bandit_new`] and not be used afterwards.
 */
void abps_bandit_free(struct AbpsBandit *bandit);

/**
 * Advances bandit time and writes the chosen arm to `arm`.
 *
 * # Safety
 * `bandit` must be a live handle; `arm` must be writable.
 */
enum AbpsStatus abps_bandit_select(struct AbpsBandit *bandit,
                                   enum AbpsStrategyKind kind,
                                   double param,
                                   size_t *arm);

/**
 * Credits `reward` to `arm` at the current bandit time.
 *
 * # Safety
 * `bandit` must be a live handle.
 */
enum AbpsStatus abps_bandit_update(struct AbpsBandit *bandit, size_t arm, double reward);

/**
 * Mean and pull count of `arm`; either output may be null.
 *
 * # Safety
 * `bandit` must be a live handle; non-null outputs must be writable.
 */
enum AbpsStatus abps_bandit_arm(struct AbpsBandit *bandit,
                                size_t arm,
                                double *mean,
                                uint64_t *pulls);

/**
 * # Safety
 * `bandit` must be a live handle; `time` must be writable.
 */
enum AbpsStatus abps_bandit_time(struct AbpsBandit *bandit, uint64_t *time);

/**
 * Best, 75th percentile, population variance and median of `n` returns.
 *
 * # Safety
 * `returns` must point to `n` doubles; `out` must be writable.
 */
enum AbpsStatus abps_compute_metrics(const double *returns, size_t n, struct AbpsMetrics *out);

/**
 * Parses and validates an experiment config given as TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum AbpsStatus abps_experiment_from_toml(const char *toml, struct AbpsExperiment **out);

/**
 * # Safety
 * `experiment` must come from [`abps_experiment_from_toml`] and not be used
 * afterwards.
 */
void abps_experiment_free(struct AbpsExperiment *experiment);

/**
 * Overrides the run seed and discards earlier results.
 *
 * # Safety
 * `experiment` must be a live handle.
 */
enum AbpsStatus abps_experiment_set_seed(struct AbpsExperiment *experiment, uint64_t seed);

/**
 * Trains as configured. Blocks until the run finishes.
 *
 * # Safety
 * `experiment` must be a live handle.
 */
enum AbpsStatus abps_experiment_run(struct AbpsExperiment *experiment);

/**
 * Writes the run's CSV files and snapshots into `dir`.
 *
 * # Safety
 * `experiment` must be a live handle; `dir` a NUL-terminated path.
 */
enum AbpsStatus abps_experiment_write(struct AbpsExperiment *experiment, const char *dir);

/**
 * Pool size and number of evaluation epochs (including the initial one).
 *
 * # Safety
 * `experiment` must be a live handle; non-null outputs must be writable.
 */
enum AbpsStatus abps_experiment_shape(struct AbpsExperiment *experiment,
                                      size_t *agents,
                                      size_t *epochs);

/**
 * Copies epoch `epoch`'s per-agent mean returns into `buf` (`len` must be
 * at least the pool size).
 *
 * # Safety
 * `experiment` must be a live handle; `buf` must have room for `len` doubles.
 */
enum AbpsStatus abps_experiment_returns(struct AbpsExperiment *experiment,
                                        size_t epoch,
                                        double *buf,
                                        size_t len);

/**
 * Training interactions of the behavior stream and across all runs.
 *
 * # Safety
 * `experiment` must be a live handle; non-null outputs must be writable.
 */
enum AbpsStatus abps_experiment_interactions(struct AbpsExperiment *experiment,
                                             uint64_t *env_steps,
                                             uint64_t *total_interactions);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ABPS_H */
