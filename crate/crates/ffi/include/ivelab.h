#ifndef IVELAB_H
#define IVELAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible call.
 */
typedef enum IvelabStatus {
  Ok = 0,
  NullPointer = 1,
  InvalidArgument = 2,
  DimensionMismatch = 3,
  NotStochastic = 4,
  OutOfRange = 5,
  NotConverged = 6,
  BufferTooSmall = 7,
  Panic = 8,
} IvelabStatus;

/**
 * Opaque tabular MDP.
 */
typedef struct IvelabMdp IvelabMdp;

/**
 * Opaque stochastic policy table.
 */
typedef struct IvelabPolicy IvelabPolicy;

/**
 * Opaque implicit value ensemble: per-row mean and standard deviation.
 */
typedef struct IvelabReport IvelabReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *ivelab_last_error(void);

/**
 * Builds an MDP from row-major `transition[s][a][s']` and `reward[s][a]`.
 *
 * # Safety
 * `transition` must point to `n_states² · n_actions` values, `reward` to
 * `n_states · n_actions`, and `out` to writable storage for one handle.
 */
enum IvelabStatus ivelab_mdp_new(uintptr_t n_states,
                                 uintptr_t n_actions,
                                 const double *transition,
                                 const double *reward,
                                 double gamma,
                                 struct IvelabMdp **out);

/**
 * Builds the windy gridworld. `excluded_row`/`excluded_col` are recorded for
 * completeness; pass a negative value for no excluded cell.
 *
 * # Safety
 * `out` must point to writable storage for one handle.
 */
enum IvelabStatus ivelab_gridworld_new(uintptr_t width,
                                       uintptr_t height,
                                       double wind_prob,
                                       double gamma,
                                       int64_t excluded_row,
                                       int64_t excluded_col,
                                       struct IvelabMdp **out);

/**
 * # Safety
 * `mdp` must be null or a handle from an `ivelab_*_new` call, freed once.
 */
void ivelab_mdp_free(struct IvelabMdp *mdp);

/**
 * Number of states, or 0 for a null handle.
 *
 * # Safety
 * `mdp` must be null or a live handle.
 */
uintptr_t ivelab_mdp_n_states(const struct IvelabMdp *mdp);

/**
 * Number of actions, or 0 for a null handle.
 *
 * # Safety
 * `mdp` must be null or a live handle.
 */
uintptr_t ivelab_mdp_n_actions(const struct IvelabMdp *mdp);

/**
 * Uniform random policy.
 *
 * # Safety
 * `out` must point to writable storage for one handle.
 */
enum IvelabStatus ivelab_policy_uniform(uintptr_t n_states,
                                        uintptr_t n_actions,
                                        struct IvelabPolicy **out);

/**
 * Deterministic policy choosing `actions[s]` in state `s`.
 *
 * # Safety
 * `actions` must point to `n_states` values and `out` to writable storage.
 */
enum IvelabStatus ivelab_policy_deterministic(const uintptr_t *actions,
                                              uintptr_t n_states,
                                              uintptr_t n_actions,
                                              struct IvelabPolicy **out);

/**
 * # Safety
 * `policy` must be null or a handle from an `ivelab_policy_*` call, freed once.
 */
void ivelab_policy_free(struct IvelabPolicy *policy);

/**
 * Writes `V^π` (one value per state) into `out`.
 *
 * # Safety
 * Handles must be live; `out` must hold `out_len` values.
 */
enum IvelabStatus ivelab_policy_evaluation(const struct IvelabMdp *mdp,
                                           const struct IvelabPolicy *policy,
                                           double *out,
                                           uintptr_t out_len);

/**
 * Writes `(P^l)[start, target]` for `l = 1..=l_max` into `out`.
 *
 * # Safety
 * Handles must be live; `out` must hold `out_len ≥ l_max` values.
 */
enum IvelabStatus ivelab_occupancy_curve(const struct IvelabMdp *mdp,
                                         const struct IvelabPolicy *policy,
                                         uintptr_t start,
                                         uintptr_t target,
                                         uintptr_t l_max,
                                         double *out,
                                         uintptr_t out_len);

/**
 * Implicit value ensemble of horizon `n` from a model and state values `v`.
 * With a null `policy` the optimality operator is used.
 *
 * # Safety
 * `mdp` must be live, `policy` null or live, `v` must hold `v_len` values and
 * `out` must point to writable storage for one handle.
 */
enum IvelabStatus ivelab_ive_new(const struct IvelabMdp *mdp,
                                 const struct IvelabPolicy *policy,
                                 const double *v,
                                 uintptr_t v_len,
                                 uintptr_t n,
                                 struct IvelabReport **out);

/**
 * # Safety
 * `report` must be null or a handle from [`ivelab_ive_new`], freed once.
 */
void ivelab_ive_free(struct IvelabReport *report);

/**
 * Number of rows (states) in the report, or 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
uintptr_t ivelab_ive_rows(const struct IvelabReport *report);

/**
 * Writes the per-state ensemble mean into `out`.
 *
 * # Safety
 * `report` must be live; `out` must hold `out_len` values.
 */
enum IvelabStatus ivelab_ive_mean(const struct IvelabReport *report,
                                  double *out,
                                  uintptr_t out_len);

/**
 * Writes the per-state ensemble standard deviation into `out`.
 *
 * # Safety
 * `report` must be live; `out` must hold `out_len` values.
 */
enum IvelabStatus ivelab_ive_std(const struct IvelabReport *report, double *out, uintptr_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IVELAB_H */
