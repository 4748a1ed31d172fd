#ifndef CDPG_H
#define CDPG_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CdpgStatus {
  CDPG_STATUS_OK = 0,
  CDPG_STATUS_NULL_POINTER = 1,
  CDPG_STATUS_INVALID_ARGUMENT = 2,
  CDPG_STATUS_DIMENSION_MISMATCH = 3,
  CDPG_STATUS_PARSE_ERROR = 4,
  CDPG_STATUS_INTERNAL = 5,
} CdpgStatus;

typedef enum CdpgRiskKind {
  CDPG_RISK_KIND_CVAR = 0,
  CDPG_RISK_KIND_EXPECTATION = 1,
  CDPG_RISK_KIND_MEAN_SEMIDEVIATION = 2,
} CdpgRiskKind;

typedef struct CdpgMdp CdpgMdp;

typedef struct CdpgPolicy CdpgPolicy;

typedef struct CdpgTable CdpgTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cdpg_version(void);

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into the library from the same thread.
 */
const char *cdpg_last_error(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CdpgStatus cdpg_mdp_cliffwalk(double p_slip,
                                   double fall_cost,
                                   double step_cost,
                                   double gamma,
                                   struct CdpgMdp **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` as for [`cdpg_mdp_cliffwalk`].
 */
enum CdpgStatus cdpg_mdp_from_json(const char *json, struct CdpgMdp **out);

/**
 * # Safety
 * `mdp` must be null or a handle from this library.
 */
size_t cdpg_mdp_n_states(const struct CdpgMdp *mdp);

/**
 * # Safety
 * `mdp` must be null or a handle from this library.
 */
size_t cdpg_mdp_n_actions(const struct CdpgMdp *mdp);

/**
 * # Safety
 * `mdp` must be null or an unfreed handle from this library.
 */
void cdpg_mdp_free(struct CdpgMdp *mdp);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CdpgStatus cdpg_policy_uniform(size_t n_states, size_t n_actions, struct CdpgPolicy **out);

/**
 * Builds a policy from row-major logits `theta[s * n_actions + a]`.
 *
 * # Safety
 * `theta` must point to `len` readable values.
 */
enum CdpgStatus cdpg_policy_from_theta(size_t n_states,
                                       size_t n_actions,
                                       const double *theta,
                                       size_t len,
                                       struct CdpgPolicy **out);

/**
 * Copies the logits into `out`, which must hold exactly `n_states * n_actions` values.
 *
 * # Safety
 * `out` must point to `len` writable values.
 */
enum CdpgStatus cdpg_policy_theta(const struct CdpgPolicy *policy, double *out, size_t len);

/**
 * # Safety
 * `policy` must be null or an unfreed handle from this library.
 */
void cdpg_policy_free(struct CdpgPolicy *policy);

/**
 * Model-based evaluation with default stopping rules on the grid
 * `[z_min, z_max]` with `n_atoms` atoms.
 *
 * # Safety
 * Handles must come from this library; `out` as for [`cdpg_mdp_cliffwalk`].
 */
enum CdpgStatus cdpg_evaluate(const struct CdpgMdp *mdp,
                              const struct CdpgPolicy *policy,
                              double z_min,
                              double z_max,
                              size_t n_atoms,
                              struct CdpgTable **out);

/**
 * # Safety
 * `table` must be null or a handle from this library.
 */
size_t cdpg_table_n_atoms(const struct CdpgTable *table);

/**
 * Writes the state distribution `Σ_a π(a|s) η^{(s,a)}` into `out`.
 *
 * # Safety
 * `out` must point to `len` writable values.
 */
enum CdpgStatus cdpg_table_state_distribution(const struct CdpgTable *table,
                                              const struct CdpgPolicy *policy,
                                              size_t state,
                                              double *out,
                                              size_t len);

/**
 * Risk of the state distribution at `state`; `alpha` is ignored for the expectation.
 *
 * # Safety
 * `out` must point to one writable value.
 */
enum CdpgStatus cdpg_table_risk(const struct CdpgTable *table,
                                const struct CdpgPolicy *policy,
                                size_t state,
                                enum CdpgRiskKind kind,
                                double alpha,
                                double *out);

/**
 * # Safety
 * `table` must be null or an unfreed handle from this library.
 */
void cdpg_table_free(struct CdpgTable *table);

/**
 * Trains from the uniform policy. `config_json` holds training settings
 * (missing keys take defaults) and may be null for all defaults.
 *
 * # Safety
 * `config_json` must be null or NUL-terminated; `out` as for [`cdpg_mdp_cliffwalk`].
 */
enum CdpgStatus cdpg_train_policy(const struct CdpgMdp *mdp,
                                  enum CdpgRiskKind kind,
                                  double alpha,
                                  const char *config_json,
                                  struct CdpgPolicy **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDPG_H */
