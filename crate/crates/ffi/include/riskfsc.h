#ifndef RISKFSC_H
#define RISKFSC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum RfStatus {
  RF_STATUS_OK = 0,
  RF_STATUS_NULL_POINTER = 1,
  RF_STATUS_INVALID_UTF8 = 2,
  RF_STATUS_SYNTAX = 3,
  RF_STATUS_SEMANTIC = 4,
  RF_STATUS_DIMENSION_MISMATCH = 5,
  RF_STATUS_INVALID_INPUT = 6,
  RF_STATUS_INFEASIBLE = 7,
  RF_STATUS_NON_CONVERGENCE = 8,
  RF_STATUS_SOLVER = 9,
  RF_STATUS_IO = 10,
  RF_STATUS_OUT_OF_RANGE = 11,
  RF_STATUS_INTERNAL = 12,
} RfStatus;

typedef enum RfRiskKind {
  RF_RISK_KIND_EXPECTATION = 0,
  RF_RISK_KIND_CVAR = 1,
} RfRiskKind;

/**
 * Opaque stochastic finite-state controller.
 */
typedef struct RfFsc RfFsc;

/**
 * Opaque POMDP model.
 */
typedef struct RfModel RfModel;

/**
 * Opaque value table `V(s, g)`.
 */
typedef struct RfValues RfValues;

/**
 * Risk measure; `alpha` is read only for [`RfRiskKind::Cvar`].
 */
typedef struct RfRiskSpec {
  enum RfRiskKind kind;
  double alpha;
} RfRiskSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next `rf_*` call on the same thread.
 */
const char *rf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rf_version(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from an `rf_*` function that documents ownership transfer, or be null.
 */
void rf_string_free(char *s);

/**
 * Parses a model in the text format.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum RfStatus rf_model_parse(const char *text_ptr, struct RfModel **out);

/**
 * Builds the grid-world model described by a grid config document.
 *
 * # Safety
 * As [`rf_model_parse`].
 */
enum RfStatus rf_model_gridworld(const char *config, struct RfModel **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards, or be null.
 */
void rf_model_free(struct RfModel *model);

/**
 * Writes `|S|`, `|A|` and `|O|`; any output pointer may be null.
 *
 * # Safety
 * `model` must be a live handle; non-null outputs must be writable.
 */
enum RfStatus rf_model_dims(const struct RfModel *model,
                            size_t *states,
                            size_t *actions,
                            size_t *observations);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum RfStatus rf_model_discount(const struct RfModel *model, double *out);

/**
 * Controller with `nodes` nodes and uniform rows, sized for `model`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum RfStatus rf_fsc_uniform(const struct RfModel *model, size_t nodes, struct RfFsc **out);

/**
 * # Safety
 * As [`rf_model_parse`].
 */
enum RfStatus rf_fsc_from_json(const char *json, struct RfFsc **out);

/**
 * Serializes a controller; free the result with [`rf_string_free`].
 *
 * # Safety
 * `fsc` must be a live handle; `out` must be writable.
 */
enum RfStatus rf_fsc_to_json(const struct RfFsc *fsc, char **out);

/**
 * # Safety
 * `fsc` must come from this library and not be used afterwards, or be null.
 */
void rf_fsc_free(struct RfFsc *fsc);

/**
 * # Safety
 * `fsc` must be a live handle; `out` must be writable.
 */
enum RfStatus rf_fsc_num_nodes(const struct RfFsc *fsc, size_t *out);

/**
 * `ω(next, action | node, observation)`.
 *
 * # Safety
 * `fsc` must be a live handle; `out` must be writable.
 */
enum RfStatus rf_fsc_prob(const struct RfFsc *fsc,
                          size_t node,
                          size_t observation,
                          size_t next,
                          size_t action,
                          double *out);

/**
 * Evaluates `fsc` on `model` under `spec` to sup-norm tolerance `tol`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum RfStatus rf_evaluate(const struct RfModel *model,
                          const struct RfFsc *fsc,
                          struct RfRiskSpec spec,
                          double tol,
                          struct RfValues **out);

/**
 * # Safety
 * `values` must come from this library and not be used afterwards, or be null.
 */
void rf_values_free(struct RfValues *values);

/**
 * # Safety
 * `values` must be a live handle; `out` must be writable.
 */
enum RfStatus rf_values_get(const struct RfValues *values, size_t state, size_t node, double *out);

/**
 * `min_g ι·V(·, g)` for the model's initial distribution.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum RfStatus rf_values_objective(const struct RfValues *values,
                                  const struct RfModel *model,
                                  double *out);

/**
 * Sup-norm Bellman residual recorded by the evaluation.
 *
 * # Safety
 * `values` must be a live handle; `out` must be writable.
 */
enum RfStatus rf_values_residual(const struct RfValues *values, double *out);

/**
 * Runs bounded policy iteration from a one-node uniform controller.
 *
 * # Safety
 * `model` must be a live handle; `out_fsc` must be writable; `out_objective` may be null.
 */
enum RfStatus rf_solve(const struct RfModel *model,
                       struct RfRiskSpec spec,
                       double gamma,
                       size_t max_nodes,
                       size_t new_nodes,
                       uint64_t seed,
                       struct RfFsc **out_fsc,
                       double *out_objective);

/**
 * CVaR at level `alpha` of the distribution with `n` atoms `values[i]`
 * carrying mass `probs[i]`.
 *
 * # Safety
 * `values` and `probs` must point to `n` readable doubles; `out` must be writable.
 */
enum RfStatus rf_cvar(const double *values,
                      const double *probs,
                      size_t n,
                      double alpha,
                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKFSC_H */
