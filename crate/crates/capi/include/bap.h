#ifndef BAP_CAPI_H
#define BAP_CAPI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum {
  BapOk = 0,
  BapErrInvalidArgument = 1,
  BapErrIo = 2,
  BapErrSolver = 3,
  BapErrOracle = 4,
  BapErrNullPointer = 5,
  BapErrUtf8 = 6,
  BapErrBufferTooSmall = 7,
  BapErrPanic = 8,
} BapStatusCode;

/**
 * Solving method selector.
 */
typedef enum {
  BapMethodMap = 0,
  BapMethodCimmino = 1,
  BapMethod3pm = 2,
  BapMethodA3pm = 3,
  BapMethodSccrm = 4,
  BapMethodCrm = 5,
  BapMethodDykstra = 6,
} BapMethod;

/**
 * Stepsize schedule selector; `harmonic_mu` is read only for the
 * harmonic family.
 */
typedef enum {
  BapScheduleInvK = 0,
  BapScheduleInvSqrtK = 1,
  BapScheduleHarmonic = 2,
} BapSchedule;

/**
 * Opaque problem instance.
 */
typedef struct BapInstance BapInstance;

/**
 * Solve configuration. Nonpositive tolerances and zero limits disable the
 * corresponding stop; at least one of `max_iters` / `time_limit_s` must be
 * active.
 */
typedef struct {
  BapSchedule schedule;
  double harmonic_mu;
  double err_tol;
  double feas_tol;
  uint64_t max_iters;
  double time_limit_s;
  int32_t parallel_projections;
} BapSolveOptions;

/**
 * Terminal solve summary. `final_err` is NaN when the instance carries no
 * reference solution.
 */
typedef struct {
  uint64_t iterations;
  double wall_time_s;
  double final_err;
  double final_delta;
  /**
   * 0 converged, 1 iteration limit, 2 time limit, 3 error.
   */
  int32_t status;
} BapReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *bap_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *bap_version(void);

/**
 * Generate an ellipsoid-family instance. Returns null on error.
 */
BapInstance *bap_gen_ellipsoid(size_t m, size_t n, double theta, uint64_t seed);

/**
 * Generate a polyhedron-family instance. Returns null on error.
 */
BapInstance *bap_gen_polyhedron(size_t m, size_t n, size_t k, double alpha_spread, uint64_t seed);

/**
 * Load an instance from a JSON file. Returns null on error.
 *
 * # Safety
 * `path` must point to a NUL-terminated string.
 */
BapInstance *bap_instance_load(const char *path);

/**
 * Save an instance to a JSON file.
 *
 * # Safety
 * `instance` must be a live handle from this library; `path` must point
 * to a NUL-terminated string.
 */
BapStatusCode bap_instance_save(const BapInstance *instance, const char *path);

/**
 * Release an instance handle. Null is ignored.
 *
 * # Safety
 * `instance` must have been returned by this library and not freed yet.
 */
void bap_instance_free(BapInstance *instance);

/**
 * Ambient dimension n, or 0 for null handles.
 *
 * # Safety
 * `instance` must be a live handle.
 */
size_t bap_instance_dim(const BapInstance *instance);

/**
 * Number of sets m, or 0 for null handles.
 *
 * # Safety
 * `instance` must be a live handle.
 */
size_t bap_instance_num_sets(const BapInstance *instance);

/**
 * Copy the anchor point into `out` (length `len`, must equal the
 * dimension).
 *
 * # Safety
 * `instance` must be a live handle and `out` must point to `len` doubles.
 */
BapStatusCode bap_instance_anchor(const BapInstance *instance, double *out, size_t len);

/**
 * Compute and store a certified reference solution (tolerance in
 * (0, 1e-6]).
 *
 * # Safety
 * `instance` must be a live handle.
 */
BapStatusCode bap_compute_reference(BapInstance *instance, double tol);

/**
 * Copy the reference solution into `out`; fails when none is stored.
 * `certified_tol` may be null.
 *
 * # Safety
 * `instance` must be a live handle and `out` must point to `len` doubles.
 */
BapStatusCode bap_instance_reference(const BapInstance *instance,
                                     double *out,
                                     size_t len,
                                     double *certified_tol);

/**
 * Run one solve and fill `report`.
 *
 * # Safety
 * `instance` must be a live handle; `options` and `report` must be valid
 * pointers.
 */
BapStatusCode bap_solve(const BapInstance *instance,
                        BapMethod method,
                        const BapSolveOptions *options,
                        BapReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BAP_CAPI_H */
