#ifndef SMALLGAIN_H
#define SMALLGAIN_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes returned by every fallible function.
 */
typedef enum SgStatus {
  SG_STATUS_OK = 0,
  SG_STATUS_NULL_POINTER = 1,
  SG_STATUS_INVALID_ARGUMENT = 2,
  SG_STATUS_OUT_OF_RANGE = 3,
  SG_STATUS_NUMERICAL = 4,
  SG_STATUS_PANIC = 5,
} SgStatus;

/**
 * Density used by [`sg_divergence`].
 */
typedef enum SgDensity {
  /**
   * `exp(-(x1 + x2))`
   */
  SG_DENSITY_EXP_SUM = 0,
  /**
   * `exp(-(|x1| + |x2|))`
   */
  SG_DENSITY_EXP_ABS_SUM = 1,
} SgDensity;

/**
 * Intervals on which `g` is increasing in floating point.
 */
typedef struct SgAnalysis SgAnalysis;

/**
 * The example interconnection for fixed `n`, input bounds and `δ`.
 */
typedef struct SgModel SgModel;

/**
 * A recorded RK4 trajectory.
 */
typedef struct SgTrajectory SgTrajectory;

/**
 * One interval of an [`SgAnalysis`]. `right_open` marks an interval that
 * was still open at the scan bound.
 */
typedef struct SgInterval {
  double lo;
  double hi;
  bool right_open;
} SgInterval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of this library as a static NUL-terminated string.
 */
const char *sg_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`) and returns the full message length excluding the
 * terminator, or 0 when no error has been recorded. `buf` may be null to
 * query the length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t sg_last_error_message(char *buf, size_t len);

/**
 * Builds the example with `n` summands (`n < 0` selects the infinite sum
 * evaluated on `[0, 100]`), input bounds `u1`, `u2` and gain parameter
 * `delta` in `(0, 1)`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SgStatus sg_model_new(int32_t n, double u1, double u2, double delta, struct SgModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`sg_model_new`] not yet freed.
 */
void sg_model_free(struct SgModel *model);

/**
 * The odd profile `g(r)`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
enum SgStatus sg_g(const struct SgModel *model, double r, double *out);

/**
 * The coupling term `h(r)`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
enum SgStatus sg_h(const struct SgModel *model, double r, double *out);

/**
 * Vector field at `(x1, x2)` with inputs `(u1, u2)`, written to `out[0..2]`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for two writes.
 */
enum SgStatus sg_field(const struct SgModel *model,
                       double x1,
                       double x2,
                       double u1,
                       double u2,
                       double *out);

/**
 * `div(ρ f)` at `(x1, x2)` with inputs `(u1, u2)`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
enum SgStatus sg_divergence(const struct SgModel *model,
                            enum SgDensity density,
                            double x1,
                            double x2,
                            double u1,
                            double u2,
                            double *out);

/**
 * Number of equilibria `r_k` of `g` inside the evaluation range.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
enum SgStatus sg_equilibrium_count(const struct SgModel *model, size_t *out);

/**
 * The `index`-th equilibrium `r_k` (0-based).
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
enum SgStatus sg_equilibrium(const struct SgModel *model, size_t index, double *out);

/**
 * Locates the intervals on which `g` increases in floating point over
 * `[0, scan_bound]`. Non-positive `scan_bound` or `grid_step` select the
 * defaults (`1.1 a` and `scan_bound / 1000`).
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
enum SgStatus sg_sgc_new(const struct SgModel *model,
                         double scan_bound,
                         double grid_step,
                         struct SgAnalysis **out);

/**
 * # Safety
 * `analysis` must be null or a handle from [`sg_sgc_new`] not yet freed.
 */
void sg_sgc_free(struct SgAnalysis *analysis);

/**
 * # Safety
 * `analysis` must be a live handle and `out` valid for writes.
 */
enum SgStatus sg_sgc_count(const struct SgAnalysis *analysis, size_t *out);

/**
 * # Safety
 * `analysis` must be a live handle and `out` valid for writes.
 */
enum SgStatus sg_sgc_interval(const struct SgAnalysis *analysis,
                              size_t index,
                              struct SgInterval *out);

/**
 * Integrates from `(x1, x2)` with constant inputs `(u1, u2)` over
 * `[0, t_end]` with RK4 step `dt`, keeping every `stride`-th state (and
 * the last). A trajectory that leaves the escape ball ends early; see
 * [`sg_trajectory_escaped`].
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
enum SgStatus sg_integrate(const struct SgModel *model,
                           double x1,
                           double x2,
                           double u1,
                           double u2,
                           double t_end,
                           double dt,
                           size_t stride,
                           struct SgTrajectory **out);

/**
 * # Safety
 * `traj` must be null or a handle from [`sg_integrate`] not yet freed.
 */
void sg_trajectory_free(struct SgTrajectory *traj);

/**
 * Number of recorded states.
 *
 * # Safety
 * `traj` must be a live handle and `out` valid for writes.
 */
enum SgStatus sg_trajectory_len(const struct SgTrajectory *traj, size_t *out);

/**
 * Time and state of the `index`-th recorded sample.
 *
 * # Safety
 * `traj` must be a live handle; `t`, `x1` and `x2` valid for writes.
 */
enum SgStatus sg_trajectory_point(const struct SgTrajectory *traj,
                                  size_t index,
                                  double *t,
                                  double *x1,
                                  double *x2);

/**
 * Writes whether the trajectory left the escape ball.
 *
 * # Safety
 * `traj` must be a live handle and `out` valid for writes.
 */
enum SgStatus sg_trajectory_escaped(const struct SgTrajectory *traj, bool *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMALLGAIN_H */
