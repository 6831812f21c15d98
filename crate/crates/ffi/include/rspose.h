#ifndef RSPOSE_H
#define RSPOSE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RsposeStatus {
  RSPOSE_STATUS_OK = 0,
  RSPOSE_STATUS_NULL_POINTER = 1,
  RSPOSE_STATUS_INVALID_ARGUMENT = 2,
  RSPOSE_STATUS_INSUFFICIENT_POINTS = 3,
  RSPOSE_STATUS_MISSING_INERTIAL = 4,
  RSPOSE_STATUS_DEGENERATE = 5,
  RSPOSE_STATUS_NO_CONSENSUS = 6,
  RSPOSE_STATUS_PARSE = 7,
  RSPOSE_STATUS_IO = 8,
  RSPOSE_STATUS_INTERNAL = 9,
} RsposeStatus;

typedef enum RsposeAlgorithm {
  RSPOSE_ALGORITHM_LINEAR9 = 0,
  RSPOSE_ALGORITHM_ANGULAR5 = 1,
  RSPOSE_ALGORITHM_ANGULAR3 = 2,
  RSPOSE_ALGORITHM_UNIFORM11 = 3,
  RSPOSE_ALGORITHM_UNIFORM9 = 4,
  /**
   * Global-shutter baseline: Angular5 with zero angular velocity.
   */
  RSPOSE_ALGORITHM_GS5 = 5,
} RsposeAlgorithm;

/**
 * Opaque problem handle.
 */
typedef struct RsposeProblem RsposeProblem;

typedef struct RsposeOptions {
  /**
   * Inlier threshold in pixels.
   */
  double ransac_threshold_px;
  uint64_t seed;
  /**
   * Nonzero runs the Sampson refinement after RANSAC.
   */
  int32_t refine;
} RsposeOptions;

typedef struct RsposeEstimate {
  /**
   * Unit quaternion, scalar first.
   */
  double rotation_wxyz[4];
  /**
   * Row-major rotation matrix.
   */
  double rotation_matrix[9];
  double translation[3];
  double d1[3];
  double d2[3];
  double w1[3];
  double w2[3];
  uint64_t inliers;
  uint64_t total;
  uint64_t iterations;
  /**
   * 1 when the solver and refinement converged.
   */
  int32_t converged;
} RsposeEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *rspose_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rspose_version(void);

struct RsposeOptions rspose_default_options(void);

/**
 * Creates an empty problem. Returns NULL on invalid intrinsics.
 */
struct RsposeProblem *rspose_problem_new(double focal,
                                         double cx,
                                         double cy,
                                         double width,
                                         double height,
                                         double readout_time);

/**
 * Reads a correspondence file into a new problem stored in `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RsposeStatus rspose_problem_load_file(const char *path, struct RsposeProblem **out);

/**
 * Releases a problem. NULL is ignored.
 *
 * # Safety
 * `problem` must come from this library and not be used afterwards.
 */
void rspose_problem_free(struct RsposeProblem *problem);

/**
 * Sets the IMU reading of frame 1 or 2. Either pointer may be NULL to mark
 * that channel as unavailable; otherwise each points to 3 doubles.
 *
 * # Safety
 * `problem` must be a live handle; non-null vectors must hold 3 doubles.
 */
enum RsposeStatus rspose_problem_set_imu(struct RsposeProblem *problem,
                                         uint32_t frame,
                                         const double *gravity,
                                         const double *angular_velocity);

/**
 * Appends a pixel correspondence `(u1, v1)` in frame 1 to `(u2, v2)` in
 * frame 2. Rows are the `v` coordinates.
 *
 * # Safety
 * `problem` must be a live handle.
 */
enum RsposeStatus rspose_problem_add_correspondence(struct RsposeProblem *problem,
                                                    double u1,
                                                    double v1,
                                                    double u2,
                                                    double v2);

/**
 * Number of correspondences, 0 for NULL.
 *
 * # Safety
 * `problem` must be NULL or a live handle.
 */
uintptr_t rspose_problem_len(const struct RsposeProblem *problem);

/**
 * Estimates the relative pose. `options` may be NULL for the defaults.
 *
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
enum RsposeStatus rspose_estimate(const struct RsposeProblem *problem,
                                  enum RsposeAlgorithm algorithm,
                                  const struct RsposeOptions *options,
                                  struct RsposeEstimate *out);

/**
 * Per-row essential matrix of the uniform model, written row-major to
 * `out` (9 doubles). `r` is a row-major rotation; the vectors hold 3
 * doubles each.
 *
 * # Safety
 * All pointers must be valid for the stated lengths.
 */
enum RsposeStatus rspose_essential_uniform(const double *r,
                                           const double *t,
                                           const double *d1,
                                           const double *d2,
                                           const double *w1,
                                           const double *w2,
                                           double row1,
                                           double row2,
                                           double readout_time,
                                           double *out);

/**
 * Sampson distance of normalized points `p1`, `p2` (2 doubles each) under
 * the row-major essential matrix `e`. Returns infinity for a degenerate
 * configuration and NaN for a null pointer.
 *
 * # Safety
 * `e` must hold 9 doubles, `p1` and `p2` 2 doubles each.
 */
double rspose_sampson_error(const double *e, const double *p1, const double *p2);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSPOSE_H */
