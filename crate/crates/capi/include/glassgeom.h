#ifndef GLASSGEOM_H
#define GLASSGEOM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum GgStatus {
  GgOk = 0,
  /**
   * Invalid argument (null pointer, bad UTF-8, bad handle).
   */
  GgErrArgument = 1,
  /**
   * Input violates a mathematical precondition.
   */
  GgErrDomain = 2,
  /**
   * Grids or stacks with mismatched shapes.
   */
  GgErrShape = 3,
  /**
   * Malformed file.
   */
  GgErrFormat = 4,
  /**
   * I/O failure.
   */
  GgErrIo = 5,
  /**
   * Optimization is missing anchoring observations.
   */
  GgErrUnderConstrained = 6,
  /**
   * Numeric failure inside a solver.
   */
  GgErrNumeric = 7,
  /**
   * Nothing to operate on.
   */
  GgErrEmpty = 8,
  /**
   * Anything else.
   */
  GgErrOther = 9,
} GgStatus;

/**
 * Opaque oriented point cloud.
 */
typedef struct GgCloud GgCloud;

/**
 * Opaque float raster (row-major, channel-interleaved).
 */
typedef struct GgGrid GgGrid;

/**
 * Opaque scene description.
 */
typedef struct GgScene GgScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *gg_last_error_message(void);

/**
 * Create a grid from caller-owned data (copied).
 *
 * # Safety
 * `data` must point to `width * height * channels` floats; `out` must be a
 * valid writable pointer.
 */
enum GgStatus gg_grid_create(uint32_t width,
                             uint32_t height,
                             uint32_t channels,
                             const float *data,
                             struct GgGrid **out);

/**
 * Read a grid file (RFG1).
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum GgStatus gg_grid_read(const char *path, struct GgGrid **out);

/**
 * Write a grid file (RFG1).
 *
 * # Safety
 * `grid` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
enum GgStatus gg_grid_write(const struct GgGrid *grid, const char *path);

/**
 * # Safety
 * `grid` must be a live handle (or null, which yields 0).
 */
uint32_t gg_grid_width(const struct GgGrid *grid);

/**
 * # Safety
 * `grid` must be a live handle (or null, which yields 0).
 */
uint32_t gg_grid_height(const struct GgGrid *grid);

/**
 * # Safety
 * `grid` must be a live handle (or null, which yields 0).
 */
uint32_t gg_grid_channels(const struct GgGrid *grid);

/**
 * Copy the grid payload into a caller buffer of `len` floats; `len` must be
 * exactly width * height * channels.
 *
 * # Safety
 * `buffer` must point to `len` writable floats.
 */
enum GgStatus gg_grid_copy_data(const struct GgGrid *grid, float *buffer, uintptr_t len);

/**
 * # Safety
 * `grid` must come from this library and not have been freed; null is a no-op.
 */
void gg_grid_free(struct GgGrid *grid);

/**
 * Parse and validate a scene from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum GgStatus gg_scene_from_json(const char *json, struct GgScene **out);

/**
 * # Safety
 * `scene` must come from this library and not have been freed; null is a no-op.
 */
void gg_scene_free(struct GgScene *scene);

/**
 * Render ground-truth channels. Each non-null out-pointer receives a new
 * grid handle: depth, normals (3ch), mask, boundary, flow (2ch), sensor
 * depth.
 *
 * # Safety
 * `scene` must be a live handle; out-pointers must be writable or null.
 */
enum GgStatus gg_render_channels(const struct GgScene *scene,
                                 struct GgGrid **gt_depth,
                                 struct GgGrid **gt_normal,
                                 struct GgGrid **mask,
                                 struct GgGrid **boundary,
                                 struct GgGrid **gt_flow,
                                 struct GgGrid **sensor_depth);

/**
 * Decode two captured stack directories into a refractive flow grid (2ch).
 *
 * # Safety
 * Paths must be NUL-terminated UTF-8 strings, `mask` a live 1-channel
 * handle with values 0/1, `out` writable.
 */
enum GgStatus gg_decode_flow(const char *obj_stack_dir,
                             const char *ref_stack_dir,
                             const struct GgGrid *mask,
                             float min_contrast,
                             struct GgGrid **out);

/**
 * Invert a flow grid (2ch) to unit normals (3ch) under the thin-object
 * model. `camera_json` is the camera description used by the CLI.
 *
 * # Safety
 * Handles must be live; `camera_json` a NUL-terminated UTF-8 string; `out`
 * writable.
 */
enum GgStatus gg_flow_to_normals(const struct GgGrid *flow,
                                 const struct GgGrid *mask,
                                 const char *camera_json,
                                 double ior,
                                 double plane_depth_m,
                                 double surface_prior_m,
                                 struct GgGrid **out);

/**
 * Refine sensor depth using mask, boundary and normals; also exposes the
 * lifted point cloud when `cloud_out` is non-null.
 *
 * # Safety
 * Handles must be live, `camera_json` a NUL-terminated UTF-8 string, out
 * pointers writable or null.
 */
enum GgStatus gg_refine_depth(const struct GgGrid *sensor_depth,
                              const struct GgGrid *mask,
                              const struct GgGrid *boundary,
                              const struct GgGrid *normals,
                              const char *camera_json,
                              double lambda_data,
                              double lambda_smooth,
                              double lambda_normal,
                              double boundary_atten,
                              struct GgGrid **out,
                              struct GgCloud **cloud_out);

/**
 * Number of points in a cloud handle.
 *
 * # Safety
 * `cloud` must be a live handle (or null, which yields 0).
 */
uintptr_t gg_cloud_len(const struct GgCloud *cloud);

/**
 * Write a cloud as the ASCII `x y z nx ny nz label` table.
 *
 * # Safety
 * `cloud` must be live; `path` a NUL-terminated UTF-8 string.
 */
enum GgStatus gg_cloud_write(const struct GgCloud *cloud, const char *path);

/**
 * # Safety
 * `cloud` must come from this library and not have been freed; null is a no-op.
 */
void gg_cloud_free(struct GgCloud *cloud);

/**
 * Plan grasps on a cloud and write the ranked list as JSON. The returned
 * best energy is NaN when no feasible grasp exists (still `GG_OK`).
 *
 * # Safety
 * `cloud` must be live; `gripper_json` may be null (built-in gripper);
 * `out_json_path` must be a NUL-terminated UTF-8 string; `best_energy`
 * must be writable or null.
 */
enum GgStatus gg_plan_grasps(const struct GgCloud *cloud,
                             const char *gripper_json,
                             uintptr_t n_candidates,
                             uint64_t seed,
                             const char *out_json_path,
                             double *best_energy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GLASSGEOM_H */
