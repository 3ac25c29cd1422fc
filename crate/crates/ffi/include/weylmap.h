#ifndef WEYLMAP_H
#define WEYLMAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call. Mirrors the CLI exit codes, with two extra cases for
 * contract violations at the boundary itself.
 */
typedef enum wm_status {
  WM_OK = 0,
  /**
   * A mathematical admissibility assumption failed.
   */
  WM_ASSUMPTION = 1,
  /**
   * Malformed input: bad JSON, bad grid, bad schedule.
   */
  WM_FORMAT = 2,
  /**
   * A solve or extrapolation did not settle.
   */
  WM_NONCONVERGENCE = 3,
  /**
   * A required pointer was null or a buffer too small.
   */
  WM_NULL_ARGUMENT = 4,
  /**
   * An internal invariant broke; the message names it.
   */
  WM_INTERNAL = 5,
} wm_status;

typedef struct wm_system wm_system;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the most recent failure on this thread into `buf`
 * (NUL-terminated, truncated to `cap`). Returns the full message length.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null (then only the
 * length is returned).
 */
uintptr_t wm_last_error(char *buf, uintptr_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wm_version(void);

/**
 * Parses and validates a system description; on success stores a handle in
 * `out`. The handle is immutable and safe to share across threads.
 *
 * # Safety
 * `text` must be a NUL-terminated UTF-8 string; `out` must be a valid
 * pointer to a handle slot.
 */
enum wm_status wm_system_load_json(const char *text, struct wm_system **out);

/**
 * Releases a handle. Null is a no-op.
 *
 * # Safety
 * `sys` must have come from `wm_system_load_json` and not be freed twice.
 */
void wm_system_free(struct wm_system *sys);

/**
 * Matrix dimension `n`, or 0 for a null handle.
 *
 * # Safety
 * `sys` must be a live handle or null.
 */
uintptr_t wm_system_order(const struct wm_system *sys);

/**
 * Number of separation rays, or 0 for a null handle.
 *
 * # Safety
 * `sys` must be a live handle or null.
 */
uintptr_t wm_system_ray_count(const struct wm_system *sys);

/**
 * Evaluates the potential `q(x)` into `out` (interleaved complex,
 * row-major, `2 n^2` doubles).
 *
 * # Safety
 * `sys` must be a live handle; `out` must hold `2 n^2` doubles.
 */
enum wm_status wm_potential_eval(const struct wm_system *sys, double x, double *out);

/**
 * Samples the spectral jump `P_hat(x, rho)` on one separation ray at the
 * given radius, into `out` (interleaved complex, row-major).
 *
 * # Safety
 * `sys` must be a live handle; `out` must hold `2 n^2` doubles.
 */
enum wm_status wm_jump_sample(const struct wm_system *sys,
                              uintptr_t ray,
                              double radius,
                              double x,
                              double *out);

/**
 * Recovers the potential on a grid of abscissas by the truncated contour
 * integral. `out` receives one interleaved complex matrix per abscissa
 * (`nx * 2 n^2` doubles). Passing 0 for `n_schedule` selects the default
 * truncation radii 10, 20, 40, 80.
 *
 * # Safety
 * `sys` must be a live handle; `xs` must hold `nx` doubles; `r_schedule`
 * must hold `n_schedule` doubles or be null when `n_schedule` is 0; `out`
 * must hold `nx * 2 n^2` doubles.
 */
enum wm_status wm_reconstruct(const struct wm_system *sys,
                              const double *xs,
                              uintptr_t nx,
                              const double *r_schedule,
                              uintptr_t n_schedule,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WEYLMAP_H */
