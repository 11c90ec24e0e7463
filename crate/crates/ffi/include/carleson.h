#ifndef CARLESON_H
#define CARLESON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum CarlesonStatus {
  CARLESON_STATUS_OK = 0,
  CARLESON_STATUS_NULL_POINTER = 1,
  CARLESON_STATUS_INVALID_INPUT = 2,
  CARLESON_STATUS_NOT_A_METRIC = 3,
  CARLESON_STATUS_DEGENERATE = 4,
  CARLESON_STATUS_OUT_OF_RANGE = 5,
  CARLESON_STATUS_PARSE = 6,
  CARLESON_STATUS_IO = 7,
  CARLESON_STATUS_PANIC = 8,
} CarlesonStatus;

// A cube filtration built on a space.
typedef struct CarlesonFiltration CarlesonFiltration;

// A finite metric space with point masses.
typedef struct CarlesonSpace CarlesonSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *carleson_last_error_message(void);

// Euclidean space from `n * dim` row-major coordinates and `n` weights.
//
// # Safety
// `coords` and `weights` must point to `n * dim` and `n` readable doubles.
enum CarlesonStatus carleson_space_euclidean(uintptr_t dim,
                                             uintptr_t n,
                                             const double *coords,
                                             const double *weights,
                                             struct CarlesonSpace **out);

// Generated space: `kind` is one of segment, circle, lipschitz, koch,
// cantor, bpli; `size` is the point count (level for koch, generation for
// cantor).
//
// # Safety
// `kind` must be a NUL-terminated string; `out` must be writable.
enum CarlesonStatus carleson_space_generate(const char *kind,
                                            uint32_t size,
                                            uint64_t seed,
                                            struct CarlesonSpace **out);

// # Safety
// `space` must come from this library and not be used afterwards.
void carleson_space_free(struct CarlesonSpace *space);

// Number of points, 0 for a null handle.
//
// # Safety
// `space` must be null or a live handle.
uintptr_t carleson_space_len(const struct CarlesonSpace *space);

// # Safety
// `space` must be a live handle; `out` must be writable.
enum CarlesonStatus carleson_space_diameter(const struct CarlesonSpace *space, double *out);

// # Safety
// `space` must be a live handle; `out` must be writable.
enum CarlesonStatus carleson_distance(const struct CarlesonSpace *space,
                                      uintptr_t i,
                                      uintptr_t j,
                                      double *out);

// Triangle excess of three points.
//
// # Safety
// `space` must be a live handle; `out` must be writable.
enum CarlesonStatus carleson_excess_delta(const struct CarlesonSpace *space,
                                          uintptr_t i,
                                          uintptr_t j,
                                          uintptr_t k,
                                          double *out);

// Builds shifted filtration `shift` (1-based) over `scales` scales; 0 scales
// means the default range.
//
// # Safety
// `space` must be a live handle; `out` must be writable.
enum CarlesonStatus carleson_filtration_build(const struct CarlesonSpace *space,
                                              uintptr_t scales,
                                              uintptr_t shift,
                                              uint64_t seed,
                                              struct CarlesonFiltration **out);

// # Safety
// `filtration` must come from this library and not be used afterwards.
void carleson_filtration_free(struct CarlesonFiltration *filtration);

// Number of cubes, 0 for a null handle.
//
// # Safety
// `filtration` must be null or a live handle.
uintptr_t carleson_filtration_cube_count(const struct CarlesonFiltration *filtration);

// Number of invariant violations found by validation.
//
// # Safety
// Handles must be live; `out` must be writable.
enum CarlesonStatus carleson_filtration_violation_count(const struct CarlesonSpace *space,
                                                        const struct CarlesonFiltration *filtration,
                                                        uintptr_t *out);

// Carleson total and ratio over the whole filtration.
//
// # Safety
// Handles must be live; `total` and `ratio` must be writable.
enum CarlesonStatus carleson_sum_cubes_root(const struct CarlesonSpace *space,
                                            const struct CarlesonFiltration *filtration,
                                            uintptr_t exact_cutoff,
                                            uintptr_t mc_samples,
                                            uint64_t seed,
                                            double *total,
                                            double *ratio);

// The full root report as JSON; release with `carleson_string_free`.
//
// # Safety
// Handles must be live; `out` must be writable.
enum CarlesonStatus carleson_sum_cubes_json(const struct CarlesonSpace *space,
                                            const struct CarlesonFiltration *filtration,
                                            uintptr_t exact_cutoff,
                                            uintptr_t mc_samples,
                                            uint64_t seed,
                                            char **out);

// Verifies a JSON instance `{tree, alpha, N, eta}` and returns the report
// as JSON; release with `carleson_string_free`.
//
// # Safety
// `instance_json` must be a NUL-terminated string; `out` must be writable.
enum CarlesonStatus carleson_jns_verify_json(const char *instance_json, char **out);

// # Safety
// `s` must be null or a string returned by this library, released once.
void carleson_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARLESON_H */
