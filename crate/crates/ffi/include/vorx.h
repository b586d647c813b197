#ifndef VORX_H
#define VORX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  VORX_STATUS_OK = 0,
  VORX_STATUS_NULL_POINTER = 1,
  VORX_STATUS_INVALID_ARGUMENT = 2,
  VORX_STATUS_OUT_OF_GRID = 3,
  VORX_STATUS_BUILD_ERROR = 4,
  VORX_STATUS_CONFIG_ERROR = 5,
  VORX_STATUS_IO_ERROR = 6,
  VORX_STATUS_FORMAT_ERROR = 7,
  VORX_STATUS_BUFFER_TOO_SMALL = 8,
  VORX_STATUS_PANIC = 9,
} VorxStatus;

/**
 * Opaque Voronoi diagram handle.
 */
typedef struct VorxDiagram VorxDiagram;

/**
 * Opaque spatial index handle.
 */
typedef struct VorxIndex VorxIndex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty when none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *vorx_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *vorx_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void vorx_string_free(char *s);

/**
 * Builds a diagram from `n` sites. `ids` may be null, meaning `0..n`.
 *
 * # Safety
 * `xs`, `ys` (and `ids` when non-null) must point to `n` readable values.
 */
VorxStatus vorx_diagram_build(const double *xs,
                              const double *ys,
                              const uint32_t *ids,
                              size_t n,
                              double x0,
                              double y0,
                              double x1,
                              double y1,
                              VorxDiagram **out);

/**
 * # Safety
 * `d` must come from `vorx_diagram_build` and not be freed twice.
 */
void vorx_diagram_free(VorxDiagram *d);

/**
 * Counts of vertices, edges and cells; any out-pointer may be null.
 *
 * # Safety
 * `d` must be a live diagram handle.
 */
VorxStatus vorx_diagram_counts(const VorxDiagram *d,
                               size_t *vertices,
                               size_t *edges,
                               size_t *cells);

/**
 * Id of the site whose cell contains `(x, y)`.
 *
 * # Safety
 * `d` must be a live diagram handle.
 */
VorxStatus vorx_diagram_locate(const VorxDiagram *d, double x, double y, uint32_t *out_id);

/**
 * Copies the cell polygon of `site_id` as interleaved `x, y` pairs into
 * `xy` (room for `cap_points` points). `len_points` always receives the
 * polygon size; a short buffer yields `BufferTooSmall`.
 *
 * # Safety
 * `d` must be a live handle and `xy` must have room for `2 * cap_points`
 * doubles.
 */
VorxStatus vorx_diagram_cell_polygon(const VorxDiagram *d,
                                     uint32_t site_id,
                                     double *xy,
                                     size_t cap_points,
                                     size_t *len_points);

/**
 * Build statistics as a JSON object.
 *
 * # Safety
 * `d` must be a live handle; `out` receives a string for `vorx_string_free`.
 */
VorxStatus vorx_diagram_stats_json(const VorxDiagram *d, char **out);

/**
 * # Safety
 * `out` must be writable.
 */
VorxStatus vorx_morton_encode(uint8_t bits, uint64_t ix, uint64_t iy, uint64_t *out);

/**
 * # Safety
 * `ix` and `iy` must be writable.
 */
VorxStatus vorx_morton_decode(uint8_t bits, uint64_t key, uint32_t *ix, uint32_t *iy);

/**
 * Key ranges covering a cell extent, written as `[lo, hi]` pairs into
 * `pairs` (room for `cap_pairs` ranges). `max_ranges == 0` means unbounded.
 * `n_pairs` always receives the range count.
 *
 * # Safety
 * `pairs` must have room for `2 * cap_pairs` values.
 */
VorxStatus vorx_morton_decompose(uint8_t bits,
                                 uint32_t ix0,
                                 uint32_t iy0,
                                 uint32_t ix1,
                                 uint32_t iy1,
                                 size_t max_ranges,
                                 uint64_t *pairs,
                                 size_t cap_pairs,
                                 size_t *n_pairs);

/**
 * Empty index over a world box with `bits` per dimension and the given page
 * capacity (0 selects the default).
 *
 * # Safety
 * `out` must be writable.
 */
VorxStatus vorx_index_new(double x0,
                          double y0,
                          double x1,
                          double y1,
                          uint8_t bits,
                          size_t page_capacity,
                          VorxIndex **out);

/**
 * # Safety
 * `ix` must come from this library and not be freed twice.
 */
void vorx_index_free(VorxIndex *ix);

/**
 * Inserts a reading at world position `(x, y)`; `key_out` may be null.
 *
 * # Safety
 * `ix` must be a live handle; `payload` must hold `payload_len` bytes.
 */
VorxStatus vorx_index_insert(VorxIndex *ix,
                             uint32_t site_id,
                             double x,
                             double y,
                             uint64_t timestamp_us,
                             const uint8_t *payload,
                             size_t payload_len,
                             uint64_t *key_out);

/**
 * # Safety
 * `ix` must be a live handle.
 */
VorxStatus vorx_index_len(const VorxIndex *ix, size_t *out);

/**
 * Range search over a cell extent. Writes the match count and, when `keys`
 * is non-null, up to `cap` matching keys in ascending order.
 *
 * # Safety
 * `ix` must be a live handle; `keys` must have room for `cap` values.
 */
VorxStatus vorx_index_range_search(const VorxIndex *ix,
                                   uint32_t ix0,
                                   uint32_t iy0,
                                   uint32_t ix1,
                                   uint32_t iy1,
                                   uint64_t *keys,
                                   size_t cap,
                                   size_t *n_out);

/**
 * Index counters and sizes as a JSON object.
 *
 * # Safety
 * `ix` must be a live handle.
 */
VorxStatus vorx_index_stats_json(const VorxIndex *ix, char **out);

/**
 * Writes a `VORX1` snapshot to `path`.
 *
 * # Safety
 * `ix` must be a live handle and `path` a nul-terminated string.
 */
VorxStatus vorx_index_save(const VorxIndex *ix, const char *path);

/**
 * Loads a snapshot written for the same box and grid resolution.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
VorxStatus vorx_index_load(const char *path,
                           double x0,
                           double y0,
                           double x1,
                           double y1,
                           uint8_t bits,
                           size_t page_capacity,
                           VorxIndex **out);

/**
 * Predicted mean sojourn of the single-server queue.
 *
 * # Safety
 * `out` must be writable.
 */
VorxStatus vorx_kingman_sojourn(double rho,
                                double t_bar,
                                double a_bar,
                                double var_a,
                                double var_s,
                                double *out);

/**
 * Poisson probability of `x` arrivals at rate `lambda`.
 *
 * # Safety
 * `out` must be writable.
 */
VorxStatus vorx_poisson_pmf(double lambda, int64_t x, double *out);

/**
 * Runs a simulation from a JSON pipeline config and returns the report as
 * JSON.
 *
 * # Safety
 * `config_json` must be a nul-terminated string; `report_json` receives a
 * string for `vorx_string_free`.
 */
VorxStatus vorx_simulate_json(const char *config_json, char **report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VORX_H */
