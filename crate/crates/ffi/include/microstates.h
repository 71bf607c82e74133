#ifndef MICROSTATES_H
#define MICROSTATES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum MsStatus {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_POINTER = 1,
  MS_STATUS_INVALID_ARGUMENT = 2,
  MS_STATUS_PARSE = 3,
  MS_STATUS_SIZE_LIMIT = 4,
  MS_STATUS_IO = 5,
  MS_STATUS_BUFFER_TOO_SMALL = 6,
  MS_STATUS_PANIC = 7,
} MsStatus;

typedef enum MsFamily {
  MS_FAMILY_FREE_GROUP = 0,
  MS_FAMILY_INTEGER_LATTICE = 1,
  MS_FAMILY_CYCLIC = 2,
  MS_FAMILY_SURFACE_GENUS = 3,
} MsFamily;

typedef enum MsQuotient {
  MS_QUOTIENT_CYCLIC_SHIFT = 0,
  MS_QUOTIENT_TORUS_SHIFT = 1,
} MsQuotient;

typedef enum MsRelations {
  /**
   * The presentation's relations plus every `s s⁻¹`.
   */
  MS_RELATIONS_PRESENTATION = 0,
  /**
   * Only `s s⁻¹`.
   */
  MS_RELATIONS_TRIVIAL = 1,
} MsRelations;

typedef struct MsCohomology MsCohomology;

typedef struct MsGraph MsGraph;

typedef struct MsPresentation MsPresentation;

/**
 * Outcome of a Bernoulli-walk connection attempt.
 */
typedef struct MsConnectResult {
  bool success;
  uint32_t attempts;
  double max_step_distance;
  double worst_tv;
} MsConnectResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `cap` bytes. Returns the untruncated length without the NUL.
 */
size_t ms_last_error_message(char *buf, size_t cap);

/**
 * Builtin presentation. `param` is the rank for free groups and lattices,
 * the order for cyclic groups and the genus for surface groups.
 */
enum MsStatus ms_presentation_builtin(enum MsFamily family,
                                      uint32_t param,
                                      struct MsPresentation **out);

/**
 * Parses the presentation text format (`generators k`, then one relation per line).
 */
enum MsStatus ms_presentation_parse(const char *source, struct MsPresentation **out);

void ms_presentation_free(struct MsPresentation *p);

size_t ms_presentation_generator_count(const struct MsPresentation *p);

/**
 * Builtin finite model acting with `generator_count` generators.
 */
enum MsStatus ms_graph_builtin(enum MsQuotient kind,
                               size_t n,
                               size_t generator_count,
                               struct MsGraph **out);

/**
 * Parses the permutation-representation text format.
 */
enum MsStatus ms_graph_parse(const char *source, size_t generator_count, struct MsGraph **out);

void ms_graph_free(struct MsGraph *g);

size_t ms_graph_vertex_count(const struct MsGraph *g);

/**
 * `|S|·|V|`, the length of every cochain on this graph.
 */
size_t ms_graph_edge_count(const struct MsGraph *g);

/**
 * Solves for `Z¹`, `B¹` and `H¹` over `Z/modulus`.
 */
enum MsStatus ms_cohomology_solve(const struct MsGraph *graph,
                                  const struct MsPresentation *presentation,
                                  enum MsRelations relations,
                                  uint32_t modulus,
                                  struct MsCohomology **out);

void ms_cohomology_free(struct MsCohomology *h);

enum MsStatus ms_cohomology_h1_size(const struct MsCohomology *h, uint64_t *size_out);

/**
 * Invariant factors of `H¹`, ascending; empty when `H¹` is trivial.
 */
enum MsStatus ms_cohomology_invariant_factors(const struct MsCohomology *h,
                                              uint64_t *buf,
                                              size_t cap,
                                              size_t *len_out);

/**
 * Writes the `H¹` class coordinates of a cocycle. Fails with
 * `InvalidArgument` when `values` is not a cocycle.
 */
enum MsStatus ms_cohomology_class_of(const struct MsCohomology *h,
                                     const uint32_t *values,
                                     size_t len,
                                     uint64_t *buf,
                                     size_t cap,
                                     size_t *len_out);

/**
 * Draws `class_rep + dθ` with `θ` uniform, where `class_rep` represents the
 * class at position `class_index` (zero first). Writes `edge_count` values.
 */
enum MsStatus ms_popa_sample(const struct MsCohomology *h,
                             const struct MsPresentation *presentation,
                             enum MsRelations relations,
                             size_t class_index,
                             uint64_t seed,
                             uint64_t trial,
                             uint32_t *buf,
                             size_t cap,
                             size_t *len_out);

/**
 * `max_w (1/|V|) Σ_v |loop sum|` for an edge labelling mod `modulus`.
 */
enum MsStatus ms_near_cocycle_defect(const struct MsGraph *graph,
                                     const struct MsPresentation *presentation,
                                     enum MsRelations relations,
                                     uint32_t modulus,
                                     const uint32_t *values,
                                     size_t len,
                                     double *defect_out);

/**
 * Distance from an edge labelling to the coboundaries. With `exact` false
 * the value is an upper bound from coordinate descent.
 */
enum MsStatus ms_coset_distance(const struct MsGraph *graph,
                                uint32_t modulus,
                                const uint32_t *values,
                                size_t len,
                                bool exact,
                                uint64_t seed,
                                double *distance_out);

/**
 * Connects two microstates over `{0..alphabet_size-1}` by the Bernoulli
 * walk with uniform letters, default `κ` and `s` for `delta`, inside the
 * TV ball of radius `epsilon` on the word ball of `window_radius`.
 */
enum MsStatus ms_connect_bernoulli(const struct MsGraph *graph,
                                   const struct MsPresentation *presentation,
                                   uint32_t alphabet_size,
                                   double delta,
                                   double epsilon,
                                   size_t window_radius,
                                   uint64_t seed,
                                   const uint32_t *x,
                                   const uint32_t *y,
                                   size_t len,
                                   struct MsConnectResult *result_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MICROSTATES_H */
