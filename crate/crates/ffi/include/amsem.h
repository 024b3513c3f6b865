#ifndef AMSEM_H
#define AMSEM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AmsemStatus {
  AMSEM_STATUS_OK = 0,
  AMSEM_STATUS_NULL_ARGUMENT = 1,
  AMSEM_STATUS_INVALID_UTF8 = 2,
  AMSEM_STATUS_MESH = 3,
  AMSEM_STATUS_ANNOTATION = 4,
  AMSEM_STATUS_SOLVER = 5,
  AMSEM_STATUS_FEM = 6,
  AMSEM_STATUS_OPTIMIZE = 7,
  AMSEM_STATUS_PRINT = 8,
  AMSEM_STATUS_IO = 9,
  AMSEM_STATUS_JSON = 10,
  AMSEM_STATUS_PANIC = 11,
} AmsemStatus;

/**
 * Objective selector for [`amsem_spec_optimize`].
 */
typedef enum AmsemObjective {
  AMSEM_OBJECTIVE_COMPLIANCE = 0,
  AMSEM_OBJECTIVE_AVERAGE_TEMPERATURE = 1,
  AMSEM_OBJECTIVE_MASS = 2,
  AMSEM_OBJECTIVE_MATERIAL_EFFORT = 3,
} AmsemObjective;

/**
 * A loaded print scenario with its initial plan.
 */
typedef struct AmsemScenario AmsemScenario;

/**
 * A mesh with its annotation bound to it.
 */
typedef struct AmsemSpec AmsemSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next `amsem_*` call on this thread.
 */
const char *amsem_last_error(void);

/**
 * Library version as a static string.
 */
const char *amsem_version(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from an `amsem_*` output and not have been freed.
 */
void amsem_string_free(char *s);

/**
 * Parse a mesh and an annotation (both JSON text) and bind them.
 *
 * # Safety
 * String arguments must be valid nul-terminated strings; `out` must be writable.
 */
enum AmsemStatus amsem_spec_from_json(const char *mesh_json,
                                      const char *annotation_json,
                                      struct AmsemSpec **out);

/**
 * # Safety
 * `spec` must be null or come from [`amsem_spec_from_json`] and not have been freed.
 */
void amsem_spec_free(struct AmsemSpec *spec);

/**
 * Number of vertices and elements of the bound mesh.
 *
 * # Safety
 * `spec` must be a live handle; the outputs must be writable or null.
 */
enum AmsemStatus amsem_spec_size(const struct AmsemSpec *spec,
                                 size_t *n_vertices,
                                 size_t *n_elements);

/**
 * Check every property of the annotation under `field_json` (a material
 * field) or, when it is null, under the midpoints of the annotated ranges.
 * `all_pass` receives 1 or 0; `verdicts_json` receives a JSON array.
 *
 * # Safety
 * `spec` must be a live handle; `field_json` null or a valid string;
 * outputs writable or null.
 */
enum AmsemStatus amsem_spec_verify(const struct AmsemSpec *spec,
                                   const char *field_json,
                                   int32_t *all_pass,
                                   char **verdicts_json);

/**
 * Solve the inversion problem over all elements. `feasible` receives 1 or
 * 0; `result_json` receives the full result.
 *
 * # Safety
 * `spec` must be a live handle; outputs writable or null.
 */
enum AmsemStatus amsem_spec_optimize(const struct AmsemSpec *spec,
                                     enum AmsemObjective objective,
                                     int32_t *feasible,
                                     char **result_json);

/**
 * Load a scenario file (references relative to its directory) and compute
 * its initial plan.
 *
 * # Safety
 * `path` must be a valid string; `out` writable.
 */
enum AmsemStatus amsem_scenario_load(const char *path, struct AmsemScenario **out);

/**
 * # Safety
 * `scenario` must be null or come from [`amsem_scenario_load`] and not have been freed.
 */
void amsem_scenario_free(struct AmsemScenario *scenario);

/**
 * Run the scenario with `seed`. `succeeded` receives 1 when the printed
 * part passes its final check, 0 when it is rejected or the print aborts.
 * `report_json` and `history_csv` receive the report and its history.
 *
 * # Safety
 * `scenario` must be a live handle; outputs writable or null.
 */
enum AmsemStatus amsem_scenario_run(const struct AmsemScenario *scenario,
                                    uint64_t seed,
                                    int32_t *succeeded,
                                    char **report_json,
                                    char **history_csv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMSEM_H */
