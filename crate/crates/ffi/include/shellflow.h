#ifndef SHELLFLOW_H
#define SHELLFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Numerical failures use the same values as the command line exit codes.
 */
typedef enum SfStatus {
  SfStatus_Ok = 0,
  SfStatus_NullPointer = 1,
  SfStatus_Config = 2,
  SfStatus_Io = 3,
  SfStatus_InvalidArgument = 4,
  SfStatus_MeshTangling = 10,
  SfStatus_Geometry = 11,
  SfStatus_Picard = 12,
  SfStatus_Solver = 14,
  SfStatus_Projection = 15,
  SfStatus_Panic = 99,
} SfStatus;

/**
 * A simulation together with its current state.
 */
typedef struct SfSimulation SfSimulation;

/**
 * Energies of the current state.
 */
typedef struct SfEnergy {
  double kinetic;
  double willmore;
  double membrane;
  /**
   * Residual of the discrete energy law over the last step; 0 before the first.
   */
  double balance;
  /**
   * Picard sweeps of the last step.
   */
  uint32_t sweeps;
} SfEnergy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message into `buf` (NUL terminated, truncated to `len`).
 * Returns the full message length, or 0 if there is none.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
uintptr_t sf_last_error(char *buf, uintptr_t len);

/**
 * Library version as a static NUL terminated string.
 */
const char *sf_version(void);

/**
 * Creates a simulation of the desk configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SfStatus sf_simulation_new_desk(struct SfSimulation **out);

/**
 * Creates a simulation from TOML configuration text.
 *
 * # Safety
 * `toml` must be a NUL terminated string and `out` a valid pointer.
 */
enum SfStatus sf_simulation_new(const char *toml, struct SfSimulation **out);

/**
 * # Safety
 * `sim` must come from `sf_simulation_new*` and not be used afterwards. Null is ignored.
 */
void sf_simulation_free(struct SfSimulation *sim);

/**
 * Advances `steps` time steps. On failure the state stays at the last completed step.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum SfStatus sf_simulation_step(struct SfSimulation *sim, uint32_t steps);

/**
 * Current step index and time.
 *
 * # Safety
 * `sim` must be a live handle; `step` and `t` valid pointers or null.
 */
enum SfStatus sf_simulation_time(struct SfSimulation *sim, uint64_t *step, double *t);

/**
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum SfStatus sf_simulation_energy(struct SfSimulation *sim, struct SfEnergy *out);

/**
 * Chart dimensions of the height field, `n1 * n2` values in row major order.
 *
 * # Safety
 * `sim` must be a live handle; `n1` and `n2` valid pointers.
 */
enum SfStatus sf_simulation_chart(struct SfSimulation *sim, uintptr_t *n1, uintptr_t *n2);

/**
 * Copies the boundary height into `buf`, which must hold `n1 * n2` values.
 *
 * # Safety
 * `sim` must be a live handle and `buf` valid for `len` doubles.
 */
enum SfStatus sf_simulation_height(struct SfSimulation *sim, double *buf, uintptr_t len);

/**
 * Writes the current state as a checkpoint.
 *
 * # Safety
 * `sim` must be a live handle and `path` a NUL terminated string.
 */
enum SfStatus sf_simulation_save(struct SfSimulation *sim, const char *path);

/**
 * Replaces the current state by a checkpoint written with the same configuration.
 *
 * # Safety
 * `sim` must be a live handle and `path` a NUL terminated string.
 */
enum SfStatus sf_simulation_load(struct SfSimulation *sim, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHELLFLOW_H */
