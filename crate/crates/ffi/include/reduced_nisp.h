#ifndef REDUCED_NISP_H
#define REDUCED_NISP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  NISP_STATUS_OK = 0,
  NISP_STATUS_NULL_POINTER = 1,
  NISP_STATUS_INVALID_ARGUMENT = 2,
  NISP_STATUS_IO = 3,
  NISP_STATUS_NUMERICAL = 4,
  NISP_STATUS_NO_CONVERGENCE = 5,
  NISP_STATUS_BUFFER_TOO_SMALL = 6,
  NISP_STATUS_PANIC = 7,
} NispStatus;

typedef enum {
  NISP_METHOD_STANDARD = 0,
  NISP_METHOD_REDUCED = 1,
} NispMethod;

/**
 * Run configuration handle.
 */
typedef struct NispConfig NispConfig;

/**
 * Converged propagation result handle.
 */
typedef struct NispResult NispResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message into `buf` as a NUL-terminated string and
 * returns the full message length in bytes, excluding the terminator.
 * Passing a null `buf` or zero `len` only queries the length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes of writes.
 */
size_t nisp_last_error(char *buf, size_t len);

/**
 * Default configuration: Poisson, `s1 = s2 = 3`, `p = 2`.
 */
NispConfig *nisp_config_new(void);

/**
 * Parses a TOML configuration.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` valid for a write.
 */
NispStatus nisp_config_from_toml(const char *text, NispConfig **out);

/**
 * # Safety
 * `cfg` must be null or a handle from this library not yet freed.
 */
void nisp_config_free(NispConfig *cfg);

/**
 * Sets the expansion order and the quadrature level; `level = 0` uses `p`.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
NispStatus nisp_config_set_order(NispConfig *cfg, uint32_t p, uint32_t level);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
NispStatus nisp_config_set_dims(NispConfig *cfg, uint32_t s1, uint32_t s2);

/**
 * Mesh size of the spatial discretization.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
NispStatus nisp_config_set_mesh(NispConfig *cfg, uint32_t m);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
NispStatus nisp_config_set_reduction(NispConfig *cfg,
                                     double eps_dim1,
                                     double eps_dim2,
                                     double eps_ord1,
                                     double eps_ord2);

/**
 * Runs one propagation with `method` one of the [`NispMethod`] values.
 * A loop that stops at the iteration cap still
 * produces a result but returns `NoConvergence`.
 *
 * # Safety
 * `cfg` must be a live handle and `out` valid for a write.
 */
NispStatus nisp_propagate(const NispConfig *cfg, uint32_t method, NispResult **out);

/**
 * # Safety
 * `res` must be null or a handle from this library not yet freed.
 */
void nisp_result_free(NispResult *res);

/**
 * Iterations, convergence flag, quadrature size and per-module call counts.
 *
 * # Safety
 * `res` must be a live handle; each output pointer must be null or valid
 * for a write (`calls` for two values).
 */
NispStatus nisp_result_summary(const NispResult *res,
                               size_t *iterations,
                               bool *converged,
                               size_t *nodes,
                               size_t *calls);

/**
 * Shape of a module's coefficient matrix: state size and number of terms.
 *
 * # Safety
 * `res` must be a live handle, `rows` and `cols` valid for a write.
 */
NispStatus nisp_result_shape(const NispResult *res, uint32_t module, size_t *rows, size_t *cols);

/**
 * Copies a module's coefficients in column-major order (one column per
 * basis term).
 *
 * # Safety
 * `res` must be a live handle and `buf` valid for `len` writes.
 */
NispStatus nisp_result_coefficients(const NispResult *res,
                                    uint32_t module,
                                    double *buf,
                                    size_t len);

/**
 * Mean and standard deviation of a module's state, `rows` values each.
 *
 * # Safety
 * `res` must be a live handle; `mean` and `std` valid for `len` writes.
 */
NispStatus nisp_result_moments(const NispResult *res,
                               uint32_t module,
                               double *mean,
                               double *std,
                               size_t len);

/**
 * Relative Gramian-weighted error of `res` against `reference`. The
 * reference may use a higher order; both must solve the same problem.
 *
 * # Safety
 * Both handles must be live and `out` valid for a write.
 */
NispStatus nisp_result_relative_error(const NispResult *res,
                                      const NispResult *reference,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REDUCED_NISP_H */
