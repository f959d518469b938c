#ifndef GASKET_FFI_H
#define GASKET_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every entry point.
 */
typedef enum GasketStatus {
  GasketStatus_Ok = 0,
  GasketStatus_NullPointer = 1,
  GasketStatus_InvalidSymbol = 2,
  GasketStatus_Domain = 3,
  GasketStatus_DepthGuard = 4,
  GasketStatus_NoConvergence = 5,
  GasketStatus_InvalidArgument = 6,
  GasketStatus_FieldInconsistent = 7,
  GasketStatus_EmptySet = 8,
  GasketStatus_Io = 9,
  GasketStatus_Panic = 10,
} GasketStatus;

/**
 * Holds the normalization constant `c` of the matrix measure.
 */
typedef struct GasketSession GasketSession;

typedef struct GasketVec2 {
  double x1;
  double x2;
} GasketVec2;

/**
 * Row-major 2×2 matrix.
 */
typedef struct GasketMat2 {
  double a11;
  double a12;
  double a21;
  double a22;
} GasketMat2;

typedef struct GasketProjection {
  struct GasketVec2 v;
  double residual_proj;
  double residual_rank1;
  bool isotropic;
} GasketProjection;

/**
 * A scalar field supplied by the caller.
 *
 * Both callbacks are invoked concurrently from worker threads and must be
 * thread-safe and pure; `user_data` is passed through unchanged.
 */
typedef struct GasketField {
  double (*value)(void *user_data, double x1, double x2);
  void (*gradient)(void *user_data, double x1, double x2, struct GasketVec2 *out);
  void *user_data;
} GasketField;

typedef struct GasketEnergyReport {
  double dirichlet_matrix;
  double dirichlet_vfield;
  double cheeger_pre;
  double half_dirichlet;
  double relative_gap;
  size_t vfield_flagged;
  size_t pointwise_evaluated;
  size_t pointwise_violations;
} GasketEnergyReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *gasket_version(void);

/**
 * Copy of the last error message on this thread, or null if there is none.
 * Release it with `gasket_string_free`.
 */
char *gasket_last_error_message(void);

/**
 * # Safety
 * `s` must come from `gasket_last_error_message` or be null.
 */
void gasket_string_free(char *s);

/**
 * Create a session with normalization `τ(S) = c·Id`, `c > 0`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum GasketStatus gasket_session_new(double c, struct GasketSession **out);

/**
 * # Safety
 * `session` must come from `gasket_session_new` or be null; it is invalid afterwards.
 */
void gasket_session_free(struct GasketSession *session);

/**
 * `ψ_symbol(p)`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum GasketStatus gasket_branch_apply(uint8_t symbol, struct GasketVec2 p, struct GasketVec2 *out);

/**
 * Vertices of the cell `ψ_w(triangle)` in the order of the images of A, B, C.
 *
 * # Safety
 * `symbols` must hold `len` bytes; `out` must hold 3 elements.
 */
enum GasketStatus gasket_cell_vertices(const uint8_t *symbols, size_t len, struct GasketVec2 *out);

/**
 * Representative point of the cylinder of `w` and a bound on its distance
 * to the coded point of any extension.
 *
 * # Safety
 * `symbols` must hold `len` bytes; out pointers must be valid for writes.
 */
enum GasketStatus gasket_code_to_point(const uint8_t *symbols,
                                       size_t len,
                                       struct GasketVec2 *out_point,
                                       double *out_error_bound);

/**
 * Address of a depth-`depth` cell containing `p`, written as `depth` symbols.
 *
 * # Safety
 * `out_symbols` must hold `depth` bytes.
 */
enum GasketStatus gasket_point_to_code(struct GasketVec2 p, size_t depth, uint8_t *out_symbols);

/**
 * The expanding map `F`, inverse of the branches on their cells.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum GasketStatus gasket_apply_f(struct GasketVec2 p, struct GasketVec2 *out);

/**
 * Principal eigenvalue of the matrix transfer operator by power iteration.
 *
 * # Safety
 * `out_beta` must be valid for writes.
 */
enum GasketStatus gasket_principal_eigenvalue(double tol, size_t max_iter, double *out_beta);

/**
 * Matrix mass `τ[w]` and scalar mass `κ[w]` of a cell.
 *
 * # Safety
 * `session` must be live; `symbols` must hold `len` bytes; out pointers must be valid.
 */
enum GasketStatus gasket_tau_cell(const struct GasketSession *session,
                                  const uint8_t *symbols,
                                  size_t len,
                                  struct GasketMat2 *out_tau,
                                  double *out_kappa);

/**
 * Projection field estimate from the derivative of `ψ_w`.
 *
 * # Safety
 * `symbols` must hold `len` bytes; `out` must be valid for writes.
 */
enum GasketStatus gasket_projection_estimate(const uint8_t *symbols,
                                             size_t len,
                                             struct GasketProjection *out);

/**
 * Per-symbol Lyapunov exponents of a word of length at least 2.
 *
 * # Safety
 * `symbols` must hold `len` bytes; out pointers must be valid for writes.
 */
enum GasketStatus gasket_lyapunov(const uint8_t *symbols,
                                  size_t len,
                                  double *out_lambda1,
                                  double *out_lambda2);

/**
 * `count` κ-distributed words of length `depth`, written row by row.
 *
 * # Safety
 * `out_symbols` must hold `count * depth` bytes.
 */
enum GasketStatus gasket_sample_kappa(uint64_t seed,
                                      size_t depth,
                                      size_t count,
                                      uint8_t *out_symbols);

/**
 * Quadrature of the energy `ℰ(f, g)` at `depth`.
 *
 * # Safety
 * `session`, `f` and `g` must be live; callbacks must satisfy `GasketField`.
 */
enum GasketStatus gasket_dirichlet_matrix(const struct GasketSession *session,
                                          const struct GasketField *f,
                                          const struct GasketField *g,
                                          size_t depth,
                                          double *out);

/**
 * All energy estimators for `f` at `(depth, sub_depth)`.
 *
 * # Safety
 * `session` and `f` must be live; callbacks must satisfy `GasketField`.
 */
enum GasketStatus gasket_energy_report(const struct GasketSession *session,
                                       const struct GasketField *f,
                                       size_t depth,
                                       size_t sub_depth,
                                       struct GasketEnergyReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GASKET_FFI_H */
