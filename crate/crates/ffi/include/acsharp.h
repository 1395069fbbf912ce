#ifndef ACSHARP_H
#define ACSHARP_H

/* Generated by cbindgen from acsharp-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible calls.
 */
typedef enum AcsStatus {
  ACS_STATUS_OK = 0,
  ACS_STATUS_NULL_POINTER = 1,
  ACS_STATUS_INVALID_ARGUMENT = 2,
  ACS_STATUS_VALIDATION_FAILED = 3,
  ACS_STATUS_NUMERICAL_FAILURE = 4,
  ACS_STATUS_CAPABILITY_MISSING = 5,
} AcsStatus;

/**
 * Opaque covariance kernel.
 */
typedef struct AcsKernel AcsKernel;

/**
 * Opaque mollified path.
 */
typedef struct AcsMollified AcsMollified;

/**
 * Opaque sampled Q-Wiener path.
 */
typedef struct AcsPath AcsPath;

/**
 * Opaque bistable reaction term.
 */
typedef struct AcsReaction AcsReaction;

/**
 * Opaque standing wave profile.
 */
typedef struct AcsStandingWave AcsStandingWave;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string of the underlying library; static storage, do not free.
 */
const char *acs_version(void);

/**
 * The cubic reaction `f(u) = u - u³` with the bound constant `c0`.
 * Returns null if `c0 <= 0`.
 */
struct AcsReaction *acs_reaction_new_cubic(double c0);

/**
 * Odd polynomial `f(u) = Σ coeffs[k] u^{2k+1}`.
 *
 * # Safety
 * `coeffs` must point to `len` readable doubles.
 */
struct AcsReaction *acs_reaction_new_odd_poly(const double *coeffs, size_t len, double c0);

/**
 * # Safety
 * `h` must be a pointer from `acs_reaction_new_*`, not yet freed.
 */
void acs_reaction_free(struct AcsReaction *h);

/**
 * Derived constants `(μ, p, C_f)`.
 *
 * # Safety
 * `h` must be a live reaction handle; out-pointers must be writable.
 */
enum AcsStatus acs_reaction_constants(const struct AcsReaction *h,
                                      double *out_mu,
                                      double *out_p,
                                      double *out_cf);

/**
 * Run the structural validation at `lattice_step`; writes 1 into
 * `out_valid` iff all six conditions hold.
 *
 * # Safety
 * `h` must be a live reaction handle; `out_valid` writable.
 */
enum AcsStatus acs_reaction_validate(const struct AcsReaction *h,
                                     double lattice_step,
                                     bool *out_valid);

/**
 * Evaluate `f(u)`.
 *
 * # Safety
 * `h` must be a live reaction handle; `out` writable.
 */
enum AcsStatus acs_reaction_eval(const struct AcsReaction *h, double u, double *out);

/**
 * Separable bump kernel `Q(x,y) = a(x)a(y)`,
 * `a(x) = amplitude Π_i exp(-1/(1-(x_i/radius)²))`. Null on invalid input.
 */
struct AcsKernel *acs_kernel_new_separable_bump(size_t dim, double radius, double amplitude);

/**
 * # Safety
 * `h` must be a pointer from `acs_kernel_new_*`, not yet freed.
 */
void acs_kernel_free(struct AcsKernel *h);

/**
 * Evaluate `Q(x, y)`.
 *
 * # Safety
 * `x` and `y` must point to `dim` readable doubles matching the kernel's
 * dimension; `out` writable.
 */
enum AcsStatus acs_kernel_eval(const struct AcsKernel *h,
                               const double *x,
                               const double *y,
                               size_t dim,
                               double *out);

/**
 * Sample a Q-Wiener path on `n_times` grid times (starting at 0) over
 * `n_points` points of dimension `dim` (coords row-major). Deterministic
 * per seed. Null on invalid input.
 *
 * # Safety
 * `times` must hold `n_times` doubles; `coords` must hold
 * `n_points * dim` doubles.
 */
struct AcsPath *acs_path_sample(const struct AcsKernel *kernel,
                                const double *times,
                                size_t n_times,
                                const double *coords,
                                size_t n_points,
                                size_t dim,
                                uint64_t seed);

/**
 * # Safety
 * `h` must be a pointer from `acs_path_sample`, not yet freed.
 */
void acs_path_free(struct AcsPath *h);

/**
 * `W` at time index `time_idx` (0 ⇒ 0) and point index `point_idx`.
 *
 * # Safety
 * `h` must be a live path handle; `out` writable.
 */
enum AcsStatus acs_path_value(const struct AcsPath *h,
                              size_t time_idx,
                              size_t point_idx,
                              double *out);

/**
 * Mollify a path at uniform error `delta` with Hölder exponent
 * `alpha ∈ (0, 1/2)`. The path handle stays valid and reusable.
 *
 * # Safety
 * `path` must be a live path handle.
 */
struct AcsMollified *acs_path_mollify(const struct AcsPath *path, double delta, double alpha);

/**
 * # Safety
 * `h` must be a pointer from `acs_path_mollify`, not yet freed.
 */
void acs_mollified_free(struct AcsMollified *h);

/**
 * `W^(δ)(t)` at an arbitrary time for one point index.
 *
 * # Safety
 * `h` must be a live mollified handle; `out` writable.
 */
enum AcsStatus acs_mollified_value(const struct AcsMollified *h,
                                   double t,
                                   size_t point_idx,
                                   double *out);

/**
 * Measured sup over the grid of `|W - W^(δ)|` (≤ delta by construction).
 *
 * # Safety
 * `h` must be a live mollified handle; `out` writable.
 */
enum AcsStatus acs_mollified_sup_error(const struct AcsMollified *h, double *out);

/**
 * Terminal value `Y(tau_end, xi)` of the comparison ODE.
 *
 * # Safety
 * `reaction` must be a live handle; `out` writable.
 */
enum AcsStatus acs_flow_ode_final(const struct AcsReaction *reaction,
                                  double xi,
                                  double tau_end,
                                  double step,
                                  double *out);

/**
 * Terminal value `Y^ε(tau_end, xi, x)` of the noisy flow, seeded.
 *
 * # Safety
 * Handles must be live; `x` must hold `dim` doubles matching the kernel;
 * `out` writable.
 */
enum AcsStatus acs_flow_sde_final(const struct AcsReaction *reaction,
                                  const struct AcsKernel *kernel,
                                  double xi,
                                  const double *x,
                                  size_t dim,
                                  double eps,
                                  double gamma,
                                  double tau_end,
                                  double step,
                                  uint64_t seed,
                                  double *out);

/**
 * Build the standing wave of a reaction. Null on construction failure.
 *
 * # Safety
 * `reaction` must be a live handle.
 */
struct AcsStandingWave *acs_standing_wave_new(const struct AcsReaction *reaction);

/**
 * # Safety
 * `h` must be a pointer from `acs_standing_wave_new`, not yet freed.
 */
void acs_standing_wave_free(struct AcsStandingWave *h);

/**
 * Evaluate the profile `m(x)`.
 *
 * # Safety
 * `h` must be a live handle; `out` writable.
 */
enum AcsStatus acs_standing_wave_eval(const struct AcsStandingWave *h, double x, double *out);

/**
 * Terminal value of the limiting interface SDE
 * `dξ = α₁ a(ξ) dB + α₂ a(ξ) a'(ξ) dt` with the bump coefficient
 * `a(x) = amplitude exp(-1/(1-(x/radius)²))`.
 *
 * # Safety
 * `out` must be writable.
 */
enum AcsStatus acs_limit_sde_final(double alpha1,
                                   double alpha2,
                                   double xi0,
                                   double t_end,
                                   double dt,
                                   uint64_t seed,
                                   double radius,
                                   double amplitude,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACSHARP_H */
