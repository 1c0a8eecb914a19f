#ifndef HEIDIH_H
#define HEIDIH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum HeidihStatus {
  HEIDIH_STATUS_OK = 0,
  HEIDIH_STATUS_NULL_POINTER = 1,
  HEIDIH_STATUS_INVALID_ARGUMENT = 2,
  HEIDIH_STATUS_EMBEDDING_FAILED = 3,
  HEIDIH_STATUS_NUMERICAL = 4,
  HEIDIH_STATUS_PANIC = 5,
} HeidihStatus;

// Weight function of the noise kernel.
typedef enum HeidihWeightKind {
  // `w = 1`; parameters ignored.
  HEIDIH_WEIGHT_KIND_CONSTANT = 0,
  // `p1·(1 + x²)^{−p0}`.
  HEIDIH_WEIGHT_KIND_POLYNOMIAL = 1,
  // Bump with center `p0`, half-width `p1`, amplitude `p2`.
  HEIDIH_WEIGHT_KIND_BUMP = 2,
} HeidihWeightKind;

// Opaque noise kernel.
typedef struct HeidihKernel HeidihKernel;

// Opaque row-major matrix of path values (time × space).
typedef struct HeidihPath HeidihPath;

// Model and discretization for path simulation. The initial volatility is
// zero and the initial forward curve is the constant `x0_level`.
typedef struct HeidihModel {
  double diffusivity;
  double horizon;
  double domain;
  double h;
  double k;
  double scaling;
  double x0_level;
} HeidihModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Modified Bessel function of the second kind `K_ν(x)`, `ν ≥ 0`, `x > 0`.
//
// # Safety
// `out` must be null or valid for a write of one `double`.
enum HeidihStatus heidih_bessel_k(double nu, double x, double *out);

// Creates the kernel `w(x)·q(x − y)·w(y)` with a Matérn `q`.
//
// # Safety
// `out` must be null or valid for a write of one pointer.
enum HeidihStatus heidih_kernel_new(double nu,
                                    double mu,
                                    double zeta,
                                    enum HeidihWeightKind weight,
                                    double p0,
                                    double p1,
                                    double p2,
                                    struct HeidihKernel **out);

// Evaluates the kernel at `(x, y)`.
//
// # Safety
// `kernel` must come from [`heidih_kernel_new`]; `out` must be valid for a
// write of one `double`.
enum HeidihStatus heidih_kernel_eval(const struct HeidihKernel *kernel,
                                     double x,
                                     double y,
                                     double *out);

// Releases a kernel; null is ignored.
//
// # Safety
// `kernel` must be null or come from [`heidih_kernel_new`] and not have
// been freed.
void heidih_kernel_free(struct HeidihKernel *kernel);

// Simulates one volatility path; rows are time levels `0..=T/k`, columns
// the nodes `0..=D/h`.
//
// # Safety
// Pointers must be null or valid; `out` receives a handle to release with
// [`heidih_path_free`].
enum HeidihStatus heidih_simulate_ypath(const struct HeidihKernel *kernel,
                                        const struct HeidihModel *model,
                                        uint64_t seed,
                                        struct HeidihPath **out);

// Simulates one price lattice driven by the volatility path with the same
// seed; rows are times `0..=T/k`, columns maturities `0..=T/k`. Requires
// `h = k` and `D ≥ 2T − k`.
//
// # Safety
// As for [`heidih_simulate_ypath`].
enum HeidihStatus heidih_simulate_xpath(const struct HeidihKernel *kernel,
                                        const struct HeidihModel *model,
                                        uint64_t seed,
                                        struct HeidihPath **out);

// Number of rows and columns of a path.
//
// # Safety
// `path` must be a live handle; `rows` and `cols` valid for writes.
enum HeidihStatus heidih_path_dims(const struct HeidihPath *path, uintptr_t *rows, uintptr_t *cols);

// Copies the `rows·cols` values, row-major, into `buf` of length `len`.
//
// # Safety
// `path` must be a live handle; `buf` valid for `len` writes.
enum HeidihStatus heidih_path_copy(const struct HeidihPath *path, double *buf, uintptr_t len);

// Releases a path; null is ignored.
//
// # Safety
// `path` must be null or a live handle.
void heidih_path_free(struct HeidihPath *path);

// Static description of a status code.
const char *heidih_status_message(enum HeidihStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HEIDIH_H */
