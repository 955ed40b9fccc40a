#ifndef KINVLAP_H
#define KINVLAP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes; the non-zero values match the command-line exit codes.
typedef enum KinvlapStatus {
  KINVLAP_STATUS_OK = 0,
  // A required pointer was null or a string was not valid UTF-8.
  KINVLAP_STATUS_INVALID_ARGUMENT = 1,
  KINVLAP_STATUS_INPUT = 2,
  KINVLAP_STATUS_INTEGRITY = 3,
  KINVLAP_STATUS_MISMATCH = 4,
  KINVLAP_STATUS_NUMERICAL = 5,
  // The library panicked; this is a bug.
  KINVLAP_STATUS_PANIC = 6,
} KinvlapStatus;

typedef enum KinvlapDtype {
  KINVLAP_DTYPE_COMPLEX128 = 0,
  KINVLAP_DTYPE_COMPLEX64 = 1,
} KinvlapDtype;

// Opaque dataset handle.
typedef struct KinvlapDataset KinvlapDataset;

// Opaque spectrum handle.
typedef struct KinvlapSpectrum KinvlapSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next call into the library on the same thread.
const char *kinvlap_last_error_message(void);

// Library version as a static string.
const char *kinvlap_version(void);

// Samples a dataset from a `generate` config given as JSON text.
//
// # Safety
// `config_json` must be a NUL-terminated string; `out` must be writable.
enum KinvlapStatus kinvlap_dataset_generate(const char *config_json, struct KinvlapDataset **out);

// Reads a bundle directory (`points.csv`, `group.json`, optional `meta.json`).
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be writable.
enum KinvlapStatus kinvlap_dataset_load(const char *dir, struct KinvlapDataset **out);

// # Safety
// `ds` must be a live handle; `dir` a NUL-terminated string.
enum KinvlapStatus kinvlap_dataset_save(const struct KinvlapDataset *ds, const char *dir);

// Number of points, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
size_t kinvlap_dataset_len(const struct KinvlapDataset *ds);

// Copies the 64-character hex hash plus NUL into `buf` (at least 65 bytes).
//
// # Safety
// `ds` must be a live handle and `buf` writable for `len` bytes.
enum KinvlapStatus kinvlap_dataset_hash(const struct KinvlapDataset *ds, char *buf, size_t len);

// # Safety
// `ds` must be null or a handle not yet freed.
void kinvlap_dataset_free(struct KinvlapDataset *ds);

// Full block spectrum. `epsilon ≤ 0` selects the median squared distance;
// `lmax < 0` keeps every irrep the group carries.
//
// # Safety
// `ds` must be a live handle; `out` writable.
enum KinvlapStatus kinvlap_spectrum_compute(const struct KinvlapDataset *ds,
                                            double epsilon,
                                            int64_t lmax,
                                            bool normalized,
                                            struct KinvlapSpectrum **out);

// Number of eigenvalues counted with multiplicity `dim E_ℓ`.
//
// # Safety
// `s` must be null or a live handle.
size_t kinvlap_spectrum_len(const struct KinvlapSpectrum *s);

// Writes the ascending eigenvalues (with multiplicity) into `buf`. `written`
// receives the number copied, at most `cap`.
//
// # Safety
// `s` must be a live handle, `buf` writable for `cap` doubles, `written` writable.
enum KinvlapStatus kinvlap_spectrum_values(const struct KinvlapSpectrum *s,
                                           double *buf,
                                           size_t cap,
                                           size_t *written);

// Writes `spectrum.csv` and the eigenvector files into `dir`.
//
// # Safety
// `s` must be a live handle; `dir` a NUL-terminated string.
enum KinvlapStatus kinvlap_spectrum_export(const struct KinvlapSpectrum *s,
                                           const char *dir,
                                           enum KinvlapDtype dtype);

// # Safety
// `s` must be null or a handle not yet freed.
void kinvlap_spectrum_free(struct KinvlapSpectrum *s);

// Compares the block spectrum with the dense oracle. `tol ≤ 0` selects the
// default (1e-8 for finite groups, 1e-6 otherwise). Returns `Mismatch` when the
// deviation exceeds it; `max_abs_dev` (if non-null) receives the deviation.
//
// # Safety
// `ds` must be a live handle; `max_abs_dev` null or writable.
enum KinvlapStatus kinvlap_validate(const struct KinvlapDataset *ds,
                                    double epsilon,
                                    bool normalized,
                                    double tol,
                                    double *max_abs_dev);

// Runs a convergence sweep from JSON config text and writes the report files
// into `out_dir`.
//
// # Safety
// Both arguments must be NUL-terminated strings.
enum KinvlapStatus kinvlap_converge(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KINVLAP_H */
