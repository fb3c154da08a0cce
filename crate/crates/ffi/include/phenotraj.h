#ifndef PHENOTRAJ_H
#define PHENOTRAJ_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum PtStatus {
  PT_STATUS_OK = 0,
  PT_STATUS_NULL_POINTER = 1,
  PT_STATUS_INVALID_ARGUMENT = 2,
  PT_STATUS_IO = 3,
  PT_STATUS_FORMAT = 4,
  PT_STATUS_NUMERICAL = 5,
  // The quantity is undefined for the input (e.g. silhouette with one cluster).
  PT_STATUS_UNDEFINED = 6,
  PT_STATUS_PANIC = 7,
} PtStatus;

// Opaque encoder handle.
typedef struct PtEncoder PtEncoder;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *pt_last_error(void);

// Loads a saved encoder. On success `*out` owns a handle that must be
// released with `pt_encoder_free`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum PtStatus pt_encoder_load(const char *path, struct PtEncoder **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `enc` must come from `pt_encoder_load` and not be used afterwards.
void pt_encoder_free(struct PtEncoder *enc);

// Writes the width of the encoding and of the demographic input.
//
// # Safety
// All pointers must be valid.
enum PtStatus pt_encoder_dims(const struct PtEncoder *enc,
                              size_t *encoding_dim,
                              size_t *demographics_dim);

// Encodes one series of `n` triplets into `out` (length `out_len`, which
// must equal the encoding dimension). Feature codes are 0..=6 in the order
// systolic, diastolic, SpO2, respiratory rate, temperature, pulse,
// supplemental oxygen. Values are expected already standardized.
//
// # Safety
// Arrays must be valid for the stated lengths.
enum PtStatus pt_encoder_encode(const struct PtEncoder *enc,
                                const double *times,
                                const uint32_t *features,
                                const double *values,
                                size_t n,
                                const double *demographics,
                                size_t demographics_len,
                                double *out,
                                size_t out_len);

// k-means with k-means++ seeding and ten restarts. `points` is row-major
// `n x dim`; `labels` receives `n` cluster ids in `0..k`.
//
// # Safety
// Arrays must be valid for the stated lengths.
enum PtStatus pt_kmeans(const double *points,
                        size_t n,
                        size_t dim,
                        size_t k,
                        uint64_t seed,
                        int64_t *labels);

// Mean silhouette over non-noise points (label -1 is noise). Returns
// `PtStatus::Undefined` when fewer than two clusters remain.
//
// # Safety
// Arrays must be valid for the stated lengths.
enum PtStatus pt_silhouette(const double *points,
                            size_t n,
                            size_t dim,
                            const int64_t *labels,
                            double *out);

// Adjusted Rand index between two labelings of `n` points; points with
// label -1 in `labels` are left out.
//
// # Safety
// Arrays must be valid for the stated lengths.
enum PtStatus pt_adjusted_rand_index(const int64_t *labels,
                                     const int64_t *truth,
                                     size_t n,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHENOTRAJ_H */
