#ifndef SHAPEY_H
#define SHAPEY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every fallible call.
typedef enum ShapeyStatus {
  SHAPEY_STATUS_OK = 0,
  // Null pointer, bad UTF-8, or an unparsable argument.
  SHAPEY_STATUS_INVALID_ARGUMENT = 1,
  SHAPEY_STATUS_IO = 2,
  // Malformed embedding, index or manifest file.
  SHAPEY_STATUS_FORMAT = 3,
  // Embeddings do not cover the manifest, or lack a needed variant.
  SHAPEY_STATUS_MISMATCH = 4,
  SHAPEY_STATUS_SPEC = 5,
  SHAPEY_STATUS_UNKNOWN_IMAGE = 6,
  SHAPEY_STATUS_INFEASIBLE = 7,
  // A bug: the engine panicked.
  SHAPEY_STATUS_INTERNAL = 8,
} ShapeyStatus;

// Dataset manifest handle.
typedef struct ShapeyManifest ShapeyManifest;

// Normalized embedding store aligned to a manifest.
typedef struct ShapeyStore ShapeyStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer is valid until the next call on this thread.
const char *shapey_last_error(void);

// Library version as a static string.
const char *shapey_version(void);

// The standard dataset: 20 categories of 10 objects, original views only.
//
// # Safety
// `out` must be a valid pointer.
enum ShapeyStatus shapey_manifest_default(struct ShapeyManifest **out_manifest);

// `categories` × `objects` manifest, with contrast-reversed views when `contrast`.
//
// # Safety
// `out_manifest` must be a valid pointer.
enum ShapeyStatus shapey_manifest_new(size_t categories,
                                      uint8_t objects,
                                      bool contrast,
                                      struct ShapeyManifest **out_manifest);

// Load a manifest JSON file.
//
// # Safety
// `path` must be a nul-terminated string; `out_manifest` a valid pointer.
enum ShapeyStatus shapey_manifest_load(const char *path, struct ShapeyManifest **out_manifest);

// Number of image ids; 0 for a null handle.
//
// # Safety
// `manifest` must be null or a live handle.
size_t shapey_manifest_len(const struct ShapeyManifest *manifest);

// Copy the id of `row` into `buf` (nul-terminated). `out_len` receives the
// id length without the terminator, even when `buf` is too small.
//
// # Safety
// `manifest` must be a live handle, `buf` valid for `buf_len` bytes (or
// null with `buf_len` 0), `out_len` null or valid.
enum ShapeyStatus shapey_manifest_id(const struct ShapeyManifest *manifest,
                                     size_t row,
                                     char *buf,
                                     size_t buf_len,
                                     size_t *out_len);

// # Safety
// `manifest` must be null or a handle not yet freed.
void shapey_manifest_free(struct ShapeyManifest *manifest);

// Load an embedding file and its index, check them against `manifest`,
// normalize, and reorder rows to manifest order.
//
// # Safety
// Strings must be nul-terminated; `manifest` a live handle; `out_store` valid.
enum ShapeyStatus shapey_store_load(const char *embeddings_path,
                                    const char *index_path,
                                    const struct ShapeyManifest *manifest,
                                    struct ShapeyStore **out_store);

// Seeded random synthetic store with its manifest.
//
// # Safety
// Output pointers must be valid.
enum ShapeyStatus shapey_store_synthetic(size_t categories,
                                         uint8_t objects,
                                         size_t dim,
                                         uint64_t seed,
                                         bool contrast,
                                         struct ShapeyManifest **out_manifest,
                                         struct ShapeyStore **out_store);

// # Safety
// `store` must be null or a live handle.
size_t shapey_store_len(const struct ShapeyStore *store);

// # Safety
// `store` must be null or a live handle.
size_t shapey_store_dim(const struct ShapeyStore *store);

// # Safety
// `store` must be null or a handle not yet freed.
void shapey_store_free(struct ShapeyStore *store);

// Error rates of one curve. `radii[k] < 0` means no viewpoint exclusion
// (contrast modes only). `out_rates[k]` receives the error rate at
// `radii[k]`, or NaN when every reference was skipped. `level` is
// `object` or `category`; `contrast` is `none`, `soft` or `hard`;
// `workers` 0 uses all cores.
//
// # Safety
// Handles must be live; strings nul-terminated; `radii` and `out_rates`
// valid for `n_radii` elements.
enum ShapeyStatus shapey_error_curve(const struct ShapeyStore *store,
                                     const struct ShapeyManifest *manifest,
                                     const char *vt,
                                     const char *level,
                                     const char *contrast,
                                     const int32_t *radii,
                                     size_t n_radii,
                                     size_t workers,
                                     double *out_rates);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHAPEY_H */
