#ifndef DLOC_H
#define DLOC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DlocStatus {
  DLOC_STATUS_OK = 0,
  DLOC_STATUS_NULL_POINTER = 1,
  DLOC_STATUS_INVALID_ARGUMENT = 2,
  DLOC_STATUS_CONFIG = 3,
  DLOC_STATUS_IO = 4,
  DLOC_STATUS_FORMAT = 5,
  DLOC_STATUS_SHAPE = 6,
  DLOC_STATUS_NUMERICAL = 7,
  DLOC_STATUS_MISSING_TRUTH = 8,
  DLOC_STATUS_PANIC = 9,
} DlocStatus;

// Estimator selector for [`dloc_estimate`] and [`dloc_localize`].
typedef enum DlocEstimator {
  DLOC_ESTIMATOR_ORACLE_MFP = 0,
  DLOC_ESTIMATOR_SBL = 1,
  DLOC_ESTIMATOR_GCC_PHAT = 2,
  DLOC_ESTIMATOR_CNN = 3,
} DlocEstimator;

// Experiment configuration.
typedef struct DlocConfig DlocConfig;

// Labeled records, in memory.
typedef struct DlocDataset DlocDataset;

// Trained network.
typedef struct DlocNetwork DlocNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next library call on the same thread.
const char *dloc_last_error(void);

// Library version as a static NUL-terminated string.
const char *dloc_version(void);

// Default configuration.
//
// # Safety
// `out` must be valid for writes.
enum DlocStatus dloc_config_new(struct DlocConfig **out);

// Parses and validates a TOML configuration.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` valid for writes.
enum DlocStatus dloc_config_from_toml(const char *toml, struct DlocConfig **out);

// Overrides the master seed.
//
// # Safety
// `cfg` must be a live handle.
enum DlocStatus dloc_config_set_seed(struct DlocConfig *cfg, uint64_t seed);

// # Safety
// `cfg` must be NULL or a handle not yet freed.
void dloc_config_free(struct DlocConfig *cfg);

// Synthesizes the dataset described by `cfg`.
//
// # Safety
// `cfg` must be a live handle and `out` valid for writes.
enum DlocStatus dloc_dataset_generate(const struct DlocConfig *cfg, struct DlocDataset **out);

// # Safety
// `path` must be a NUL-terminated string and `out` valid for writes.
enum DlocStatus dloc_dataset_load(const char *path, struct DlocDataset **out);

// # Safety
// `ds` must be a live handle and `path` a NUL-terminated string.
enum DlocStatus dloc_dataset_save(const struct DlocDataset *ds, const char *path);

// Number of records, 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live handle.
size_t dloc_dataset_len(const struct DlocDataset *ds);

// Writes the record's source position (x, y, z) into `out[0..3]`.
//
// # Safety
// `ds` must be a live handle and `out` valid for 3 writes.
enum DlocStatus dloc_dataset_label(const struct DlocDataset *ds, size_t index, double *out);

// # Safety
// `ds` must be NULL or a handle not yet freed.
void dloc_dataset_free(struct DlocDataset *ds);

// Loads a network checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for writes.
enum DlocStatus dloc_network_load(const char *path, struct DlocNetwork **out);

// # Safety
// `net` must be NULL or a handle not yet freed.
void dloc_network_free(struct DlocNetwork *net);

// Localizes record `index` of `ds`. `net` may be NULL unless the
// estimator is `Cnn`. Writes (x, y, z) into `out[0..3]`.
//
// # Safety
// Handles must be live (or NULL where allowed) and `out` valid for 3 writes.
enum DlocStatus dloc_estimate(const struct DlocConfig *cfg,
                              enum DlocEstimator estimator,
                              const struct DlocDataset *ds,
                              size_t index,
                              const struct DlocNetwork *net,
                              double *out);

// Localizes raw samples: `receivers * samples` complex values stored as
// interleaved (re, im) doubles, receiver-major. The oracle estimator is
// unavailable here since raw data carries no channel truth.
//
// # Safety
// `data` must hold `2 * receivers * samples` readable doubles, handles
// must be live (or NULL where allowed) and `out` valid for 3 writes.
enum DlocStatus dloc_localize(const struct DlocConfig *cfg,
                              enum DlocEstimator estimator,
                              const double *data,
                              size_t receivers,
                              size_t samples,
                              const struct DlocNetwork *net,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DLOC_H */
