#ifndef CCSD_H
#define CCSD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CcsdStatus {
  CCSD_STATUS_OK = 0,
  CCSD_STATUS_NULL_POINTER = 1,
  CCSD_STATUS_INVALID_UTF8 = 2,
  CCSD_STATUS_CONFIG = 3,
  CCSD_STATUS_MISSING_KEYS = 4,
  CCSD_STATUS_CHECKPOINT = 5,
  CCSD_STATUS_IO = 6,
  CCSD_STATUS_PARSE = 7,
  CCSD_STATUS_DOMAIN = 8,
  CCSD_STATUS_SHAPE = 9,
  CCSD_STATUS_NUMERIC = 10,
  CCSD_STATUS_OUT_OF_RANGE = 11,
  CCSD_STATUS_PANIC = 12,
} CcsdStatus;

// Parsed run configuration.
typedef struct CcsdConfig CcsdConfig;

// A list of combinatorial complexes.
typedef struct CcsdDataset CcsdDataset;

// Trained sampling parameters with the node-count distribution of their
// training split.
typedef struct CcsdModel CcsdModel;

typedef struct CcsdComplexInfo {
  size_t nodes;
  size_t edges;
  size_t cells;
} CcsdComplexInfo;

typedef struct CcsdReport {
  double degree_mmd;
  double cluster_mmd;
  double orbit_mmd;
  double rank2_mmd;
  double hodge_spectrum_mmd;
  double graph_average;
  double complex_average;
} CcsdReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ccsd_version(void);

// Message of the most recent call on this thread if it failed, else an
// empty string. Valid until the next ccsd call on the same thread.
const char *ccsd_last_error(void);

// Number of candidate rank-2 cells on `n` nodes with sizes in `[d_min, d_max]`.
//
// # Safety
// `out` must be null or point to writable memory for one `uint64_t`.
enum CcsdStatus ccsd_cell_count(size_t n, size_t d_min, size_t d_max, uint64_t *out);

// Parses a TOML run configuration. A non-null `seed` replaces its seed.
//
// # Safety
// `toml` must be a NUL-terminated string; `seed` null or readable; `out` writable.
enum CcsdStatus ccsd_config_parse(const char *toml, const uint64_t *seed, struct CcsdConfig **out);

// One of the shipped configurations: "community_small" or "grid_small".
//
// # Safety
// `name` must be a NUL-terminated string and `out` writable.
enum CcsdStatus ccsd_config_builtin(const char *name, struct CcsdConfig **out);

// # Safety
// `cfg` must be null or a handle from this library, not yet freed.
void ccsd_config_free(struct CcsdConfig *cfg);

// Generates the configuration's dataset.
//
// # Safety
// `cfg` must be a live handle and `out` writable.
enum CcsdStatus ccsd_dataset_build(const struct CcsdConfig *cfg, struct CcsdDataset **out);

// Reads a JSON-lines dataset.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum CcsdStatus ccsd_dataset_read(const char *path, struct CcsdDataset **out);

// Writes a dataset as JSON lines.
//
// # Safety
// `ds` must be a live handle and `path` a NUL-terminated string.
enum CcsdStatus ccsd_dataset_write(const struct CcsdDataset *ds, const char *path);

// Number of complexes; 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
size_t ccsd_dataset_len(const struct CcsdDataset *ds);

// Node, edge and rank-2 cell counts of complex `index`.
//
// # Safety
// `ds` must be a live handle and `out` writable.
enum CcsdStatus ccsd_dataset_info(const struct CcsdDataset *ds,
                                  size_t index,
                                  struct CcsdComplexInfo *out);

// # Safety
// `ds` must be null or a handle from this library, not yet freed.
void ccsd_dataset_free(struct CcsdDataset *ds);

// Trains the three networks on the configuration's dataset. When `test` is
// non-null it receives the held-out split.
//
// # Safety
// `cfg` must be a live handle, `out` writable, `test` null or writable.
enum CcsdStatus ccsd_train(const struct CcsdConfig *cfg,
                           struct CcsdModel **out,
                           struct CcsdDataset **test);

// Saves the checkpoint and the node-count distribution (JSON).
//
// # Safety
// `model` must be a live handle; both paths NUL-terminated strings.
enum CcsdStatus ccsd_model_save(const struct CcsdModel *model,
                                const char *checkpoint_path,
                                const char *nodes_path);

// Loads a model saved by [`ccsd_model_save`] or the `train` command.
//
// # Safety
// Both paths must be NUL-terminated strings and `out` writable.
enum CcsdStatus ccsd_model_load(const char *checkpoint_path,
                                const char *nodes_path,
                                struct CcsdModel **out);

// Samples `num` complexes. Fails with `CCSD_STATUS_CHECKPOINT` when the
// model was trained for other networks or SDEs than `cfg` describes.
//
// # Safety
// `model` and `cfg` must be live handles and `out` writable.
enum CcsdStatus ccsd_model_sample(const struct CcsdModel *model,
                                  const struct CcsdConfig *cfg,
                                  size_t num,
                                  struct CcsdDataset **out);

// # Safety
// `model` must be null or a handle from this library, not yet freed.
void ccsd_model_free(struct CcsdModel *model);

// Graph and complex MMDs between two datasets with the default kernels.
//
// # Safety
// Both datasets must be live handles and `out` writable.
enum CcsdStatus ccsd_evaluate(const struct CcsdDataset *generated,
                              const struct CcsdDataset *reference,
                              struct CcsdReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CCSD_H */
