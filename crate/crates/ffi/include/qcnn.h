#ifndef QCNN_H
#define QCNN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QcnnStatus {
  QCNN_STATUS_OK = 0,
  QCNN_STATUS_NULL_POINTER = 1,
  QCNN_STATUS_INVALID_ARGUMENT = 2,
  QCNN_STATUS_SHAPE = 3,
  QCNN_STATUS_NUMERICAL = 4,
  QCNN_STATUS_IO = 5,
  QCNN_STATUS_FORMAT = 6,
  QCNN_STATUS_MEMORY_GATE = 7,
  QCNN_STATUS_PANIC = 99,
} QcnnStatus;

typedef enum QcnnNoiseStrategy {
  QCNN_NOISE_STRATEGY_NONE = 0,
  QCNN_NOISE_STRATEGY_FINAL_QUBIT = 1,
  QCNN_NOISE_STRATEGY_LAYER_WISE = 2,
} QcnnNoiseStrategy;

/**
 * Opaque circuit architecture.
 */
typedef struct QcnnArch QcnnArch;

/**
 * Opaque trained or initialised model.
 */
typedef struct QcnnModel QcnnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *qcnn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qcnn_version(void);

/**
 * Voxel occupancy for a distance-to-radius ratio `r`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum QcnnStatus qcnn_occupancy(double r, double *out);

/**
 * Binding free energy in kcal/mol for a pKd value.
 */
double qcnn_pkd_to_dg(double pkd);

/**
 * Looks up a builtin architecture (`fig1a`, `fig1b`, `fig1c`, `fig1f`, `fig1g`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum QcnnStatus qcnn_arch_builtin(const char *name, struct QcnnArch **out);

/**
 * Parses one architecture from the text DSL.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum QcnnStatus qcnn_arch_parse(const char *text, struct QcnnArch **out);

/**
 * # Safety
 * `arch` must be null or a handle from this library not yet freed.
 */
void qcnn_arch_free(struct QcnnArch *arch);

/**
 * Register width, or 0 for a null handle.
 *
 * # Safety
 * `arch` must be null or a live handle.
 */
size_t qcnn_arch_n_qubits(const struct QcnnArch *arch);

/**
 * Total and independent trainable parameter counts.
 *
 * # Safety
 * `arch` must be a live handle; `total` and `independent` valid for writes.
 */
enum QcnnStatus qcnn_arch_count_params(const struct QcnnArch *arch,
                                       size_t *total,
                                       size_t *independent);

/**
 * Seeded random model for `arch`.
 *
 * # Safety
 * `arch` must be a live handle; `out` valid for writes.
 */
enum QcnnStatus qcnn_model_init(const struct QcnnArch *arch, uint64_t seed, struct QcnnModel **out);

/**
 * Loads a checkpoint written by `qcnn train` or [`qcnn_model_save`].
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` valid for writes.
 */
enum QcnnStatus qcnn_model_load(const char *path, struct QcnnModel **out);

/**
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated string.
 */
enum QcnnStatus qcnn_model_save(const struct QcnnModel *model, const char *path);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void qcnn_model_free(struct QcnnModel *model);

/**
 * Register width of the model's architecture, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t qcnn_model_n_qubits(const struct QcnnModel *model);

/**
 * Noise-free prediction for one encoded state of `len` amplitudes.
 *
 * # Safety
 * `state` must point to `len` readable doubles; `p0` and `dg` valid for
 * writes.
 */
enum QcnnStatus qcnn_model_predict(const struct QcnnModel *model,
                                   const double *state,
                                   size_t len,
                                   double *p0,
                                   double *dg);

/**
 * Mixed-state prediction under the given noise model. Registers above 10
 * qubits are refused with `QCNN_STATUS_MEMORY_GATE` unless
 * `allow_large_dm` is set.
 *
 * # Safety
 * As [`qcnn_model_predict`].
 */
enum QcnnStatus qcnn_model_predict_noisy(const struct QcnnModel *model,
                                         const double *state,
                                         size_t len,
                                         enum QcnnNoiseStrategy strategy,
                                         double depol_p,
                                         double phase_gamma,
                                         bool allow_large_dm,
                                         double *p0,
                                         double *dg);

/**
 * Runs the ingest pipeline on one complex in the line-based text format and
 * writes `2^n_qubits` amplitudes to `amplitudes` (whose capacity is `len`)
 * and the ΔG label to `label_dg`.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `amplitudes` must point to `len`
 * writable doubles; `label_dg` valid for writes.
 */
enum QcnnStatus qcnn_encode_complex(const char *text,
                                    size_t n_qubits,
                                    double *amplitudes,
                                    size_t len,
                                    double *label_dg);

/**
 * Nearest orthogonal matrix to a `dim × dim` row-major matrix; `dim` must
 * be a power of two. `out` may alias `raw`.
 *
 * # Safety
 * `raw` must point to `dim * dim` readable doubles and `out` to as many
 * writable ones.
 */
enum QcnnStatus qcnn_project_orthogonal(const double *raw, size_t dim, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QCNN_H */
