#ifndef DCM_H
#define DCM_H

#include <stddef.h>
#include <stdint.h>

typedef enum DcmStatus {
  DCM_STATUS_OK = 0,
  DCM_STATUS_NULL_POINTER = 1,
  DCM_STATUS_INVALID_ARGUMENT = 2,
  DCM_STATUS_IO = 3,
  DCM_STATUS_SCHEMA_VERSION = 4,
  DCM_STATUS_INTERVENTION = 5,
  DCM_STATUS_MODEL = 6,
  DCM_STATUS_PANIC = 7,
} DcmStatus;

typedef enum DcmModelKind {
  DCM_MODEL_KIND_DCM = 0,
  DCM_MODEL_KIND_ANM = 1,
} DcmModelKind;

// A fitted model, or an SCM used as its own query model.
typedef struct DcmModel DcmModel;

// A ground-truth structural causal model.
typedef struct DcmScm DcmScm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The message of the last failing call on this thread, or an empty string.
// The pointer stays valid until the next failing call on this thread.
const char *dcm_last_error(void);

// Library version as a static NUL-terminated string.
const char *dcm_version(void);

// A benchmark SCM by graph name (`chain`, `triangle`, `diamond`, `y`,
// `ladder`, `random`) and equation class (`nlin`, `nadd`).
//
// # Safety
// `graph` and `sem` must be NUL-terminated strings; `out` must be writable.
enum DcmStatus dcm_scm_benchmark(const char *graph,
                                 const char *sem,
                                 uint64_t seed,
                                 struct DcmScm **out);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DcmStatus dcm_scm_load(const char *path, struct DcmScm **out);

// # Safety
// `scm` must be a live handle; `path` a NUL-terminated string.
enum DcmStatus dcm_scm_save(const struct DcmScm *scm, const char *path);

// # Safety
// `scm` must be null or a handle from this library not yet freed.
void dcm_scm_free(struct DcmScm *scm);

// Number of value columns (sum of node dimensions); 0 for a null handle.
//
// # Safety
// `scm` must be null or a live handle.
size_t dcm_scm_total_dim(const struct DcmScm *scm);

// Draws `n` rows. `values` (and `noises` unless null) must hold
// `n * total_dim` doubles.
//
// # Safety
// Buffers must be valid for the sizes above; `interventions` null or a
// NUL-terminated string.
enum DcmStatus dcm_scm_sample(const struct DcmScm *scm,
                              const char *interventions,
                              size_t n,
                              uint64_t seed_value,
                              double *values,
                              double *noises);

// Fits a model on `data` (`rows x cols`, row-major) using the SCM's graph.
// `epochs` applies to DCM only; 0 keeps the default.
//
// # Safety
// `data` must hold `rows * cols` doubles; `out` must be writable.
enum DcmStatus dcm_model_fit(const struct DcmScm *scm,
                             enum DcmModelKind kind,
                             const double *data,
                             size_t rows,
                             size_t cols,
                             size_t epochs,
                             uint64_t seed_value,
                             struct DcmModel **out);

// Wraps a copy of the SCM as a query model (the oracle).
//
// # Safety
// `scm` must be a live handle; `out` must be writable.
enum DcmStatus dcm_model_from_scm(const struct DcmScm *scm, struct DcmModel **out);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DcmStatus dcm_model_load(const char *path, struct DcmModel **out);

// Saves a fitted model; oracle handles cannot be saved as models.
//
// # Safety
// `model` must be a live handle; `path` a NUL-terminated string.
enum DcmStatus dcm_model_save(const struct DcmModel *model, const char *path);

// # Safety
// `model` must be null or a handle from this library not yet freed.
void dcm_model_free(struct DcmModel *model);

// # Safety
// `model` must be null or a live handle.
size_t dcm_model_total_dim(const struct DcmModel *model);

// `n` rows from the observational (null/empty `interventions`) or
// interventional distribution into `out` (`n * total_dim` doubles).
//
// # Safety
// `out` must hold `n * total_dim` doubles.
enum DcmStatus dcm_model_sample(const struct DcmModel *model,
                                const char *interventions,
                                size_t n,
                                uint64_t seed_value,
                                double *out);

// Counterfactuals of `rows` factual rows. `noise` may be null except for
// oracle handles, which need the factual noise trace.
//
// # Safety
// `factual`, `noise` (if not null) and `out` must hold `rows * total_dim`
// doubles.
enum DcmStatus dcm_model_counterfactual(const struct DcmModel *model,
                                        const double *factual,
                                        const double *noise,
                                        size_t rows,
                                        const char *interventions,
                                        double *out);

// Squared MMD with a Gaussian kernel between `x` (`nx x dim`) and `y`
// (`ny x dim`). A non-positive `bandwidth` selects the median heuristic.
//
// # Safety
// Buffers must be valid for the given sizes; `out` must be writable.
enum DcmStatus dcm_mmd_rbf(const double *x,
                           size_t nx,
                           const double *y,
                           size_t ny,
                           size_t dim,
                           double bandwidth,
                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCM_H */
