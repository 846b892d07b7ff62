#ifndef BEARS_H
#define BEARS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BearsSplit {
  BEARS_SPLIT_TRAIN = 0,
  BEARS_SPLIT_VAL = 1,
  BEARS_SPLIT_TEST = 2,
  BEARS_SPLIT_OOD = 3,
} BearsSplit;

typedef enum BearsStatus {
  BEARS_STATUS_OK = 0,
  BEARS_STATUS_NULL_POINTER = 1,
  BEARS_STATUS_INVALID_ARGUMENT = 2,
  BEARS_STATUS_UNKNOWN_TASK = 3,
  BEARS_STATUS_TASK = 4,
  BEARS_STATUS_TRAINING = 5,
  BEARS_STATUS_HASH_MISMATCH = 6,
  BEARS_STATUS_BUDGET = 7,
  BEARS_STATUS_IO = 8,
  BEARS_STATUS_BUFFER_TOO_SMALL = 9,
  BEARS_STATUS_PANIC = 10,
} BearsStatus;

/**
 * Generated train/val/test/ood splits of a task.
 */
typedef struct BearsDataset BearsDataset;

/**
 * A trained predictor or ensemble.
 */
typedef struct BearsModel BearsModel;

/**
 * A task: schema, knowledge and the compiled reasoner.
 */
typedef struct BearsTask BearsTask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, empty after a success.
 * Valid until the next `bears_*` call on the same thread.
 */
const char *bears_last_error(void);

/**
 * Static, NUL-terminated name of a status code; "unknown status" for
 * values outside the enum.
 */
const char *bears_status_name(int32_t status);

/**
 * Loads a builtin task (`mnist_half`, `mnist_even_odd`, `kandinsky_mini`,
 * `traffic_mini`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a writable pointer.
 */
enum BearsStatus bears_task_builtin(const char *name, struct BearsTask **out);

/**
 * Parses a task spec from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum BearsStatus bears_task_from_json(const char *json, struct BearsTask **out);

/**
 * # Safety
 * `task` must come from `bears_task_builtin`/`bears_task_from_json` or be
 * null, and must not be used afterwards.
 */
void bears_task_free(struct BearsTask *task);

/**
 * Number of concept variables.
 *
 * # Safety
 * `task` must be a live task handle.
 */
enum BearsStatus bears_task_num_concepts(const struct BearsTask *task, size_t *out);

/**
 * Total number of values over all concept variables, i.e. the width of a
 * row of concatenated concept factors.
 *
 * # Safety
 * `task` must be a live task handle.
 */
enum BearsStatus bears_task_concept_width(const struct BearsTask *task, size_t *out);

/**
 * Number of joint label values.
 *
 * # Safety
 * `task` must be a live task handle.
 */
enum BearsStatus bears_task_num_labels(const struct BearsTask *task, size_t *out);

/**
 * Width of one input row (all objects concatenated).
 *
 * # Safety
 * `task` must be a live task handle.
 */
enum BearsStatus bears_task_input_dim(const struct BearsTask *task, size_t *out);

/**
 * Label index computed by the knowledge for a concept assignment.
 *
 * # Safety
 * `assignment` must point to `len` readable values.
 */
enum BearsStatus bears_task_label_of(const struct BearsTask *task,
                                     const size_t *assignment,
                                     size_t len,
                                     size_t *out);

/**
 * Label distribution induced by independent concept factors given as one
 * concatenated row (see `bears_task_concept_width`).
 *
 * # Safety
 * `factors` must point to `len` readable values and `out` to `out_len`
 * writable ones.
 */
enum BearsStatus bears_task_label_probs(const struct BearsTask *task,
                                        const double *factors,
                                        size_t len,
                                        double *out,
                                        size_t out_len);

/**
 * Counts optimal concept maps over the task support and how many of them
 * are reasoning shortcuts (not the identity).
 *
 * # Safety
 * `task` must be a live task handle; outputs must be writable.
 */
enum BearsStatus bears_task_count_shortcuts(const struct BearsTask *task,
                                            uint64_t node_budget,
                                            uint64_t *out_optima,
                                            uint64_t *out_shortcuts);

/**
 * Generates the task's splits from `seed`.
 *
 * # Safety
 * `task` must be a live task handle and `out` writable.
 */
enum BearsStatus bears_dataset_generate(const struct BearsTask *task,
                                        uint64_t seed,
                                        struct BearsDataset **out);

/**
 * # Safety
 * `data` must come from `bears_dataset_generate` or be null.
 */
void bears_dataset_free(struct BearsDataset *data);

/**
 * Number of examples in a split.
 *
 * # Safety
 * `data` must be a live dataset handle.
 */
enum BearsStatus bears_dataset_len(const struct BearsDataset *data,
                                   enum BearsSplit split,
                                   size_t *out);

/**
 * Copies the split inputs, row-major, into `out`.
 *
 * # Safety
 * `out` must point to `out_len` writable values.
 */
enum BearsStatus bears_dataset_inputs(const struct BearsDataset *data,
                                      enum BearsSplit split,
                                      double *out,
                                      size_t out_len);

/**
 * Copies the split label indices into `out`.
 *
 * # Safety
 * `out` must point to `out_len` writable values.
 */
enum BearsStatus bears_dataset_labels(const struct BearsDataset *data,
                                      enum BearsSplit split,
                                      size_t *out,
                                      size_t out_len);

/**
 * Trains `method` (`dpl`, `sl`, `bears`, `de`, `mcdo`) on the training
 * split with the task's default hyperparameters. `epochs == 0` keeps the
 * default epoch count.
 *
 * # Safety
 * Handles must be live, `method` NUL-terminated and `out` writable.
 */
enum BearsStatus bears_model_train(const struct BearsTask *task,
                                   const struct BearsDataset *data,
                                   const char *method,
                                   uint64_t seed,
                                   uint32_t epochs,
                                   struct BearsModel **out);

/**
 * # Safety
 * `model` must come from `bears_model_train`/`bears_model_load` or be null.
 */
void bears_model_free(struct BearsModel *model);

/**
 * Number of ensemble members (1 for single predictors).
 *
 * # Safety
 * `model` must be a live model handle.
 */
enum BearsStatus bears_model_num_members(const struct BearsModel *model, size_t *out);

/**
 * Predicts `rows` examples of width `cols`. Writes `rows * num_labels`
 * label probabilities and `rows * concept_width` concatenated concept
 * factors, both row-major. Either output may be null with length 0.
 *
 * # Safety
 * `x` must hold `rows * cols` values; outputs must hold their lengths.
 */
enum BearsStatus bears_model_predict(const struct BearsModel *model,
                                     const double *x,
                                     size_t rows,
                                     size_t cols,
                                     double *labels,
                                     size_t labels_len,
                                     double *concepts,
                                     size_t concepts_len);

/**
 * Writes a checkpoint directory tagged with the task hash.
 *
 * # Safety
 * Handles must be live and `dir` NUL-terminated.
 */
enum BearsStatus bears_model_save(const struct BearsModel *model,
                                  const struct BearsTask *task,
                                  const char *dir);

/**
 * Loads a checkpoint written for `task`. Fails with
 * `BEARS_STATUS_HASH_MISMATCH` if it was trained on another task.
 *
 * # Safety
 * `task` must be live, `dir` NUL-terminated and `out` writable.
 */
enum BearsStatus bears_model_load(const struct BearsTask *task,
                                  const char *dir,
                                  struct BearsModel **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEARS_H */
