#ifndef EMONET_H
#define EMONET_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of emotion labels, and the length of every score array.
 */
#define EMONET_LABEL_COUNT 7

typedef enum EmonetStatus {
  EMONET_STATUS_OK = 0,
  EMONET_STATUS_NULL_ARGUMENT = 1,
  EMONET_STATUS_INVALID_ARGUMENT = 2,
  EMONET_STATUS_IO = 3,
  EMONET_STATUS_BAD_MODEL = 4,
  EMONET_STATUS_SHAPE_MISMATCH = 5,
  EMONET_STATUS_NON_MONOTONIC_FRAME = 6,
  EMONET_STATUS_PANIC = 7,
} EmonetStatus;

/**
 * A loaded classifier.
 */
typedef struct EmonetModel EmonetModel;

/**
 * Alert counters for one stream.
 */
typedef struct EmonetMonitor EmonetMonitor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *emonet_last_error(void);

/**
 * Static NUL-terminated label name for `index` in 0..7, or NULL.
 */
const char *emonet_label_name(uint32_t index);

/**
 * Loads a model file. On success `*out` receives a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EmonetStatus emonet_model_load(const char *path, struct EmonetModel **out);

/**
 * Loads a model from an in-memory model file image.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` be a valid pointer.
 */
enum EmonetStatus emonet_model_load_bytes(const uint8_t *data,
                                          size_t len,
                                          struct EmonetModel **out);

/**
 * Releases a model handle. NULL is ignored.
 *
 * # Safety
 * `model` must come from a load function and not be used afterwards.
 */
void emonet_model_free(struct EmonetModel *model);

/**
 * Side length of the square input the model expects; 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t emonet_model_roi_size(const struct EmonetModel *model);

/**
 * Scores one region of `len = side²` pixels in `[0, 1]`, row-major, and
 * writes seven probabilities in label order to `probs_out`.
 *
 * # Safety
 * `pixels` must point to `len` floats and `probs_out` to room for 7 doubles.
 */
enum EmonetStatus emonet_model_predict(const struct EmonetModel *model,
                                       const float *pixels,
                                       size_t len,
                                       double *probs_out);

/**
 * Creates a monitor. `monitored` lists label indices; with `count == 0`
 * the default set (sad, angry, surprised, disgust) is used.
 *
 * # Safety
 * `monitored` must point to `count` bytes (may be NULL when `count` is 0)
 * and `out` must be a valid pointer.
 */
enum EmonetStatus emonet_monitor_new(uint64_t thresh,
                                     uint64_t cooldown_frames,
                                     const uint8_t *monitored,
                                     size_t count,
                                     struct EmonetMonitor **out);

/**
 * Counts one classified frame. `probs` holds seven scores summing to 1.
 * If an alert fires, `*alert_label` receives its label index and
 * `*alert_count` the counter value; otherwise `*alert_label` is -1.
 *
 * # Safety
 * `monitor` must be a live handle, `probs` point to 7 doubles, and the
 * output pointers be valid.
 */
enum EmonetStatus emonet_monitor_ingest(struct EmonetMonitor *monitor,
                                        uint64_t frame_index,
                                        const double *probs,
                                        int32_t *alert_label,
                                        uint64_t *alert_count);

/**
 * Counts a frame with no face; only the cooldown advances.
 *
 * # Safety
 * `monitor` must be a live handle.
 */
enum EmonetStatus emonet_monitor_skip(struct EmonetMonitor *monitor, uint64_t frame_index);

/**
 * Current counter of label `index`; 0 for NULL or an invalid index.
 *
 * # Safety
 * `monitor` must be NULL or a live handle.
 */
uint64_t emonet_monitor_counter(const struct EmonetMonitor *monitor, uint32_t index);

/**
 * Releases a monitor handle. NULL is ignored.
 *
 * # Safety
 * `monitor` must come from [`emonet_monitor_new`] and not be used afterwards.
 */
void emonet_monitor_free(struct EmonetMonitor *monitor);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMONET_H */
