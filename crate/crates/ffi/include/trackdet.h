#ifndef TRACKDET_H
#define TRACKDET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every call.
 */
typedef enum TrackdetStatus {
  TRACKDET_STATUS_OK = 0,
  /*
   A required pointer was null or a string was not UTF-8.
   */
  TRACKDET_STATUS_NULL_ARGUMENT = 1,
  TRACKDET_STATUS_INVALID_CONFIG = 2,
  TRACKDET_STATUS_INVALID_INPUT = 3,
  TRACKDET_STATUS_IO = 4,
  /*
   A numerical or metric failure while running.
   */
  TRACKDET_STATUS_RUNTIME = 5,
  TRACKDET_STATUS_PANIC = 6,
} TrackdetStatus;

typedef enum TrackdetMode {
  TRACKDET_MODE_INTEGRATED = 0,
  TRACKDET_MODE_SEQUENTIAL = 1,
} TrackdetMode;

/*
 Opaque tracker handle.
 */
typedef struct TrackdetTracker TrackdetTracker;

/*
 A kept box of the most recent frame.
 */
typedef struct TrackdetBox {
  double x1;
  double y1;
  double x2;
  double y2;
  /*
   Probability of `class_id`.
   */
  double confidence;
  /*
   Top foreground class, 1-based.
   */
  uint32_t class_id;
  /*
   -1 when the box belongs to no tracklet.
   */
  int64_t track_id;
} TrackdetBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *trackdet_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *trackdet_version(void);

/*
 Creates a tracker.

 `config_toml` is the text of a flat TOML config, or null for defaults.

 # Safety
 `config_toml` must be null or a valid NUL-terminated string; `out` must
 be a valid pointer.
 */
enum TrackdetStatus trackdet_tracker_new(const char *config_toml,
                                         enum TrackdetMode mode,
                                         bool propagate,
                                         bool rescore,
                                         uintptr_t num_classes,
                                         struct TrackdetTracker **out);

/*
 Processes one frame of `num_candidates` candidates.

 `boxes` holds `4 * n` corners `x1, y1, x2, y2`; `scores` holds
 `n * (num_classes + 1)` class probabilities with background first;
 `embeddings` holds `n * embedding_dim` values; `motion` is null or holds
 `4 * n` displacements `dx, dy, dw, dh`.

 # Safety
 `tracker` must come from [`trackdet_tracker_new`]; the arrays must be
 valid for the lengths above (they may be null when `num_candidates` is 0).
 */
enum TrackdetStatus trackdet_tracker_push_frame(struct TrackdetTracker *tracker,
                                                uint64_t frame,
                                                uintptr_t num_candidates,
                                                const double *boxes,
                                                const double *scores,
                                                const double *embeddings,
                                                uintptr_t embedding_dim,
                                                const double *motion);

/*
 Number of boxes kept on the most recent frame.

 # Safety
 `tracker` must come from [`trackdet_tracker_new`]; `out` must be valid.
 */
enum TrackdetStatus trackdet_tracker_num_boxes(const struct TrackdetTracker *tracker,
                                               uintptr_t *out);

/*
 Box `index` of the most recent frame.

 # Safety
 `tracker` must come from [`trackdet_tracker_new`]; `out` must be valid.
 */
enum TrackdetStatus trackdet_tracker_get_box(const struct TrackdetTracker *tracker,
                                             uintptr_t index,
                                             struct TrackdetBox *out);

/*
 Releases a tracker. Null is ignored.

 # Safety
 `tracker` must be null or come from [`trackdet_tracker_new`], and must
 not be used afterwards.
 */
void trackdet_tracker_free(struct TrackdetTracker *tracker);

/*
 Writes a simulated detection stream.

 # Safety
 `config_path` must be null or a valid string; `output_path` must be valid.
 */
enum TrackdetStatus trackdet_simulate(const char *config_path, const char *output_path);

/*
 Tracks a detection stream file and writes CSV rows.

 # Safety
 `config_path` must be null or a valid string; the paths must be valid.
 */
enum TrackdetStatus trackdet_track(const char *config_path,
                                   const char *input_path,
                                   enum TrackdetMode mode,
                                   bool propagate,
                                   bool rescore,
                                   const char *output_path);

/*
 Evaluates predictions against ground truth; `*out_json` receives a JSON
 report to be released with [`trackdet_string_free`].

 # Safety
 `config_path` must be null or a valid string; the paths and `out_json`
 must be valid.
 */
enum TrackdetStatus trackdet_eval(const char *config_path,
                                  const char *pred_path,
                                  const char *gt_path,
                                  char **out_json);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must be null or come from this library, and must not be used
 afterwards.
 */
void trackdet_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRACKDET_H */
