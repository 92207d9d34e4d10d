#ifndef CGRC_H
#define CGRC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CgrcStatus {
  CGRC_STATUS_OK = 0,
  CGRC_STATUS_NULL_POINTER = 1,
  CGRC_STATUS_INVALID_ARGUMENT = 2,
  CGRC_STATUS_NEED_MORE_INPUT = 3,
  CGRC_STATUS_AWAITING_REPORT = 4,
  CGRC_STATUS_EXHAUSTED = 5,
  CGRC_STATUS_NOT_PENDING = 6,
  CGRC_STATUS_BUFFER_TOO_SMALL = 7,
  CGRC_STATUS_INTERNAL = 8,
  CGRC_STATUS_PANIC = 9,
} CgrcStatus;

typedef enum CgrcScheme {
  CGRC_SCHEME_PROPOSED = 0,
  CGRC_SCHEME_NO_CONDITIONAL_QP = 1,
  CGRC_SCHEME_EQUAL_ALLOCATION = 2,
} CgrcScheme;

typedef enum CgrcFrameType {
  CGRC_FRAME_TYPE_I = 0,
  CGRC_FRAME_TYPE_P = 1,
  CGRC_FRAME_TYPE_B = 2,
} CgrcFrameType;

/**
 * Opaque controller handle.
 */
typedef struct CgrcSession CgrcSession;

/**
 * Session parameters; start from [`cgrc_session_params_default`].
 */
typedef struct CgrcSessionParams {
  uint32_t width;
  uint32_t height;
  double fps;
  uint32_t frame_count;
  /**
   * Bits per second.
   */
  double target_bitrate;
  uint32_t gop_size;
  /**
   * 0 places a single I frame at the start.
   */
  uint32_t intra_period;
  uint32_t lookahead;
  uint32_t search_range;
  double cutree_strength;
  double epp_threshold;
  int32_t qp_min;
  int32_t qp_max;
  enum CgrcScheme scheme;
} CgrcSessionParams;

typedef struct CgrcFrameDecision {
  /**
   * Display index.
   */
  uint32_t frame_index;
  uint32_t frame_type;
  uint32_t layer;
  double w;
  double lambda_g;
  double lambda;
  double base_qp;
  int32_t final_qp;
  double target_bits;
  double epp;
  double avg_abs_delta_qp;
  /**
   * Number of CU offsets available from [`cgrc_session_cu_offsets`].
   */
  uint32_t cu_count;
} CgrcFrameDecision;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty when none. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *cgrc_last_error(void);

/**
 * # Safety
 * `out` must be null or point to writable memory for one struct.
 */
enum CgrcStatus cgrc_session_params_default(struct CgrcSessionParams *out);

/**
 * Creates a session. On success `*out` owns a handle to release with
 * [`cgrc_session_free`].
 *
 * # Safety
 * `params` must be null or point to a valid struct; `out` must be null or
 * writable.
 */
enum CgrcStatus cgrc_session_new(const struct CgrcSessionParams *params, struct CgrcSession **out);

/**
 * # Safety
 * `session` must be null or a handle from [`cgrc_session_new`] that has not
 * been freed.
 */
void cgrc_session_free(struct CgrcSession *session);

/**
 * Supplies the next picture's luma in display order. Rows are `stride`
 * bytes apart; `width` bytes of each are read.
 *
 * # Safety
 * `luma` must point to `stride * height` readable bytes.
 */
enum CgrcStatus cgrc_session_push_luma(struct CgrcSession *session,
                                       const uint8_t *luma,
                                       size_t stride);

/**
 * Decision for the next frame in coding order.
 * Returns `NeedMoreInput` until enough pictures have been pushed.
 *
 * # Safety
 * `session` must be a live handle; `out` must be writable.
 */
enum CgrcStatus cgrc_session_next_decision(struct CgrcSession *session,
                                           struct CgrcFrameDecision *out);

/**
 * Copies the per-CU QP offsets of the pending decision (raster order on
 * the half-resolution 8x8 grid). `*written` receives the count.
 *
 * # Safety
 * `out` must have room for `capacity` doubles; `written` must be writable.
 */
enum CgrcStatus cgrc_session_cu_offsets(const struct CgrcSession *session,
                                        double *out,
                                        size_t capacity,
                                        size_t *written);

/**
 * Reports the coded size of the pending decision.
 *
 * # Safety
 * `session` must be a live handle.
 */
enum CgrcStatus cgrc_session_report(struct CgrcSession *session, uint64_t actual_bits);

double cgrc_lambda_from_qp(double qp);

/**
 * # Safety
 * `out` must be writable.
 */
enum CgrcStatus cgrc_qp_from_lambda(double lambda, double *out);

/**
 * Bitrate error in permille.
 *
 * # Safety
 * `out` must be writable.
 */
enum CgrcStatus cgrc_bitrate_error(double target, double actual, double *out);

/**
 * BD-rate of curve B against curve A, in percent.
 *
 * # Safety
 * Each rate/PSNR array must hold the stated number of doubles; `out` must
 * be writable.
 */
enum CgrcStatus cgrc_bd_rate(const double *rates_a,
                             const double *psnrs_a,
                             size_t n_a,
                             const double *rates_b,
                             const double *psnrs_b,
                             size_t n_b,
                             double *out);

/**
 * SATD of two row-major 8x8 blocks.
 *
 * # Safety
 * `a` and `b` must each point to 64 readable bytes; `out` must be writable.
 */
enum CgrcStatus cgrc_satd_8x8(const uint8_t *a, const uint8_t *b, uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CGRC_H */
