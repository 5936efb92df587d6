/*
 * C ABI shared by the reference NMS and any native NMS kernel.
 *
 * Candidate buffer, layout version 1:
 *   `count` contiguous records of 9 IEEE-754 binary64 values in host byte
 *   order (little-endian on every supported target):
 *     x1, y1, x2, y2, x3, y3, x4, y4, score
 *   Vertices follow the detection quad's clockwise-on-screen order. Scores
 *   are in [0, 1] on input and are clamped to [0, 1] on output. The output
 *   buffer uses the same layout; it never holds more records than the input,
 *   so out_capacity == count always suffices.
 *
 * A kernel shared library exports both symbols below. It must not abort the
 * host: all failures are reported through the return status, and on failure
 * *out_count is set to 0 and nothing is written to `out`.
 */
#ifndef RFBTD_NMS_KERNEL_ABI_H
#define RFBTD_NMS_KERNEL_ABI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define RFBTD_NMS_LAYOUT_VERSION 1u
#define RFBTD_NMS_RECORD_WIDTH 9u

#define RFBTD_NMS_MODE_STANDARD 0
#define RFBTD_NMS_MODE_LOCALITY_AWARE 1

#define RFBTD_NMS_OK 0
#define RFBTD_NMS_ERR_NULL_POINTER 1
#define RFBTD_NMS_ERR_NON_FINITE 2
#define RFBTD_NMS_ERR_BAD_SCORE 3
#define RFBTD_NMS_ERR_BAD_MODE 4
#define RFBTD_NMS_ERR_BAD_THRESHOLD 5
#define RFBTD_NMS_ERR_CAPACITY 6
#define RFBTD_NMS_ERR_BAD_COUNT 7

typedef int32_t (*rfbtd_nms_kernel_fn)(const double* records, size_t count, double iou_threshold, int32_t mode,
                                       double* out, size_t out_capacity, size_t* out_count);
typedef uint32_t (*rfbtd_nms_kernel_version_fn)(void);

#define RFBTD_NMS_KERNEL_SYMBOL "rfbtd_nms_kernel"
#define RFBTD_NMS_VERSION_SYMBOL "rfbtd_nms_kernel_version"

#ifdef __cplusplus
}
#endif

#endif /* RFBTD_NMS_KERNEL_ABI_H */
