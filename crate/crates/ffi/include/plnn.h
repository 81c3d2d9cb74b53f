/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef PLNN_H
#define PLNN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Return code of every fallible function.
 */
typedef enum {
  PLNN_ERROR_OK = 0,
  PLNN_ERROR_NULL_POINTER = 1,
  PLNN_ERROR_INVALID_UTF8 = 2,
  PLNN_ERROR_PARSE = 3,
  PLNN_ERROR_INVALID_INPUT = 4,
  PLNN_ERROR_IO = 5,
  PLNN_ERROR_BUFFER_TOO_SMALL = 6,
  PLNN_ERROR_NOT_AVAILABLE = 7,
  PLNN_ERROR_PANIC = 8,
} PlnnError;

/**
 * Verdict of a verification run; values match the CLI exit codes.
 */
typedef enum {
  PLNN_VERDICT_UNSAT = 0,
  PLNN_VERDICT_SAT = 1,
  PLNN_VERDICT_TIMEOUT = 2,
  PLNN_VERDICT_ERROR = 3,
} PlnnVerdict;

/**
 * A validated network.
 */
typedef struct PlnnNetwork PlnnNetwork;

/**
 * A network with a property and an input box, in canonical form.
 */
typedef struct PlnnProblem PlnnProblem;

/**
 * Outcome of [`plnn_verify`].
 */
typedef struct PlnnResult PlnnResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last error on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *plnn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *plnn_version(void);

/**
 * Parses a `plnn-v1` network from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be a valid pointer.
 */
PlnnError plnn_network_from_json(const char *json, PlnnNetwork **out);

/**
 * Loads a `plnn-v1` network file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 */
PlnnError plnn_network_load(const char *path, PlnnNetwork **out);

/**
 * # Safety
 * `net` must come from a network constructor and not be used afterwards.
 */
void plnn_network_free(PlnnNetwork *net);

/**
 * Number of inputs, or 0 for NULL.
 *
 * # Safety
 * `net` must be NULL or a live handle.
 */
size_t plnn_network_input_size(const PlnnNetwork *net);

/**
 * Number of outputs, or 0 for NULL.
 *
 * # Safety
 * `net` must be NULL or a live handle.
 */
size_t plnn_network_output_size(const PlnnNetwork *net);

/**
 * Evaluates the network at `x` (length `x_len`) into `out` (length `out_len`).
 *
 * # Safety
 * `x` and `out` must point to arrays of the given lengths.
 */
PlnnError plnn_network_eval(const PlnnNetwork *net,
                            const double *x,
                            size_t x_len,
                            double *out,
                            size_t out_len);

/**
 * Builds a canonical problem from a network and property JSON text
 * (`{"input_lb":..,"input_ub":..,"property":..}`).
 *
 * # Safety
 * `net` must be a live handle, `property_json` a NUL-terminated string and
 * `out` a valid pointer.
 */
PlnnError plnn_problem_new(const PlnnNetwork *net, const char *property_json, PlnnProblem **out);

/**
 * # Safety
 * `problem` must come from [`plnn_problem_new`] and not be used afterwards.
 */
void plnn_problem_free(PlnnProblem *problem);

/**
 * Runs `method` (e.g. `"babsb"`, `"mip-planet-opt"`) on the problem.
 * A negative `timeout_s` means no limit.
 *
 * # Safety
 * `problem` must be a live handle, `method` a NUL-terminated string and
 * `out` a valid pointer.
 */
PlnnError plnn_verify(const PlnnProblem *problem,
                      const char *method,
                      double timeout_s,
                      uint64_t seed,
                      PlnnResult **out);

/**
 * # Safety
 * `result` must come from [`plnn_verify`] and not be used afterwards.
 */
void plnn_result_free(PlnnResult *result);

/**
 * Verdict of a result; `PLNN_VERDICT_ERROR` for NULL.
 *
 * # Safety
 * `result` must be NULL or a live handle.
 */
PlnnVerdict plnn_result_verdict(const PlnnResult *result);

/**
 * Number of subdomains or MIP nodes explored.
 *
 * # Safety
 * `result` must be NULL or a live handle.
 */
size_t plnn_result_nodes(const PlnnResult *result);

/**
 * Margin of an UNSAT result.
 *
 * # Safety
 * `result` must be a live handle and `margin` a valid pointer.
 */
PlnnError plnn_result_margin(const PlnnResult *result, double *margin);

/**
 * Copies the counterexample of a SAT result into `buf`. `len` receives the
 * length of the counterexample even when the buffer is too small.
 *
 * # Safety
 * `result` must be a live handle, `buf` an array of `buf_len` doubles (may be
 * NULL when `buf_len` is 0) and `len` a valid pointer.
 */
PlnnError plnn_result_counterexample(const PlnnResult *result,
                                     double *buf,
                                     size_t buf_len,
                                     size_t *len);

/**
 * The result as JSON text. Release with [`plnn_string_free`].
 *
 * # Safety
 * `result` must be NULL or a live handle.
 */
char *plnn_result_to_json(const PlnnResult *result);

/**
 * # Safety
 * `s` must come from a `plnn_*` function returning an owned string.
 */
void plnn_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLNN_H */
