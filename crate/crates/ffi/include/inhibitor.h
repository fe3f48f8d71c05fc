#ifndef INHIBITOR_H
#define INHIBITOR_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum InhStatus {
  INH_STATUS_OK = 0,
  INH_STATUS_NULL_POINTER = 1,
  INH_STATUS_INVALID_ARGUMENT = 2,
  INH_STATUS_SHAPE = 3,
  /**
   * Accumulator, message-space or table-precision overflow.
   */
  INH_STATUS_OVERFLOW = 4,
  INH_STATUS_DIVERGED = 5,
  INH_STATUS_PANIC = 6,
} InhStatus;

typedef enum InhMechanism {
  INH_MECHANISM_DOT_PROD = 0,
  INH_MECHANISM_INHIBITOR = 1,
} InhMechanism;

/**
 * Opaque integer circuit.
 */
typedef struct InhCircuit InhCircuit;

/**
 * Opaque dense `f64` matrix.
 */
typedef struct InhTensor InhTensor;

typedef struct InhCostReport {
  uint64_t pbs_count;
  uint64_t add_count;
  uint64_t mul_const_count;
  uint32_t max_bits;
  double est_cost;
  /**
   * Nonzero when outputs are numerator/denominator pairs divided after decryption.
   */
  uint8_t client_division;
} InhCostReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failed call on this thread ("" after success).
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *inh_last_error(void);

/**
 * NUL-terminated library version.
 */
const char *inh_version(void);

/**
 * Creates a `rows x cols` tensor copied from `data` (`rows * cols` values),
 * or zero-filled when `data` is NULL.
 *
 * # Safety
 * `data` must be NULL or point to `rows * cols` readable doubles; `out` must be writable.
 */
enum InhStatus inh_tensor_new(size_t rows, size_t cols, const double *data, struct InhTensor **out);

/**
 * # Safety
 * `t` must be NULL or a handle from this library that has not been freed.
 */
void inh_tensor_free(struct InhTensor *t);

/**
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t inh_tensor_rows(const struct InhTensor *t);

/**
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t inh_tensor_cols(const struct InhTensor *t);

/**
 * Copies the row-major entries into `out`, which must hold exactly `rows * cols` values.
 *
 * # Safety
 * `t` must be a live handle and `out` must point to `len` writable doubles.
 */
enum InhStatus inh_tensor_copy_data(const struct InhTensor *t, double *out, size_t len);

/**
 * `Softmax(Q K^T / sqrt(d)) V` with `d = cols(Q)`.
 *
 * # Safety
 * `q`, `k`, `v` must be live handles; `out` must be writable.
 */
enum InhStatus inh_dotprod_attention(const struct InhTensor *q,
                                     const struct InhTensor *k,
                                     const struct InhTensor *v,
                                     struct InhTensor **out);

/**
 * Inhibitor attention. `gamma <= 0` selects `sqrt(cols(Q))`; `is_signed`
 * nonzero selects the signed inhibition.
 *
 * # Safety
 * `q`, `k`, `v` must be live handles; `out` must be writable.
 */
enum InhStatus inh_inhibitor_attention(const struct InhTensor *q,
                                       const struct InhTensor *k,
                                       const struct InhTensor *v,
                                       double gamma,
                                       double alpha,
                                       int32_t is_signed,
                                       struct InhTensor **out);

/**
 * `H[i][k] = sum_j relu(V[j][k] - Z[i][j])` by the fused identity.
 *
 * # Safety
 * `v`, `z` must be live handles; `out` must be writable.
 */
enum InhStatus inh_inhibit_fused(const struct InhTensor *v,
                                 const struct InhTensor *z,
                                 struct InhTensor **out);

/**
 * Pairwise L1 distances between the rows of `a` and `b`.
 *
 * # Safety
 * `a`, `b` must be live handles; `out` must be writable.
 */
enum InhStatus inh_cdist_manhattan(const struct InhTensor *a,
                                   const struct InhTensor *b,
                                   struct InhTensor **out);

/**
 * Integer inhibitor attention on `n x d` operands sharing `scale_exp` and
 * `bits` (8 or 16). Writes `n x d` 32-bit results at the same scale.
 *
 * # Safety
 * `q`, `k`, `v` must each point to `n * d` readable values; `out` to `n * d` writable ones.
 */
enum InhStatus inh_quant_inhibitor(const int32_t *q,
                                   const int32_t *k,
                                   const int32_t *v,
                                   size_t n,
                                   size_t d,
                                   int32_t scale_exp,
                                   uint32_t bits,
                                   int32_t alpha_q,
                                   uint32_t gamma_shift,
                                   int32_t *out);

/**
 * Lowers one attention mechanism over `n x d` inputs of `bits` signed bits.
 * Input order is Q, K, V, each row-major. For the dot-product circuit the
 * outputs are `n * d` numerators followed by `n` softmax denominators.
 *
 * # Safety
 * `out` must be writable.
 */
enum InhStatus inh_circuit_build(enum InhMechanism mechanism,
                                 size_t n,
                                 size_t d,
                                 uint32_t bits,
                                 uint32_t precision,
                                 uint32_t gamma_shift,
                                 int64_t alpha_q,
                                 struct InhCircuit **out);

/**
 * # Safety
 * `c` must be NULL or a handle from this library that has not been freed.
 */
void inh_circuit_free(struct InhCircuit *c);

/**
 * # Safety
 * `c` must be NULL or a live handle.
 */
size_t inh_circuit_num_inputs(const struct InhCircuit *c);

/**
 * # Safety
 * `c` must be NULL or a live handle.
 */
size_t inh_circuit_num_outputs(const struct InhCircuit *c);

/**
 * Interval analysis and operation tally with the default cost weights.
 *
 * # Safety
 * `c` must be a live handle; `out` must be writable.
 */
enum InhStatus inh_circuit_analyze(const struct InhCircuit *c, struct InhCostReport *out);

/**
 * Noise-free evaluation. Values outside the message space yield `OVERFLOW`.
 *
 * # Safety
 * `inputs` must point to `n_inputs` readable values and `outputs` to `n_outputs` writable ones.
 */
enum InhStatus inh_circuit_interpret(const struct InhCircuit *c,
                                     const int64_t *inputs,
                                     size_t n_inputs,
                                     int64_t *outputs,
                                     size_t n_outputs);

/**
 * `a * b` through two quarter-square table lookups of `precision` bits.
 * Operands must fit `precision - 1` signed bits.
 *
 * # Safety
 * `out` must be writable.
 */
enum InhStatus inh_pbs_mul(int64_t a, int64_t b, uint32_t precision, int64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INHIBITOR_H */
