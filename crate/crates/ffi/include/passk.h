#ifndef PASSK_H
#define PASSK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every exported function.
typedef enum PkStatus {
  PK_STATUS_OK = 0,
  PK_STATUS_INVALID_INPUT = 1,
  PK_STATUS_CONFIG = 2,
  PK_STATUS_IO = 3,
  PK_STATUS_NULL_POINTER = 4,
  PK_STATUS_PANIC = 5,
} PkStatus;

// Estimator codes accepted by the `algorithm` arguments.
enum PkAlgorithm
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  PK_ALGORITHM_REINFORCE = 0,
  PK_ALGORITHM_RLOO = 1,
  PK_ALGORITHM_GRPO = 2,
  PK_ALGORITHM_SKEW_R = 3,
  PK_ALGORITHM_REINFORCE_K = 4,
  PK_ALGORITHM_RLOO_K = 5,
  PK_ALGORITHM_GRPO_K = 6,
  PK_ALGORITHM_GRPO_TILDE = 7,
  PK_ALGORITHM_MIX_TILDE = 8,
  PK_ALGORITHM_MIX_DIRECT = 9,
  PK_ALGORITHM_BIASED_POW = 10,
  PK_ALGORITHM_BIASED_POW_RLOO = 11,
  PK_ALGORITHM_ENTROPY_GRPO = 12,
  PK_ALGORITHM_POSITIVE_COEFF = 13,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum PkAlgorithm PkAlgorithm;
#else
typedef uint32_t PkAlgorithm;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// Surrogate codes accepted by the `surrogate` arguments.
enum PkSurrogate
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  PK_SURROGATE_IDENTITY = 0,
  PK_SURROGATE_PASS_K = 1,
  PK_SURROGATE_ARCSIN01 = 2,
  PK_SURROGATE_ARCSIN_PASS_K = 3,
  PK_SURROGATE_SKEWR_REG = 4,
  PK_SURROGATE_INC_BETA_K = 5,
  PK_SURROGATE_ENTROPY_REG = 6,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum PkSurrogate PkSurrogate;
#else
typedef uint32_t PkSurrogate;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// Opaque softmax policy over the responses of a single problem.
typedef struct PkPolicy PkPolicy;

// Advantage scores for correct and incorrect responses of one group.
typedef struct PkAdvantagePair {
  double a_plus;
  double a_minus;
  // True when the group is all correct or all wrong under a centred estimator.
  bool degenerate;
} PkAdvantagePair;

// Probability-weighted scores: `w_plus = rho_hat a_plus`, `w_minus = -(1 - rho_hat) a_minus`.
typedef struct PkEffectiveWeights {
  double w_plus;
  double w_minus;
  bool degenerate;
} PkEffectiveWeights;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call into this library on the same thread.
const char *pk_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *pk_version(void);

// Unbiased Pass@K estimate of a group with `n_plus` correct out of `n`.
//
// # Safety
// `out` must be null or valid for a write of one `double`.
enum PkStatus pk_pass_k_hat(size_t n, size_t n_plus, size_t k, double *out);

// Leave-one-out fail weights `f_plus` and `f_minus`.
//
// # Safety
// Each out pointer must be null or valid for a write of one `double`.
enum PkStatus pk_fail_loo_weights(size_t n,
                                  size_t n_plus,
                                  size_t k,
                                  double *out_f_plus,
                                  double *out_f_minus);

// Advantage pair of an estimator. `k` is ignored by estimators without a K
// and `lambda` by all but the entropy-regularised one.
//
// # Safety
// `out` must be null or valid for a write of one `PkAdvantagePair`.
enum PkStatus pk_advantage_pair(uint32_t algorithm_code,
                                size_t k,
                                double lambda,
                                size_t n,
                                size_t n_plus,
                                struct PkAdvantagePair *out);

// Effective weights of an estimator.
//
// # Safety
// `out` must be null or valid for a write of one `PkEffectiveWeights`.
enum PkStatus pk_effective_weights(uint32_t algorithm_code,
                                   size_t k,
                                   double lambda,
                                   size_t n,
                                   size_t n_plus,
                                   struct PkEffectiveWeights *out);

// Surrogate value `F(rho)` for `rho` in `[0, 1]`.
//
// # Safety
// `out` must be null or valid for a write of one `double`.
enum PkStatus pk_surrogate_eval(uint32_t code, size_t k, double lambda, double rho, double *out);

// Surrogate derivative `F'(rho)` for `rho` in `(0, 1)`.
//
// # Safety
// `out` must be null or valid for a write of one `double`.
enum PkStatus pk_surrogate_derivative(uint32_t code,
                                      size_t k,
                                      double lambda,
                                      double rho,
                                      double *out);

// Advantage pair induced by a surrogate on a group.
//
// # Safety
// `out` must be null or valid for a write of one `PkAdvantagePair`.
enum PkStatus pk_forward_engineer(uint32_t code,
                                  size_t k,
                                  double lambda,
                                  size_t n,
                                  size_t n_plus,
                                  struct PkAdvantagePair *out);

// Incomplete beta integral `B(x; a, b)`, the integral of `t^(a-1) (1-t)^(b-1)` over `[0, x]`, not regularised.
//
// # Safety
// `out` must be null or valid for a write of one `double`.
enum PkStatus pk_incomplete_beta(double x,
                                 double a,
                                 double b,
                                 double *out);

// Creates a policy over `m` responses. `correct_mask[i]` is nonzero when
// response `i` is correct; `logits` holds the initial logits.
//
// # Safety
// `correct_mask` and `logits` must each be null or point to `m` readable
// elements. `out` must be null or valid for a pointer write.
enum PkStatus pk_policy_new(size_t m,
                            const uint8_t *correct_mask,
                            const double *logits,
                            struct PkPolicy **out);

// Releases a policy. Null is ignored.
//
// # Safety
// `policy` must be null or a handle from [`pk_policy_new`] not yet freed.
void pk_policy_free(struct PkPolicy *policy);

// Number of responses of a policy.
//
// # Safety
// `policy` must be null or a live handle; `out` null or writable.
enum PkStatus pk_policy_response_count(const struct PkPolicy *policy, size_t *out);

// Probability mass `rho` on correct responses.
//
// # Safety
// `policy` must be null or a live handle; `out` null or writable.
enum PkStatus pk_policy_rho(const struct PkPolicy *policy, double *out);

// Exact gradient of `rho` with respect to the logits. `len` must equal the
// response count.
//
// # Safety
// `policy` must be null or a live handle; `out` null or valid for `len` writes.
enum PkStatus pk_policy_exact_rho_grad(const struct PkPolicy *policy, double *out, size_t len);

// Exact expectation of an estimator's group gradient at group size `n`.
//
// # Safety
// `policy` must be null or a live handle; `out` null or valid for `len` writes.
enum PkStatus pk_policy_expected_gradient(const struct PkPolicy *policy,
                                          uint32_t algorithm_code,
                                          size_t k,
                                          double lambda,
                                          size_t n,
                                          double *out,
                                          size_t len);

// Runs a training configuration given as JSON and returns the metrics as
// JSON lines: one `step` record per step followed by a `summary` record.
//
// # Safety
// `config_json` must be null or a NUL-terminated string; `out` null or
// writable. The returned string must be released with [`pk_string_free`].
enum PkStatus pk_train_json(const char *config_json, char **out);

// Runs the verification suites and returns one JSON report per line. A null
// `config_json` selects the defaults. `out_failed` receives the number of
// failed checks; the status is still `Ok` when checks fail.
//
// # Safety
// `config_json` must be null or a NUL-terminated string; `out` and
// `out_failed` null or writable. Release the string with [`pk_string_free`].
enum PkStatus pk_verify_json(const char *config_json, char **out, size_t *out_failed);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string from this library not yet freed.
void pk_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PASSK_H */
