#ifndef CGMC_H
#define CGMC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CgmcProfile {
  /**
   * `J(r) = J0/(2L)` for `1 ≤ r ≤ L`.
   */
  CGMC_PROFILE_CONSTANT = 0,
  /**
   * `V(u) = 1 − u`.
   */
  CGMC_PROFILE_LINEAR = 1,
  /**
   * Mean field, `J = J0/N` between all pairs.
   */
  CGMC_PROFILE_CURIE_WEISS = 2,
} CgmcProfile;

typedef enum CgmcRate {
  CGMC_RATE_METROPOLIS = 0,
  CGMC_RATE_GLAUBER = 1,
  CGMC_RATE_SYMMETRIC = 2,
} CgmcRate;

typedef enum CgmcScheme {
  CGMC_SCHEME_MICRO = 0,
  CGMC_SCHEME_CG0 = 1,
  CGMC_SCHEME_CG2 = 2,
} CgmcScheme;

typedef enum CgmcStatus {
  CGMC_STATUS_OK = 0,
  CGMC_STATUS_NULL_POINTER = 1,
  CGMC_STATUS_INVALID_ARGUMENT = 2,
  CGMC_STATUS_SIZE_MISMATCH = 3,
  CGMC_STATUS_STATE_SPACE_TOO_LARGE = 4,
  CGMC_STATUS_NUMERICAL = 5,
  CGMC_STATUS_IO = 6,
  CGMC_STATUS_PANIC = 7,
} CgmcStatus;

/**
 * Microscopic Hamiltonian on a periodic chain.
 */
typedef struct CgmcModel CgmcModel;

/**
 * Hamiltonian a chain samples: microscopic, coarse or corrected coarse.
 */
typedef struct CgmcSystem CgmcSystem;

typedef struct CgmcChainSpec {
  double beta;
  /**
   * A `CgmcRate` value.
   */
  uint32_t rate;
  uint64_t n_burnin;
  uint64_t n_samples;
  uint64_t thinning;
  uint64_t seed;
  uint64_t stream;
  bool match_paper_appendix_b;
} CgmcChainSpec;

typedef struct CgmcChainSummary {
  double magnetization;
  /**
   * Batch-means standard error of `magnetization`.
   */
  double magnetization_stderr;
  double acceptance_rate;
  uint64_t n_records;
  uint64_t energy_evals;
} CgmcChainSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static name of a `CgmcStatus` value; "unknown" outside the enum.
 */
const char *cgmc_status_name(uint32_t status);

/**
 * Copies the last failure message of this thread into `buf`, truncated and
 * NUL terminated. Returns the buffer size the full message needs, or 0 when
 * the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t cgmc_last_error_message(char *buf, uintptr_t len);

/**
 * Builds a model with uniform field `h` (entering as `+h Σ σ`).
 * `profile` is a `CgmcProfile` value; `range` is ignored for Curie-Weiss.
 *
 * # Safety
 * `out` must be a valid pointer. On success `*out` owns a handle to release
 * with `cgmc_model_free`.
 */
enum CgmcStatus cgmc_model_new(uintptr_t n_sites,
                               uint32_t profile,
                               uintptr_t range,
                               double j0,
                               double h,
                               struct CgmcModel **out);

/**
 * # Safety
 * `model` must be null or a handle from `cgmc_model_new` not yet freed.
 */
void cgmc_model_free(struct CgmcModel *model);

/**
 * Number of sites, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t cgmc_model_n_sites(const struct CgmcModel *model);

/**
 * Energy of a configuration of `len` spins, each ±1.
 *
 * # Safety
 * `model` must be a live handle, `spins` must point to `len` values and `out`
 * must be valid.
 */
enum CgmcStatus cgmc_model_energy(const struct CgmcModel *model,
                                  const int8_t *spins,
                                  uintptr_t len,
                                  double *out);

/**
 * Exact relative entropy per site between the coarse-grained micro measure
 * and the `scheme` measure at cell size `q`, by enumeration.
 *
 * # Safety
 * `model` must be a live handle and `out` must be valid.
 */
enum CgmcStatus cgmc_exact_entropy(const struct CgmcModel *model,
                                   uintptr_t q,
                                   double beta,
                                   uint32_t scheme,
                                   double *out);

/**
 * Builds the Hamiltonian sampled under `scheme`. Coarse schemes use cells of
 * `q` sites and inverse temperature `beta`, which must match the chain's.
 *
 * # Safety
 * `model` must be a live handle and `out` must be valid. On success `*out`
 * owns a handle to release with `cgmc_system_free`.
 */
enum CgmcStatus cgmc_system_new(const struct CgmcModel *model,
                                uint32_t scheme,
                                uintptr_t q,
                                double beta,
                                struct CgmcSystem **out);

/**
 * # Safety
 * `system` must be null or a handle from `cgmc_system_new` not yet freed.
 */
void cgmc_system_free(struct CgmcSystem *system);

struct CgmcChainSpec cgmc_chain_spec_default(void);

/**
 * Runs one chain from the all-up state and summarizes its magnetization.
 *
 * # Safety
 * `system` must be a live handle; `spec` and `out` must be valid.
 */
enum CgmcStatus cgmc_run_chain(const struct CgmcSystem *system,
                               const struct CgmcChainSpec *spec,
                               struct CgmcChainSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CGMC_H */
