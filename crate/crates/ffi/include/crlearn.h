#ifndef CRLEARN_H
#define CRLEARN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum CrlStatus {
  CRL_STATUS_OK = 0,
  CRL_STATUS_NULL_POINTER,
  CRL_STATUS_DOMAIN,
  CRL_STATUS_LENGTH_MISMATCH,
  CRL_STATUS_INVALID_CONFIG,
  CRL_STATUS_INFEASIBLE_BASE,
  CRL_STATUS_NO_CONVERGENCE,
  CRL_STATUS_NO_FEASIBLE_BETA,
  CRL_STATUS_NOT_CONVERGED,
  CRL_STATUS_EMPTY_REPLICATIONS,
  CRL_STATUS_EMPTY_MASK,
  CRL_STATUS_DEGENERATE_ROW,
  CRL_STATUS_BAD_BLOCK_LEN,
  CRL_STATUS_BAD_THETA,
  CRL_STATUS_EXTERNAL_FAILURE,
  CRL_STATUS_REPLICATIONS,
  CRL_STATUS_INITIAL_POINT_INFEASIBLE,
  CRL_STATUS_PARSE,
  CRL_STATUS_NON_FINITE_VALUE,
  CRL_STATUS_IO,
  CRL_STATUS_PANIC,
} CrlStatus;

typedef enum CrlSimulator {
  /**
   * θ = (μ, σ).
   */
  CRL_SIMULATOR_GAUSSIAN_LOCATION_SCALE = 0,
  /**
   * θ = (μ, φ) with |φ| < 1.
   */
  CRL_SIMULATOR_AR1,
} CrlSimulator;

typedef enum CrlBranch {
  CRL_BRANCH_GENERAL = 0,
  /**
   * γ → 0 limit.
   */
  CRL_BRANCH_EXPONENTIAL_TILTING,
  /**
   * γ → −1 limit.
   */
  CRL_BRANCH_EMPIRICAL_LIKELIHOOD,
} CrlBranch;

typedef enum CrlMomentModel {
  /**
   * `y − β`, one parameter per data column.
   */
  CRL_MOMENT_MODEL_MEAN = 0,
  /**
   * `(y − β₁, (y − β₁)² − β₂)`; one data column.
   */
  CRL_MOMENT_MODEL_MEAN_VARIANCE,
  /**
   * `(y − β, (y − β)² − 1)`; one data column.
   */
  CRL_MOMENT_MODEL_MEAN_UNIT_VARIANCE,
  /**
   * Rows `(x, y)`; score `x (y − xᵀβ)`.
   */
  CRL_MOMENT_MODEL_LINEAR_SCORE,
} CrlMomentModel;

/**
 * MCMC output.
 */
typedef struct CrlChain CrlChain;

/**
 * Observation or simulation data.
 */
typedef struct CrlData CrlData;

/**
 * Fitted contrast probabilities and parameters.
 */
typedef struct CrlSolution CrlSolution;

typedef struct CrlStatistic {
  double value;
  double log_ratio_term;
  double distance_term;
} CrlStatistic;

typedef struct CrlMcmcOptions {
  size_t n_iters;
  size_t burn_in;
  uint64_t seed;
  /**
   * Accept on the likelihood ratio alone, ignoring the prior.
   */
  bool likelihood_only_acceptance;
  /**
   * Redraw simulations at every proposal.
   */
  bool resimulate_per_proposal;
} CrlMcmcOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length plus one, so a
 * caller can size the buffer with a first call passing `len = 0`.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null when `len` is 0.
 */
size_t crl_last_error_message(char *buf, size_t len);

/**
 * Build a `rows × cols` data matrix from row-major `values`.
 *
 * # Safety
 * `values` must point to `rows * cols` doubles; `out` must be writable.
 */
enum CrlStatus crl_data_new(const double *values, size_t rows, size_t cols, struct CrlData **out);

/**
 * # Safety
 * `data` must come from this library and not be used afterwards; null is a no-op.
 */
void crl_data_free(struct CrlData *data);

/**
 * # Safety
 * `data` must be a live handle or null (returns 0).
 */
size_t crl_data_rows(const struct CrlData *data);

/**
 * # Safety
 * `data` must be a live handle or null (returns 0).
 */
size_t crl_data_cols(const struct CrlData *data);

/**
 * # Safety
 * `data` must be a live handle; `out` must hold `capacity` doubles.
 */
enum CrlStatus crl_data_copy_values(const struct CrlData *data, double *out, size_t capacity);

/**
 * Draw `n` rows from a built-in simulator.
 *
 * # Safety
 * `theta` must point to `theta_len` doubles; `out` must be writable.
 */
enum CrlStatus crl_simulate(enum CrlSimulator kind,
                            const double *theta,
                            size_t theta_len,
                            size_t n,
                            uint64_t seed,
                            struct CrlData **out);

/**
 * Cressie-Read objective of a probability vector.
 *
 * # Safety
 * `pi` must point to `n` doubles; `out` must be writable.
 */
enum CrlStatus crl_cr_objective(const double *pi,
                                size_t n,
                                double gamma,
                                enum CrlBranch branch,
                                double *out);

/**
 * Minimum-discrepancy fit from the model's default starting point.
 *
 * # Safety
 * `data` must be a live handle; `out` must be writable.
 */
enum CrlStatus crl_fit(const struct CrlData *data,
                       enum CrlMomentModel model,
                       double gamma,
                       enum CrlBranch branch,
                       struct CrlSolution **out);

/**
 * # Safety
 * `sol` must come from this library and not be used afterwards; null is a no-op.
 */
void crl_solution_free(struct CrlSolution *sol);

/**
 * Number of probabilities.
 *
 * # Safety
 * `sol` must be a live handle or null (returns 0).
 */
size_t crl_solution_len(const struct CrlSolution *sol);

/**
 * # Safety
 * `sol` must be a live handle or null (returns 0).
 */
size_t crl_solution_beta_len(const struct CrlSolution *sol);

/**
 * # Safety
 * `sol` must be a live handle or null (returns 0).
 */
size_t crl_solution_lambda_len(const struct CrlSolution *sol);

/**
 * # Safety
 * `sol` must be a live handle or null (returns NaN).
 */
double crl_solution_discrepancy(const struct CrlSolution *sol);

/**
 * # Safety
 * `sol` must be a live handle or null (returns false).
 */
bool crl_solution_converged(const struct CrlSolution *sol);

/**
 * # Safety
 * `sol` must be a live handle; `out` must hold `capacity` doubles.
 */
enum CrlStatus crl_solution_copy_pi(const struct CrlSolution *sol, double *out, size_t capacity);

/**
 * # Safety
 * `sol` must be a live handle; `out` must hold `capacity` doubles.
 */
enum CrlStatus crl_solution_copy_beta(const struct CrlSolution *sol, double *out, size_t capacity);

/**
 * # Safety
 * `sol` must be a live handle; `out` must hold `capacity` doubles.
 */
enum CrlStatus crl_solution_copy_lambda(const struct CrlSolution *sol,
                                        double *out,
                                        size_t capacity);

/**
 * Basic learned statistic between an observed and a simulated fit.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum CrlStatus crl_learned_basic(const struct CrlSolution *obs,
                                 const struct CrlSolution *sim,
                                 struct CrlStatistic *out);

/**
 * Random-walk Metropolis with the basic learned statistic and a flat prior
 * on the box `[lower, upper]` (each of length `dim`).
 *
 * # Safety
 * `obs` must be a live handle; `lower`, `upper`, `theta0` and
 * `proposal_sd` must each point to `dim` doubles; `out` must be writable.
 */
enum CrlStatus crl_mcmc_run(const struct CrlData *obs,
                            enum CrlMomentModel model,
                            double gamma,
                            enum CrlBranch branch,
                            enum CrlSimulator sim,
                            size_t dim,
                            const double *lower,
                            const double *upper,
                            const double *theta0,
                            const double *proposal_sd,
                            struct CrlMcmcOptions options,
                            struct CrlChain **out);

/**
 * # Safety
 * `chain` must come from this library and not be used afterwards; null is a no-op.
 */
void crl_chain_free(struct CrlChain *chain);

/**
 * Number of iterations stored.
 *
 * # Safety
 * `chain` must be a live handle or null (returns 0).
 */
size_t crl_chain_len(const struct CrlChain *chain);

/**
 * # Safety
 * `chain` must be a live handle or null (returns 0).
 */
size_t crl_chain_dim(const struct CrlChain *chain);

/**
 * # Safety
 * `chain` must be a live handle or null (returns NaN).
 */
double crl_chain_acceptance_rate(const struct CrlChain *chain);

/**
 * Row-major `len × dim` samples.
 *
 * # Safety
 * `chain` must be a live handle; `out` must hold `capacity` doubles.
 */
enum CrlStatus crl_chain_copy_samples(const struct CrlChain *chain, double *out, size_t capacity);

/**
 * Per-iteration learned statistic values.
 *
 * # Safety
 * `chain` must be a live handle; `out` must hold `capacity` doubles.
 */
enum CrlStatus crl_chain_copy_loglik(const struct CrlChain *chain, double *out, size_t capacity);

/**
 * Posterior mean after burn-in, `dim` values.
 *
 * # Safety
 * `chain` must be a live handle; `out` must hold `capacity` doubles.
 */
enum CrlStatus crl_chain_posterior_mean(const struct CrlChain *chain, double *out, size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRLEARN_H */
