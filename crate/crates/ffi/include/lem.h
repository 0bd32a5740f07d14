#ifndef LEM_H
#define LEM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum LemStatus {
  LEM_STATUS_OK = 0,
  LEM_STATUS_NULL_POINTER = 1,
  LEM_STATUS_INVALID_UTF8 = 2,
  LEM_STATUS_SCENARIO = 3,
  LEM_STATUS_CONFIG = 4,
  LEM_STATUS_CLEARING = 5,
  LEM_STATUS_RECOVERY = 6,
  LEM_STATUS_SETTLEMENT = 7,
  LEM_STATUS_IO = 8,
  LEM_STATUS_OUT_OF_RANGE = 9,
  LEM_STATUS_PANIC = 10,
} LemStatus;

typedef enum LemSolver {
  LEM_SOLVER_C1 = 0,
  LEM_SOLVER_N3 = 1,
  LEM_SOLVER_S2 = 2,
  LEM_SOLVER_S3 = 3,
} LemSolver;

typedef enum LemPriceMode {
  LEM_PRICE_MODE_DUALS = 0,
  LEM_PRICE_MODE_CONSENSUS = 1,
} LemPriceMode;

/**
 * Opaque report handle.
 */
typedef struct LemReport LemReport;

/**
 * Opaque scenario handle.
 */
typedef struct LemScenario LemScenario;

/**
 * Run parameters. Fill with [`lem_run_config_default`] before changing fields.
 */
typedef struct LemRunConfig {
  enum LemSolver solver;
  enum LemPriceMode price_mode;
  double rho;
  double primal_tol;
  double dual_tol;
  double surplus_tol;
  uint32_t max_iter;
  /**
   * Sharing threshold, or -1 for the market default.
   */
  int32_t theta;
  uint64_t seed;
  /**
   * Nodes whose measurements are withheld; may be null when `silent_count` is 0.
   */
  const uint32_t *silent_nodes;
  size_t silent_count;
} LemRunConfig;

/**
 * Settlement of one node.
 */
typedef struct LemBalance {
  double payoff;
  double imbalance;
  double final_balance;
  bool recovered;
} LemBalance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *lem_last_error_message(void);

/**
 * Static description of a status code.
 */
const char *lem_status_name(enum LemStatus status);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum LemStatus lem_scenario_load(const char *path, struct LemScenario **out);

/**
 * Parses a scenario from TOML text.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` a writable pointer.
 */
enum LemStatus lem_scenario_parse(const char *text, struct LemScenario **out);

/**
 * # Safety
 * `sc` must be null or a handle from this library that was not yet freed.
 */
void lem_scenario_free(struct LemScenario *sc);

/**
 * Number of nodes including the substation; 0 for a null handle.
 *
 * # Safety
 * `sc` must be null or a live scenario handle.
 */
size_t lem_scenario_node_count(const struct LemScenario *sc);

/**
 * # Safety
 * `sc` must be null or a live scenario handle.
 */
size_t lem_scenario_steps(const struct LemScenario *sc);

/**
 * Writes the default configuration for the plaintext ADMM solver.
 *
 * # Safety
 * `cfg` must be a writable pointer.
 */
enum LemStatus lem_run_config_default(struct LemRunConfig *cfg);

/**
 * Clears, operates, recovers and settles one day.
 *
 * # Safety
 * `sc` must be a live scenario handle, `cfg` a valid config and `out` a
 * writable pointer.
 */
enum LemStatus lem_run(const struct LemScenario *sc,
                       const struct LemRunConfig *cfg,
                       struct LemReport **out);

/**
 * # Safety
 * `report` must be null or a handle from this library that was not yet freed.
 */
void lem_report_free(struct LemReport *report);

/**
 * Clearing iterations; 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live report handle.
 */
size_t lem_report_iterations(const struct LemReport *report);

/**
 * Expected cost of the cleared schedule; NaN for a null handle.
 *
 * # Safety
 * `report` must be null or a live report handle.
 */
double lem_report_objective(const struct LemReport *report);

/**
 * Deviation from the centralized objective in percent; NaN for a null handle.
 *
 * # Safety
 * `report` must be null or a live report handle.
 */
double lem_report_relative_accuracy(const struct LemReport *report);

/**
 * # Safety
 * `report` must be a live report handle and `out` a writable pointer.
 */
enum LemStatus lem_report_balance(const struct LemReport *report,
                                  size_t node,
                                  struct LemBalance *out);

/**
 * Writes the CSV and log outputs of a report into `dir`.
 *
 * # Safety
 * `report` must be a live report handle and `dir` a nul-terminated string.
 */
enum LemStatus lem_report_write(const struct LemReport *report, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEM_H */
