#ifndef IRSATSIM_H
#define IRSATSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a call. Values 2 to 9 match the command-line exit codes.
typedef enum IrsStatus {
  IRS_STATUS_OK = 0,
  IRS_STATUS_INVALID_ARGUMENT = 2,
  IRS_STATUS_DEGENERATE_HOMOGRAPHY = 3,
  IRS_STATUS_DEGENERATE_TEMPLATE = 4,
  IRS_STATUS_NON_FINITE = 5,
  IRS_STATUS_FORMAT = 6,
  IRS_STATUS_FRAME_MISMATCH = 7,
  IRS_STATUS_IO = 8,
  IRS_STATUS_IMAGE = 9,
  // A Rust panic was caught at the boundary.
  IRS_STATUS_INTERNAL = 10,
} IrsStatus;

// Matching strategies for `IrsEvalOptions`.
typedef enum IrsMatching {
  IRS_MATCHING_GREEDY = 0,
  IRS_MATCHING_OPTIMAL = 1,
} IrsMatching;

// A JSON report produced by a call.
typedef struct IrsReport IrsReport;

// A sequence spec.
typedef struct IrsSpec IrsSpec;

typedef struct IrsEvalOptions {
  double binarization;
  double match_threshold;
  size_t n_thresholds;
  enum IrsMatching matching;
  // Integrate the ROC over `[0, fa_max]`; zero means up to the largest observed Fa.
  double fa_max;
} IrsEvalOptions;

// Headline numbers of an evaluation. `pd` is NaN when there are no targets.
typedef struct IrsScore {
  uint64_t td;
  uint64_t at;
  uint64_t fd;
  uint64_t np;
  double pd;
  double fa;
  double auc;
} IrsScore;

typedef struct IrsCheckOptions {
  uint64_t seed;
  double eps;
  size_t directions;
  double offset_upsample_scale;
} IrsCheckOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on this thread.
const char *irs_last_error(void);

// Library version as a static string.
const char *irs_version(void);

// Parses a TOML spec. Relative background image paths resolve against the working directory.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum IrsStatus irs_spec_from_toml(const char *toml, struct IrsSpec **out);

// Loads a TOML spec file.
//
// # Safety
// `file` must be a NUL-terminated string and `out` a valid pointer.
enum IrsStatus irs_spec_load(const char *file, struct IrsSpec **out);

// Overrides the master seed.
//
// # Safety
// `spec` must come from `irs_spec_from_toml` or `irs_spec_load`.
enum IrsStatus irs_spec_set_seed(struct IrsSpec *spec, uint64_t seed);

// Overrides the number of sequences.
//
// # Safety
// `spec` must come from `irs_spec_from_toml` or `irs_spec_load`.
enum IrsStatus irs_spec_set_sequences(struct IrsSpec *spec, size_t sequences);

// Accepts (non-zero) or rejects (zero) parameters outside the default generation ranges.
//
// # Safety
// `spec` must come from `irs_spec_from_toml` or `irs_spec_load`.
enum IrsStatus irs_spec_allow_out_of_range(struct IrsSpec *spec, int allow);

// # Safety
// `spec` must be null or a handle not yet freed.
void irs_spec_free(struct IrsSpec *spec);

// The report as a NUL-terminated JSON string, owned by the report.
//
// # Safety
// `report` must be null or a live handle.
const char *irs_report_json(const struct IrsReport *report);

// # Safety
// `report` must be null or a handle not yet freed.
void irs_report_free(struct IrsReport *report);

// Renders the dataset described by `spec` into `out_dir`. `workers` 0 uses all cores.
// `summary` may be null.
//
// # Safety
// Pointers must be valid; `out_dir` NUL-terminated.
enum IrsStatus irs_generate(const struct IrsSpec *spec,
                            const char *out_dir,
                            size_t workers,
                            struct IrsReport **summary);

// Dataset statistics as a JSON report.
//
// # Safety
// `dataset` must be NUL-terminated and `out` valid.
enum IrsStatus irs_stats(const char *dataset, size_t workers, struct IrsReport **out);

struct IrsEvalOptions irs_eval_options_default(void);

// Scores predictions against ground truth. `opts` null means defaults;
// `score` and `out` may each be null.
//
// # Safety
// Paths must be NUL-terminated; non-null pointers must be valid.
enum IrsStatus irs_eval(const char *pred,
                        const char *gt,
                        const struct IrsEvalOptions *opts,
                        size_t workers,
                        struct IrsScore *score,
                        struct IrsReport **out);

struct IrsCheckOptions irs_check_options_default(void);

// Runs the kernel check suite. `weights` is an optional bundle path. `passed`
// receives 1 if every check passed; a failing check is not an error status.
//
// # Safety
// Non-null pointers must be valid; `weights` NUL-terminated if given.
enum IrsStatus irs_check(const struct IrsCheckOptions *opts,
                         const char *weights,
                         size_t workers,
                         int *passed,
                         struct IrsReport **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IRSATSIM_H */
