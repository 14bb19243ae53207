/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef PHENOKIT_H
#define PHENOKIT_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result code of every fallible call.
 */
typedef enum PkStatus {
  PK_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  PK_STATUS_NULL_POINTER = 1,
  /*
   A string argument was not valid UTF-8.
   */
  PK_STATUS_INVALID_UTF8 = 2,
  /*
   An input record or value failed validation.
   */
  PK_STATUS_INVALID_INPUT = 3,
  /*
   Not enough data for the requested analysis.
   */
  PK_STATUS_INSUFFICIENT_DATA = 4,
  /*
   The input is degenerate for the analysis (e.g. zero variance).
   */
  PK_STATUS_DEGENERATE = 5,
  /*
   The schedule is malformed or empty.
   */
  PK_STATUS_INVALID_SCHEDULE = 6,
  /*
   An unexpected internal failure.
   */
  PK_STATUS_INTERNAL = 7,
} PkStatus;

/*
 Parsed, validated scan log.
 */
typedef struct PkDataset PkDataset;

/*
 Rate-space battery model: discharge %/h = intercept + slope * scans/h.
 */
typedef struct PkBatteryFit {
  double intercept;
  double slope;
  uint32_t iterations;
  bool converged;
} PkBatteryFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failure on this thread, or null. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *pk_last_error(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void pk_string_free(char *s);

/*
 Parses a JSONL scan log. `salt` may be null for unsalted hashing. With
 `skip_invalid` false any bad line fails the call and the message names
 the line; otherwise bad lines are counted and dropped.

 # Safety
 `jsonl` must be a NUL-terminated string; `out` must be writable.
 */
enum PkStatus pk_dataset_parse(const char *jsonl,
                               const char *salt,
                               bool filter_phones,
                               bool skip_invalid,
                               struct PkDataset **out);

/*
 Releases a dataset. Null is ignored.

 # Safety
 `ds` must come from [`pk_dataset_parse`] and not have been freed.
 */
void pk_dataset_free(struct PkDataset *ds);

/*
 Number of accepted events.

 # Safety
 `ds` must be a live dataset; `out` must be writable.
 */
enum PkStatus pk_dataset_event_count(const struct PkDataset *ds, uintptr_t *out);

/*
 Number of lines dropped as invalid.

 # Safety
 `ds` must be a live dataset; `out` must be writable.
 */
enum PkStatus pk_dataset_rejected_count(const struct PkDataset *ds, uintptr_t *out);

/*
 Scheduled scans per participant. A null schedule selects the default
 four-week design.

 # Safety
 `schedule_json` must be null or NUL-terminated; `out` must be writable.
 */
enum PkStatus pk_scheduled_count(const char *schedule_json, uint64_t *out);

/*
 Full feature report as JSON. A null schedule selects the default design;
 `tz_offset_seconds` is east of UTC.

 # Safety
 `ds` must be a live dataset; `schedule_json` null or NUL-terminated;
 `out` writable. Free the result with [`pk_string_free`].
 */
enum PkStatus pk_dataset_report_json(const struct PkDataset *ds,
                                     const char *schedule_json,
                                     int32_t tz_offset_seconds,
                                     char **out);

/*
 Hex SHA-256 of salt followed by the 6-byte identifier. `salt` may be null.

 # Safety
 `mac` must point to `len` bytes; `salt` null or NUL-terminated; `out`
 writable. Free the result with [`pk_string_free`].
 */
enum PkStatus pk_hash_device_id(const uint8_t *mac, uintptr_t len, const char *salt, char **out);

/*
 True when the Bluetooth class-of-device marks a phone.
 */
bool pk_is_phone_device(uint32_t class_of_device);

/*
 Robust straight-line fit of discharge rate (%/h) on scan rate (scans/h).

 # Safety
 `scan_rates` and `discharge_rates` must each point to `n` doubles; `out`
 must be writable.
 */
enum PkStatus pk_fit_battery_model(const double *scan_rates,
                                   const double *discharge_rates,
                                   uintptr_t n,
                                   struct PkBatteryFit *out);

/*
 Hours from full to empty at `scan_rate` scans/h.

 # Safety
 `fit` must be readable; `out` writable.
 */
enum PkStatus pk_predict_battery_life(const struct PkBatteryFit *fit,
                                      double scan_rate,
                                      double *out);

/*
 Normalized Lomb-Scargle power at `nf` frequencies (cycles/hour) for `n`
 samples at `times_h` hours. Writes `nf` values to `power`.

 # Safety
 Array arguments must point to the stated number of doubles.
 */
enum PkStatus pk_lomb_scargle(const double *times_h,
                              const double *values,
                              uintptr_t n,
                              const double *freqs,
                              uintptr_t nf,
                              double *power);

/*
 Cronbach's alpha over a row-major `n_subjects` x `n_conditions` matrix,
 with a 95% Feldt interval. `ci_lower` and `ci_upper` may be null.

 # Safety
 `data` must point to `n_subjects * n_conditions` doubles; `alpha` must be
 writable.
 */
enum PkStatus pk_cronbach_alpha(const double *data,
                                uintptr_t n_subjects,
                                uintptr_t n_conditions,
                                double *alpha,
                                double *ci_lower,
                                double *ci_upper);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* PHENOKIT_H */
