#ifndef RYDBERG_H
#define RYDBERG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RydbergStatus {
  RYDBERG_STATUS_OK = 0,
  RYDBERG_STATUS_NULL_POINTER = 1,
  RYDBERG_STATUS_INVALID_ARGUMENT = 2,
  RYDBERG_STATUS_CONFIG = 3,
  RYDBERG_STATUS_MODEL = 4,
  RYDBERG_STATUS_RESPONSE = 5,
  RYDBERG_STATUS_ESTIMATOR = 6,
  RYDBERG_STATUS_CRLB = 7,
  RYDBERG_STATUS_IO = 8,
  RYDBERG_STATUS_PANIC = 9,
} RydbergStatus;

/**
 * Detection scheme of a campaign cell.
 */
typedef enum RydbergScheme {
  RYDBERG_SCHEME_IDD = 0,
  RYDBERG_SCHEME_ISD = 1,
  RYDBERG_SCHEME_UE = 2,
  RYDBERG_SCHEME_ME = 3,
  RYDBERG_SCHEME_POLY_FIT = 4,
} RydbergScheme;

/**
 * Opaque campaign result.
 */
typedef struct RydbergCampaign RydbergCampaign;

/**
 * Opaque experiment configuration.
 */
typedef struct RydbergConfig RydbergConfig;

/**
 * Opaque response surface G(x, f).
 */
typedef struct RydbergSurface RydbergSurface;

/**
 * One campaign cell. Variances are in MHz^2.
 */
typedef struct RydbergCell {
  enum RydbergScheme scheme;
  double x;
  double sigma0;
  size_t trials;
  size_t failures;
  size_t nonconverged;
  bool valid;
  double mse;
  double bias;
  double crlb;
  double normalized_mse;
  double normalized_crlb;
  uint64_t hash;
} RydbergCell;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *rydberg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rydberg_version(void);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum RydbergStatus rydberg_config_default(struct RydbergConfig **out);

/**
 * Parses and validates a TOML configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum RydbergStatus rydberg_config_from_toml(const char *text, struct RydbergConfig **out);

/**
 * # Safety
 * `cfg` must come from this library or be NULL, and not be used afterwards.
 */
void rydberg_config_free(struct RydbergConfig *cfg);

/**
 * Builds the response surface of the configured system and grid.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be valid for writes.
 */
enum RydbergStatus rydberg_surface_build(const struct RydbergConfig *cfg,
                                         struct RydbergSurface **out);

/**
 * Loads `surface.csv` and `surface.meta` from directory `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum RydbergStatus rydberg_surface_load(const char *dir, struct RydbergSurface **out);

/**
 * Writes `surface.csv` and `surface.meta` into directory `dir`.
 *
 * # Safety
 * `surface` must be a live handle; `dir` a NUL-terminated string.
 */
enum RydbergStatus rydberg_surface_save(const struct RydbergSurface *surface, const char *dir);

/**
 * G(x, f) with x = Omega_RF/2pi and f the probe detuning, both in MHz.
 *
 * # Safety
 * `surface` must be a live handle; `out` must be valid for writes.
 */
enum RydbergStatus rydberg_surface_eval(const struct RydbergSurface *surface,
                                        double x,
                                        double f,
                                        double *out);

/**
 * # Safety
 * `surface` must come from this library or be NULL, and not be used
 * afterwards.
 */
void rydberg_surface_free(struct RydbergSurface *surface);

/**
 * Direct-detection estimate of x from `n` readouts on the resonant
 * intensity curve, searching the monotone branch `[lo, hi]`.
 *
 * # Safety
 * `z` must point to `n` doubles; `surface` must be a live handle; `out`
 * must be valid for writes.
 */
enum RydbergStatus rydberg_estimate_idd(const struct RydbergSurface *surface,
                                        const double *z,
                                        size_t n,
                                        double lo,
                                        double hi,
                                        double *out);

/**
 * Direct-detection bound sigma0^2 / (n F_I'(x)^2) in MHz^2.
 *
 * # Safety
 * `surface` must be a live handle; `out` must be valid for writes.
 */
enum RydbergStatus rydberg_crlb_idd(const struct RydbergSurface *surface,
                                    double x,
                                    size_t n,
                                    double sigma0,
                                    double *out);

/**
 * Slope ratios r0 (splitting slope taken at `x_ref`) and r[x]; kappa
 * comes from the configured system.
 *
 * # Safety
 * Handles must be live; `r0` and `r_x` must be valid for writes.
 */
enum RydbergStatus rydberg_ratios(const struct RydbergConfig *cfg,
                                  const struct RydbergSurface *surface,
                                  double x,
                                  double x_ref,
                                  double *r0,
                                  double *r_x);

/**
 * Runs the configured campaign. `surface` may be NULL when no scheme needs
 * it.
 *
 * # Safety
 * `cfg` must be a live handle, `surface` live or NULL, `out` valid for
 * writes.
 */
enum RydbergStatus rydberg_campaign_run(const struct RydbergConfig *cfg,
                                        const struct RydbergSurface *surface,
                                        struct RydbergCampaign **out);

/**
 * Number of cells; 0 for NULL.
 *
 * # Safety
 * `campaign` must be a live handle or NULL.
 */
size_t rydberg_campaign_len(const struct RydbergCampaign *campaign);

/**
 * Copies cell `index` into `out`.
 *
 * # Safety
 * `campaign` must be a live handle; `out` must be valid for writes.
 */
enum RydbergStatus rydberg_campaign_cell(const struct RydbergCampaign *campaign,
                                         size_t index,
                                         struct RydbergCell *out);

/**
 * Writes `campaign.csv`, `config.echo` and `seeds.txt` into `dir`.
 *
 * # Safety
 * Handles must be live; `dir` a NUL-terminated string.
 */
enum RydbergStatus rydberg_campaign_write(const struct RydbergCampaign *campaign,
                                          const struct RydbergConfig *cfg,
                                          const char *dir);

/**
 * # Safety
 * `campaign` must come from this library or be NULL, and not be used
 * afterwards.
 */
void rydberg_campaign_free(struct RydbergCampaign *campaign);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RYDBERG_H */
