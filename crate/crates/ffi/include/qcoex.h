#ifndef QCOEX_H
#define QCOEX_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QcoexStatus {
  QCOEX_STATUS_OK = 0,
  QCOEX_STATUS_NULL_POINTER = 1,
  QCOEX_STATUS_CONFIG = 2,
  QCOEX_STATUS_DOMAIN = 3,
  QCOEX_STATUS_INFEASIBLE = 4,
  QCOEX_STATUS_NON_CONVERGENCE = 5,
  QCOEX_STATUS_INTERNAL = 99,
} QcoexStatus;

typedef enum QcoexDirection {
  QCOEX_DIRECTION_CO_PROPAGATING = 0,
  QCOEX_DIRECTION_COUNTER_PROPAGATING = 1,
} QcoexDirection;

/**
 * Fiber span with a wavelength-dependent attenuation curve.
 */
typedef struct QcoexLink QcoexLink;

/**
 * Raman gain table.
 */
typedef struct QcoexModel QcoexModel;

typedef struct QcoexSource {
  double rep_rate_hz;
  /**
   * Mean pairs per pulse in the channel pair.
   */
  double mu;
} QcoexSource;

typedef struct QcoexArm {
  /**
   * Source-to-detector loss.
   */
  double loss_db;
  /**
   * Raman noise reaching the detector, photons/s.
   */
  double noise_cps;
  double efficiency;
  double dark_rate_cps;
} QcoexArm;

typedef struct QcoexRates {
  double singles_signal;
  double singles_idler;
  double true_coincidences;
  double accidentals;
  double multipair;
  double ccr;
  double car;
  double visibility;
} QcoexRates;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next qcoex call on the same thread.
 */
const char *qcoex_last_error_message(void);

/**
 * Model with the shipped, calibrated gain table.
 */
struct QcoexModel *qcoex_model_new_default(void);

/**
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum QcoexStatus qcoex_model_from_table_json(const char *json, struct QcoexModel **out);

/**
 * # Safety
 * `model` must come from a qcoex constructor and not be used afterwards.
 */
void qcoex_model_free(struct QcoexModel *model);

/**
 * # Safety
 * Pointers must be valid.
 */
enum QcoexStatus qcoex_gain_density(const struct QcoexModel *model, double offset_thz, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum QcoexStatus qcoex_phonon_occupation(double offset_thz, double temperature_k, double *out);

/**
 * Noise photons/s at the end of `link` in a `bandwidth_ghz` filter at
 * `quantum_nm`, from one classical channel.
 *
 * # Safety
 * Pointers must be valid.
 */
enum QcoexStatus qcoex_sprs_rate(const struct QcoexModel *model,
                                 const struct QcoexLink *link,
                                 double classical_nm,
                                 double launch_dbm,
                                 double quantum_nm,
                                 double bandwidth_ghz,
                                 enum QcoexDirection direction,
                                 double *out);

/**
 * Link from `n` attenuation knots (nm, dB/km), linearly interpolated.
 *
 * # Safety
 * `knots_nm` and `knots_db_per_km` must each point to `n` doubles.
 */
enum QcoexStatus qcoex_link_new(double length_km,
                                const double *knots_nm,
                                const double *knots_db_per_km,
                                size_t n,
                                double excess_loss_db,
                                struct QcoexLink **out);

/**
 * The 47.9 km installed link of the reference deployment.
 */
struct QcoexLink *qcoex_link_new_installed(void);

/**
 * # Safety
 * `link` must come from a qcoex constructor and not be used afterwards.
 */
void qcoex_link_free(struct QcoexLink *link);

/**
 * # Safety
 * Pointers must be valid.
 */
enum QcoexStatus qcoex_link_loss_db(const struct QcoexLink *link,
                                    double wavelength_nm,
                                    double *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum QcoexStatus qcoex_coincidence_rates(const struct QcoexSource *source,
                                         const struct QcoexArm *signal,
                                         const struct QcoexArm *idler,
                                         double window_ps,
                                         struct QcoexRates *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum QcoexStatus qcoex_filter_window_scaling(double bw_from_ghz,
                                             double bw_to_ghz,
                                             double win_from_ps,
                                             double win_to_ps,
                                             double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum QcoexStatus qcoex_conjugate_wavelength(double signal_nm, double pump_nm, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QCOEX_H */
