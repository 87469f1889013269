#ifndef NFLOC_H
#define NFLOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum NflStatus {
  NFL_STATUS_OK = 0,
  NFL_STATUS_NULL_POINTER = 1,
  NFL_STATUS_INVALID_ARGUMENT = 2,
  NFL_STATUS_INDEX_OUT_OF_RANGE = 3,
  NFL_STATUS_DIMENSION_MISMATCH = 4,
  NFL_STATUS_BUFFER_TOO_SMALL = 5,
  NFL_STATUS_DEGENERATE_CANDIDATE = 6,
  NFL_STATUS_ESTIMATION_FAILED = 7,
  NFL_STATUS_IO = 8,
  NFL_STATUS_PANIC = 9,
} NflStatus;

// Weight constraint. Passed as `int32_t`.
typedef enum NflRegime {
  NFL_REGIME_LORENTZIAN = 0,
  NFL_REGIME_PHASE_ONLY = 1,
} NflRegime;

// Receiver architecture for [`nfl_estimate_once`]. Passed as `int32_t`.
typedef enum NflArchitecture {
  NFL_ARCHITECTURE_FULLY_DIGITAL = 0,
  NFL_ARCHITECTURE_DMA_HALF = 1,
  NFL_ARCHITECTURE_DMA_QUARTER = 2,
} NflArchitecture;

// Opaque microstrip layout.
typedef struct NflLayout NflLayout;

// Opaque DMA weight set.
typedef struct NflWeights NflWeights;

// Output of [`nfl_estimate_once`].
typedef struct NflEstimate {
  double d_m;
  double theta_rad;
  double error_m;
  uint64_t seed;
} NflEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *nfl_version(void);

// Message for the last failed call on this thread, or NULL. Valid until the
// next call into the library from the same thread.
const char *nfl_last_error(void);

// Free-space wavelength in meters.
double nfl_wavelength(double carrier_hz);

// Phase `2 pi distance / lambda` in radians, not wrapped.
double nfl_phase_delay(double distance_m, double carrier_hz);

// Uniform layout: `n_strips` strips of `per_strip` elements.
enum NflStatus nfl_layout_new(size_t n_strips,
                              size_t per_strip,
                              double element_spacing_m,
                              double strip_pitch_m,
                              struct NflLayout **out);

// Releases a layout. NULL is ignored.
void nfl_layout_free(struct NflLayout *layout);

// Total element count, 0 for NULL.
size_t nfl_layout_len(const struct NflLayout *layout);

// Distance from element `(strip, element)` to the source at polar `(d, theta)`.
enum NflStatus nfl_element_distance(const struct NflLayout *layout,
                                    size_t strip,
                                    size_t element,
                                    double d_m,
                                    double theta_rad,
                                    double *out);

// Fraunhofer distance `2 D^2 / lambda` of the layout's aperture.
enum NflStatus nfl_fraunhofer_distance(const struct NflLayout *layout,
                                       double carrier_hz,
                                       double *out);

// Phase-only weights focused on `(d, theta)` through strips with uniform
// attenuation `alpha` (Np/m) and wavenumber `beta` (rad/m).
enum NflStatus nfl_weights_tuned(const struct NflLayout *layout,
                                 double alpha,
                                 double beta,
                                 double d_m,
                                 double theta_rad,
                                 double carrier_hz,
                                 struct NflWeights **out);

// Independent uniform phases from `seed`. `regime_code` is an [`NflRegime`] value.
enum NflStatus nfl_weights_random(const struct NflLayout *layout,
                                  int32_t regime_code,
                                  uint64_t seed,
                                  struct NflWeights **out);

// New handle holding the Lorentzian projection of `weights`.
enum NflStatus nfl_weights_project_lorentzian(const struct NflWeights *weights,
                                              struct NflWeights **out);

// Releases a weight set. NULL is ignored.
void nfl_weights_free(struct NflWeights *weights);

// Element count, 0 for NULL.
size_t nfl_weights_len(const struct NflWeights *weights);

// Regime of the weight set as an [`NflRegime`] value, -1 for NULL.
int32_t nfl_weights_regime(const struct NflWeights *weights);

// Copies the phases, strip-major, into `buf[0..len)`.
enum NflStatus nfl_weights_phases(const struct NflWeights *weights, double *buf, size_t len);

// Copies the complex coefficients into separate real and imaginary buffers.
enum NflStatus nfl_weights_coefficients(const struct NflWeights *weights,
                                        double *re,
                                        double *im,
                                        size_t len);

// Hash of the phase field, 0 for NULL.
uint64_t nfl_weights_checksum(const struct NflWeights *weights);

// One estimate with the default scenario and master `seed`, identical to
// trial `trial` of the RMSE sweep at `snr_db`. DMA architectures return the
// estimate after the last tuning round. `workers` of 0 uses every core.
enum NflStatus nfl_estimate_once(int32_t architecture_code,
                                 double snr_db,
                                 uint64_t seed,
                                 size_t trial,
                                 size_t workers,
                                 struct NflEstimate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NFLOC_H */
