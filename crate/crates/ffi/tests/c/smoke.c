#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include "nfloc.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            const char *msg = nfl_last_error();                       \
            fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,    \
                    msg ? msg : "no message");                        \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    const double fc = 28e9;
    const double lambda = nfl_wavelength(fc);
    NflLayout *layout = NULL;
    CHECK(nfl_layout_new(5, 48, lambda / 2, lambda / 2, &layout) == NFL_STATUS_OK);
    CHECK(nfl_layout_len(layout) == 240);

    double dist = 0.0;
    CHECK(nfl_element_distance(layout, 0, 0, 6.0, 1.0, &dist) == NFL_STATUS_OK);
    CHECK(fabs(dist - 6.0) < 0.1);
    CHECK(nfl_element_distance(layout, 5, 0, 6.0, 1.0, &dist) == NFL_STATUS_INDEX_OUT_OF_RANGE);
    CHECK(nfl_last_error() != NULL);

    NflWeights *tuned = NULL, *proj = NULL;
    CHECK(nfl_weights_tuned(layout, 0.5, 2 * M_PI / lambda, 6.0, M_PI / 3, fc, &tuned) == NFL_STATUS_OK);
    CHECK(nfl_weights_regime(tuned) == NFL_REGIME_PHASE_ONLY);
    CHECK(nfl_weights_project_lorentzian(tuned, &proj) == NFL_STATUS_OK);
    CHECK(nfl_weights_regime(proj) == NFL_REGIME_LORENTZIAN);

    size_t n = nfl_weights_len(proj);
    double *re = malloc(n * sizeof *re), *im = malloc(n * sizeof *im);
    double *ph = malloc(n * sizeof *ph);
    CHECK(nfl_weights_phases(proj, ph, n - 1) == NFL_STATUS_BUFFER_TOO_SMALL);
    CHECK(nfl_weights_phases(proj, ph, n) == NFL_STATUS_OK);
    CHECK(nfl_weights_coefficients(proj, re, im, n) == NFL_STATUS_OK);
    for (size_t i = 0; i < n; i++) {
        /* Lorentzian coefficients lie on the circle |q - j/2| = 1/2 */
        double r = hypot(re[i], im[i] - 0.5);
        CHECK(fabs(r - 0.5) < 1e-12);
        CHECK(fabs(re[i] - 0.5 * cos(ph[i])) < 1e-12);
    }
    free(re);
    free(im);
    free(ph);

    NflEstimate est;
    CHECK(nfl_estimate_once(NFL_ARCHITECTURE_FULLY_DIGITAL, 20.0, 3, 0, 1, &est) == NFL_STATUS_OK);
    CHECK(est.error_m < 0.5);
    CHECK(nfl_estimate_once(7, 20.0, 3, 0, 1, &est) == NFL_STATUS_INVALID_ARGUMENT);

    nfl_weights_free(proj);
    nfl_weights_free(tuned);
    nfl_layout_free(layout);
    nfl_layout_free(NULL);
    printf("ok %s\n", nfl_version());
    return 0;
}
