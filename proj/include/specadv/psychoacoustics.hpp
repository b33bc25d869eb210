#pragma once

#include "specadv/autodiff.hpp"
#include "specadv/stft.hpp"

namespace specadv {

// Per-utterance hearing threshold, dB SPL on the F x T grid, with the SPL
// calibration needed to compare against peak-relative perturbation levels.
struct HearingThreshold {
    Plane h;                   // F x T, dB SPL
    double spl_offset = 96.0;  // digital full scale (amplitude 1.0) in dB SPL
    double peak_spl = 0.0;     // SPL of the utterance's peak magnitude bin
};

struct GateMask {
    Plane phi_star;  // dB headroom, >= 0
    Plane phi_hat;   // in [0, 1]
};

// Absolute threshold in quiet, dB SPL. f_hz must lie in [20, f_max].
double threshold_in_quiet(double f_hz, double f_max = 20000.0);

// MPEG-1 psychoacoustic model 1 global masking threshold, evaluated per
// frame: normalized PSD, tonal/non-tonal masker pick, decimation, two-slope
// spreading, power-sum, quiet floor; partition-scale result mapped to rows.
HearingThreshold hearing_threshold(const ComplexSpectrogram& Y_user);

// D_{q,n} = 20 log10(|delta| / max|Y_user|), floored at -120 dB.
Plane spectral_difference(const Eigen::ArrayXXcd& delta, const Eigen::ArrayXXcd& Y_user);

// phi = (H - peak_spl) - D; phi_star = max(phi + lambda, 0); phi_hat is the
// min-max normalization of phi_star over the whole grid (constant grids map
// to all-ones when positive, all-zeros otherwise).
GateMask gate(const HearingThreshold& H, const Plane& D, double lambda_db);

constexpr double kSpectralFloorDb = -120.0;

}  // namespace specadv
