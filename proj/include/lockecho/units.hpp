// Unit conventions: user-facing rates and frequencies are ordinary
// frequencies in kHz, times are in microseconds. Internal dynamics run in
// angular frequency (rad/us). Conversion happens once, at ingestion.
#pragma once

#include <cmath>

namespace lockecho {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// sqrt(8 ln 2): ratio between a Gaussian FWHM and its sigma
inline constexpr double kFwhmPerSigma = 2.3548200450309493;

// 1 kHz = 1e-3 cycles/us
inline constexpr double khz_to_rad_per_us(double f_khz) {
  return kTwoPi * 1e-3 * f_khz;
}

inline constexpr double rad_per_us_to_khz(double w_rad_us) {
  return w_rad_us / (kTwoPi * 1e-3);
}

inline constexpr double gaussian_sigma_from_fwhm(double fwhm) {
  return fwhm / kFwhmPerSigma;
}

}  // namespace lockecho
