// Pulse envelope evaluation and the static checks that a schedule must
// pass before it is worth simulating: the deshelving-pair area conditions
// and the wavevector/frequency algebra of the echo direction.
#pragma once

#include <array>
#include <optional>

#include "lockecho/model.hpp"
#include "lockecho/units.hpp"

namespace lockecho {

// Peak Rabi frequency (rad/us) that realizes the pulse area.
// square: Omega0 = area / (2 * duration)
// sech:   Omega0 = area * beta / (2 * pi), beta = 1 / duration
double area_to_amplitude(const Pulse& p);

// Instantaneous Rabi frequency Omega(t) in rad/us. Square pulses are
// Omega0 inside [t0 - dur/2, t0 + dur/2]; sech pulses are
// Omega0 * sech(beta (t - t0)) truncated to zero beyond |t - t0| > 8/beta.
double rabi_envelope(const Pulse& p, double t_us);

// Deshelving-pair check: the pair stores and retrieves without a phase
// error when area(B1) + area(B2) = 4n*pi and area(B1) = (2m-1)*pi for
// integers n, m >= 1. Reports the smallest such integers.
struct LockingReport {
  double sum_area_rad = 0.0;
  double b1_area_rad = 0.0;
  std::optional<int> n_sum;
  std::optional<int> n_b1;
  bool valid = false;
  double tolerance_rad = 0.0;
};

inline constexpr double kDefaultLockingTolRad = kPi / 100.0;

LockingReport validate_locking(const PulseSequence& seq,
                               double tol_rad = kDefaultLockingTolRad);

// Symbolic frequency combination a*omega1 + b*omega2 with integer
// coefficients; channels enter as their unit labels.
struct FrequencyLabel {
  int omega1_coeff = 0;
  int omega2_coeff = 0;

  bool operator==(const FrequencyLabel&) const = default;
  std::string str() const;
};

// Echo direction and frequency from the data/write/read wavevectors:
// k_echo = -k_D + k_W + k_R, omega_echo = -omega_D + omega_W + omega_R.
struct PhaseMatchResult {
  std::array<double, 3> k_echo{0.0, 0.0, 0.0};
  FrequencyLabel omega_echo;
};

PhaseMatchResult check_phase_matching(const std::array<double, 3>& k_d,
                                      const std::array<double, 3>& k_w,
                                      const std::array<double, 3>& k_r,
                                      int channel_d = 1, int channel_w = 1,
                                      int channel_r = 1);

}  // namespace lockecho
