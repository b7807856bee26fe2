// Closed-form models and fitting: the remnant-leakage decay law, the
// delta-pulse echo oracle used to cross-check ensemble runs, the
// population-transfer and Beer's-law curves, and the effective-atom
// noise-budget arithmetic.
#pragma once

#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "lockecho/model.hpp"

namespace lockecho {

class AnalysisError : public std::runtime_error {
 public:
  explicit AnalysisError(const std::string& msg) : std::runtime_error(msg) {}
};

// Normalized echo intensity {exp[-(t - delta_t)/tau] + n}^2 / (n + 1)^2.
// Defined for t >= delta_t; equals 1 exactly at t = delta_t. The
// asymptote n^2/(n+1)^2 grows monotonically with n, so fitted n orders
// media by how complete the population transfer was.
double eval_decay_model(double t, double delta_t, double tau, double n);

enum class TimeUnit { Microseconds, Seconds };

const char* to_string(TimeUnit unit);

struct DecayFit {
  double delta_t = 0.0;  // pinned to the first sample's t
  double tau = 0.0;
  double n = 0.0;
  double rms_residual = 0.0;
  TimeUnit unit = TimeUnit::Microseconds;
};

// Least-squares fit of (tau, n) with delta_t fixed to t.front(): coarse
// log-spaced grid search followed by damped Gauss-Newton refinement,
// converged when relative parameter updates drop below 1e-6.
DecayFit fit_decay(std::span<const double> t, std::span<const double> intensity,
                   TimeUnit unit);

// Remnant excited-state population after a resonant square pulse of the
// given area applied to rho33 = 1 with all decay off. Equals cos^2(area/2);
// computed by actually evolving the pulse, not from the formula.
std::vector<std::pair<double, double>> population_transfer_curve(
    std::span<const double> area_rad);

// Beer's law absorbed fraction 1 - exp(-d).
double beer_absorption(double optical_depth);

// Effective-atom chain: N = n0 * V, eta = pulse_dt / T1, N_e = eta * N,
// N_f = alpha * N_e.
struct NoiseBudget {
  double n0_per_cm3 = 0.0;
  double volume_cm3 = 0.0;
  double n_atoms = 0.0;
  double pulse_dt_ns = 0.0;
  double t1_us = 0.0;
  double eta = 0.0;
  double n_e = 0.0;
  double alpha = 0.0;
  double n_f = 0.0;
};

NoiseBudget noise_budget(double n0_per_cm3, double volume_cm3,
                         double pulse_dt_ns, double t1_us, double alpha);

// Instantaneous-pulse prediction for a recognized template (D/R two-pulse
// or D/W/R three-pulse, all channel 1, zero decay): echo time, a relative
// amplitude factor from rotation algebra, and the echo envelope FWHM set
// by the inhomogeneous width. Amplitudes are comparable only across
// sequences of the same template.
struct EchoPrediction {
  double echo_time_us = 0.0;
  double relative_amplitude = 0.0;
  double envelope_fwhm_us = 0.0;
  bool two_pulse = false;
};

EchoPrediction delta_pulse_oracle(const PulseSequence& seq,
                                  const EnsembleSpec& spec);

// Two-column CSV (t, intensity) with a unit header row "t_us,..." or
// "t_s,...".
struct DecayData {
  std::vector<double> t;
  std::vector<double> intensity;
  TimeUnit unit = TimeUnit::Microseconds;
};

DecayData read_decay_csv(std::istream& in);

}  // namespace lockecho
