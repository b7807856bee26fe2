// Core domain types of the three-level lambda medium: relaxation rates,
// driving pulses, pulse sequences, density-matrix states and the
// inhomogeneous-ensemble description. All types validate their invariants
// on demand and are treated as immutable after construction, so they are
// safe to share across worker threads.
#pragma once

#include <array>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lockecho {

// Thrown when a domain invariant is violated. The message names the
// offending field.
class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& msg) : std::runtime_error(msg) {}
};

// Relaxation constants of the lambda system, ordinary frequencies in kHz.
// gamma31/gamma32 are population decay |3> -> |1>, |3> -> |2>; gamma21 is
// spin population decay |2> -> |1>; deph13/deph23/deph12 are the phase
// decay rates of the corresponding coherences.
struct SystemParams {
  double gamma31_khz = 0.0;
  double gamma32_khz = 0.0;
  double gamma21_khz = 0.0;
  double deph13_khz = 0.0;
  double deph23_khz = 0.0;
  double deph12_khz = 0.0;

  void validate() const;

  // Optical population decay time 1/[2pi(gamma31+gamma32)] in us.
  // Throws ModelError("undefined T1") when both rates are zero.
  double t1_opt_us() const;
};

enum class PulseRole { D, W, R, B1, B2, Custom };
enum class PulseShape { Square, Sech };

const char* to_string(PulseRole role);
const char* to_string(PulseShape shape);
PulseRole pulse_role_from_string(const std::string& s);
PulseShape pulse_shape_from_string(const std::string& s);

// Sech envelopes are truncated where sech(beta*(t-t0)) < 7e-7, i.e. at
// |t - t0| = 8/beta, so every pulse has finite support for scheduling.
inline constexpr double kSechSupportScale = 8.0;

// One driving field. channel 1 couples |1>-|3>, channel 2 couples |2>-|3>.
// duration_us is the full width of a square pulse and the 1/beta time
// scale of a sech pulse. area_rad uses the convention
//   area = 2 * integral of Omega(t) dt,
// under which area = pi fully inverts a resonant two-level atom.
struct Pulse {
  PulseRole role = PulseRole::Custom;
  int channel = 1;
  PulseShape shape = PulseShape::Square;
  double t0_us = 0.0;
  double duration_us = 0.0;
  double area_rad = 0.0;
  double phase_rad = 0.0;
  std::array<double, 3> wavevector{0.0, 0.0, 1.0};

  void validate() const;

  // Support interval [start, end] outside which the envelope is zero.
  double support_start_us() const;
  double support_end_us() const;
};

// Time-ordered driving schedule plus the simulation window and the
// prepared initial populations (rho11, rho22, rho33).
struct PulseSequence {
  std::vector<Pulse> pulses;
  double t_start_us = 0.0;
  double t_end_us = 0.0;
  std::array<double, 3> init_pop{1.0, 0.0, 0.0};

  void validate() const;

  // First pulse with the given role, or nullptr.
  const Pulse* find_role(PulseRole role) const;
};

using DensityMatrix = Eigen::Matrix3cd;

// 3x3 density matrix over {|1>, |2>, |3>} with hygiene checks.
struct AtomState {
  DensityMatrix rho = DensityMatrix::Zero();

  static constexpr double kTol = 1e-9;

  void validate() const;

  double trace_deviation() const;
  double hermiticity_deviation() const;
};

// Gaussian inhomogeneous line: FWHM and the sampled detuning window, both
// in kHz. segments must be odd so delta = 0 sits on the grid. spin_fwhm
// is the optional |1>-|2> (two-photon) inhomogeneous width.
struct EnsembleSpec {
  double fwhm_khz = 0.0;
  double span_khz = 0.0;
  int segments = 401;
  double spin_fwhm_khz = 0.0;

  void validate() const;
};

}  // namespace lockecho
