// Rotating-frame evolution of one atom's 3x3 density matrix under the
// two optical drives and relaxation. Nine coupled equations; populations
// carry feeding terms so the system is closed (trace-conserving):
//
//   d rho11 = +2 Im(conj(O1) rho13) + g31 rho33 + g21 rho22
//   d rho22 = +2 Im(conj(O2) rho23) + g32 rho33 - g21 rho22
//   d rho33 = -(field terms) - (g31 + g32) rho33
//   d rho13 = -(i d1 + gam13) rho13 - i O1 (rho11 - rho33) - i O2 rho12
//   d rho23 = -(i d2 + gam23) rho23 - i O2 (rho22 - rho33) - i O1 conj(rho12)
//   d rho12 = -(i (d1 - d2) + gam12) rho12 + i O1 conj(rho23) - i conj(O2) rho13
//
// with all rates in rad/us. Under this form a resonant drive of area
// 2*integral(Omega dt) = pi fully inverts a two-level atom.
//
// evolve() is a classical fixed-step 4th-order Runge-Kutta scheme. The
// internal step is h = min(dt_out, 1/(50 f_max)) with f_max the largest
// angular frequency in the problem, and substeps are split at pulse
// support edges so square-pulse areas integrate exactly. Sampled states
// are never renormalized; invariant drift is measured and reported.
#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include "lockecho/model.hpp"

namespace lockecho {

class IntegratorError : public std::runtime_error {
 public:
  explicit IntegratorError(const std::string& msg) : std::runtime_error(msg) {}
};

// Per-atom rotating-frame detunings (rad/us) plus the shared relaxation
// constants.
struct AtomContext {
  double delta1_rad_us = 0.0;
  double delta2_rad_us = 0.0;
  SystemParams params;
};

// Density matrix in Hermitian storage: three real populations and the
// three upper-triangle coherences.
struct PackedState {
  double n1 = 0.0, n2 = 0.0, n3 = 0.0;
  std::complex<double> c12{0.0, 0.0}, c13{0.0, 0.0}, c23{0.0, 0.0};
};

DensityMatrix to_matrix(const PackedState& s);
PackedState from_matrix(const DensityMatrix& rho);

// d(rho)/dt for the given instantaneous complex Rabi drives (rad/us).
// Treats rho as Hermitian (reads its upper triangle). The trace of the
// returned matrix is zero by construction.
DensityMatrix derivative(const DensityMatrix& rho, std::complex<double> omega1,
                         std::complex<double> omega2, const AtomContext& ctx);

struct EvolveOptions {
  // Multiplies the internal step (0.5 = half steps), for convergence checks.
  double step_scale = 1.0;
  // Replaces the sequence's initial populations with a full density matrix.
  std::optional<DensityMatrix> initial_state;
};

// Sampled states plus the measured worst-case trace drift. Hermiticity
// is exact by construction (only the upper triangle is integrated), so
// only the trace deviation carries information.
struct Trajectory {
  std::vector<double> t_us;
  std::vector<DensityMatrix> states;
  double max_trace_dev = 0.0;
};

Trajectory evolve(const PulseSequence& seq, const AtomContext& ctx,
                  double dt_out_us, const EvolveOptions& opts = {});

// Low-overhead variant: invokes sink(sample_index, t_us, state) at each
// output time instead of storing the trajectory.
void evolve_with_sink(
    const PulseSequence& seq, const AtomContext& ctx, double dt_out_us,
    const EvolveOptions& opts,
    const std::function<void(std::size_t, double, const PackedState&)>& sink);

// Number of output samples evolve() produces for this window/spacing.
std::size_t output_sample_count(const PulseSequence& seq, double dt_out_us);

}  // namespace lockecho
