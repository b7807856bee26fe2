// Inhomogeneous ensemble: Gaussian detuning grid construction, parallel
// per-atom evolution, and the macroscopic readout P(t) = sum_i w_i rho13_i(t).
//
// Atoms are statically partitioned across worker threads; the reduction
// runs afterwards in fixed grid-index order with pairwise (tree)
// summation, so the output is bit-identical for any worker count.
#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lockecho/integrator.hpp"
#include "lockecho/model.hpp"

namespace lockecho {

class EnsembleError : public std::runtime_error {
 public:
  explicit EnsembleError(const std::string& msg) : std::runtime_error(msg) {}
};

// Uniform detuning grid over [-span/2, +span/2] with normalized Gaussian
// weights. spin_delta holds the per-atom |1>-|2> (two-photon) detuning,
// correlated 1:1 with the optical detuning; all zeros when the spin
// width is off. Channel-2 detunings follow as delta2 = delta1 - spin_delta
// (both optical transitions share the shifted upper level).
struct DetuningGrid {
  std::vector<double> delta1_rad_us;
  std::vector<double> weight;
  std::vector<double> spin_delta_rad_us;
};

DetuningGrid sample_detunings(const EnsembleSpec& spec);

struct EchoTrace {
  std::vector<double> t_us;
  std::vector<std::complex<double>> polarization;  // P(t)
  std::vector<double> intensity;                   // |P(t)|^2
  std::array<double, 3> final_pop{0.0, 0.0, 0.0};  // weighted, at t_end
  std::uint64_t scenario_hash = 0;
  EnsembleSpec grid_spec;
};

struct RunOptions {
  int workers = 0;  // 0 = hardware concurrency
  double step_scale = 1.0;
  std::uint64_t scenario_hash = 0;
};

EchoTrace run_ensemble(const PulseSequence& seq, const EnsembleSpec& spec,
                       const SystemParams& params, double dt_out_us,
                       const RunOptions& opts = {});

// Per-atom state probe for grating diagnostics. Samples with
// t < record_from_us are skipped to bound memory; states[i][k] is atom i
// at recorded time t_us[k].
struct EnsembleStates {
  std::vector<double> t_us;
  DetuningGrid grid;
  std::vector<std::vector<DensityMatrix>> states;
};

EnsembleStates run_ensemble_states(const PulseSequence& seq,
                                   const EnsembleSpec& spec,
                                   const SystemParams& params, double dt_out_us,
                                   double record_from_us,
                                   const RunOptions& opts = {});

// Peak and windowed-energy summary of a trace. windows maps a label to a
// closed time interval; the "echo" window is required, and when a "D"
// window is present the efficiency is energy(echo) / energy(D).
struct EchoMetrics {
  double peak_time_us = 0.0;
  double peak_amp = 0.0;
  double peak_intensity = 0.0;
  std::map<std::string, double> window_energy;
  double efficiency = 0.0;
};

EchoMetrics echo_metrics(
    const EchoTrace& trace,
    const std::map<std::string, std::array<double, 2>>& windows);

}  // namespace lockecho
