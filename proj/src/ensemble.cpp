#include "lockecho/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "lockecho/units.hpp"

namespace lockecho {

namespace {

using Complex = std::complex<double>;

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(atom_index) for every atom on `workers` threads. The first
// exception is rethrown on the caller thread, annotated with its atom.
template <typename Fn>
void parallel_atoms(int n_atoms, int workers, Fn&& fn) {
  workers = std::min(workers, n_atoms);
  if (workers <= 1) {
    for (int i = 0; i < n_atoms; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  std::vector<int> error_atom(workers, -1);
  const int chunk = (n_atoms + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(n_atoms, lo + chunk);
    pool.emplace_back([&, w, lo, hi]() {
      for (int i = lo; i < hi; ++i) {
        try {
          fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
          error_atom[w] = i;
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (int w = 0; w < workers; ++w) {
    if (errors[w]) {
      try {
        std::rethrow_exception(errors[w]);
      } catch (const std::exception& e) {
        throw EnsembleError("grid atom " + std::to_string(error_atom[w]) +
                            ": " + e.what());
      }
    }
  }
}

// Pairwise (tree) sum of weight[i] * rows[i][k] over atoms [lo, hi), in
// grid-index order.
Complex reduce_column(const std::vector<std::vector<Complex>>& rows,
                      const std::vector<double>& weight, std::size_t k, int lo,
                      int hi) {
  if (hi - lo <= 8) {
    Complex acc{0.0, 0.0};
    for (int i = lo; i < hi; ++i) acc += weight[i] * rows[i][k];
    return acc;
  }
  const int mid = lo + (hi - lo) / 2;
  return reduce_column(rows, weight, k, lo, mid) +
         reduce_column(rows, weight, k, mid, hi);
}

}  // namespace

DetuningGrid sample_detunings(const EnsembleSpec& spec) {
  spec.validate();
  const int n = spec.segments;
  DetuningGrid grid;
  grid.delta1_rad_us.resize(n);
  grid.weight.resize(n);
  grid.spin_delta_rad_us.resize(n, 0.0);

  const double half_span = khz_to_rad_per_us(0.5 * spec.span_khz);
  const double step = 2.0 * half_span / (n - 1);
  const double sigma = khz_to_rad_per_us(gaussian_sigma_from_fwhm(spec.fwhm_khz));
  const double spin_scale =
      spec.spin_fwhm_khz > 0.0 ? spec.spin_fwhm_khz / spec.fwhm_khz : 0.0;

  const int center = (n - 1) / 2;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    // build symmetrically around the exact zero at the center index
    const double delta = step * (i - center);
    grid.delta1_rad_us[i] = delta;
    const double x = delta / sigma;
    grid.weight[i] = std::exp(-0.5 * x * x);
    sum += grid.weight[i];
    grid.spin_delta_rad_us[i] = spin_scale * delta;
  }
  for (double& w : grid.weight) w /= sum;
  return grid;
}

EchoTrace run_ensemble(const PulseSequence& seq, const EnsembleSpec& spec,
                       const SystemParams& params, double dt_out_us,
                       const RunOptions& opts) {
  seq.validate();
  params.validate();
  const DetuningGrid grid = sample_detunings(spec);
  const int n_atoms = static_cast<int>(grid.delta1_rad_us.size());
  const std::size_t n_out = output_sample_count(seq, dt_out_us);

  std::vector<std::vector<Complex>> rho13(n_atoms);
  std::vector<std::array<double, 3>> final_pop(n_atoms);
  std::vector<double> times(n_out, 0.0);

  EvolveOptions eopts;
  eopts.step_scale = opts.step_scale;

  parallel_atoms(n_atoms, resolve_workers(opts.workers), [&](int i) {
    AtomContext ctx;
    ctx.delta1_rad_us = grid.delta1_rad_us[i];
    ctx.delta2_rad_us = grid.delta1_rad_us[i] - grid.spin_delta_rad_us[i];
    ctx.params = params;
    auto& row = rho13[i];
    row.resize(n_out);
    evolve_with_sink(seq, ctx, dt_out_us, eopts,
                     [&](std::size_t k, double t, const PackedState& s) {
                       row[k] = s.c13;
                       if (k + 1 == n_out) final_pop[i] = {s.n1, s.n2, s.n3};
                       if (i == 0) times[k] = t;
                     });
  });

  EchoTrace trace;
  trace.t_us = std::move(times);
  trace.polarization.resize(n_out);
  trace.intensity.resize(n_out);
  for (std::size_t k = 0; k < n_out; ++k) {
    const Complex p = reduce_column(rho13, grid.weight, k, 0, n_atoms);
    trace.polarization[k] = p;
    trace.intensity[k] = std::norm(p);
  }
  for (int i = 0; i < n_atoms; ++i)
    for (int k = 0; k < 3; ++k)
      trace.final_pop[k] += grid.weight[i] * final_pop[i][k];
  trace.scenario_hash = opts.scenario_hash;
  trace.grid_spec = spec;
  return trace;
}

EnsembleStates run_ensemble_states(const PulseSequence& seq,
                                   const EnsembleSpec& spec,
                                   const SystemParams& params, double dt_out_us,
                                   double record_from_us,
                                   const RunOptions& opts) {
  seq.validate();
  params.validate();
  EnsembleStates out;
  out.grid = sample_detunings(spec);
  const int n_atoms = static_cast<int>(out.grid.delta1_rad_us.size());
  out.states.resize(n_atoms);

  EvolveOptions eopts;
  eopts.step_scale = opts.step_scale;

  parallel_atoms(n_atoms, resolve_workers(opts.workers), [&](int i) {
    AtomContext ctx;
    ctx.delta1_rad_us = out.grid.delta1_rad_us[i];
    ctx.delta2_rad_us = out.grid.delta1_rad_us[i] - out.grid.spin_delta_rad_us[i];
    ctx.params = params;
    auto& row = out.states[i];
    evolve_with_sink(seq, ctx, dt_out_us, eopts,
                     [&](std::size_t, double t, const PackedState& s) {
                       if (t < record_from_us - 1e-12) return;
                       row.push_back(to_matrix(s));
                       if (i == 0) out.t_us.push_back(t);
                     });
  });
  return out;
}

EchoMetrics echo_metrics(
    const EchoTrace& trace,
    const std::map<std::string, std::array<double, 2>>& windows) {
  if (trace.t_us.size() < 2) throw EnsembleError("trace is too short");
  const double t_lo = trace.t_us.front();
  const double t_hi = trace.t_us.back();

  // index range [first, last] of samples inside a window
  auto sample_range = [&](const std::array<double, 2>& w,
                          const std::string& name) -> std::pair<std::size_t, std::size_t> {
    if (w[0] >= w[1] || w[0] < t_lo - 1e-9 || w[1] > t_hi + 1e-9)
      throw EnsembleError("window '" + name + "' is empty or outside the trace");
    const auto first = std::lower_bound(trace.t_us.begin(), trace.t_us.end(),
                                        w[0] - 1e-12);
    const auto last = std::upper_bound(trace.t_us.begin(), trace.t_us.end(),
                                       w[1] + 1e-12);
    if (last - first < 2)
      throw EnsembleError("window '" + name + "' is empty (fewer than 2 samples)");
    return {static_cast<std::size_t>(first - trace.t_us.begin()),
            static_cast<std::size_t>(last - trace.t_us.begin()) - 1};
  };

  // windows must not overlap
  std::vector<std::pair<double, double>> spans;
  for (const auto& [name, w] : windows) spans.emplace_back(w[0], w[1]);
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second - 1e-12)
      throw EnsembleError("metric windows must be disjoint");
  }

  const auto echo_it = windows.find("echo");
  if (echo_it == windows.end())
    throw EnsembleError("windows must contain an 'echo' entry");

  EchoMetrics m;
  for (const auto& [name, w] : windows) {
    const auto [first, last] = sample_range(w, name);
    double energy = 0.0;
    for (std::size_t k = first; k < last; ++k) {
      const double dt = trace.t_us[k + 1] - trace.t_us[k];
      energy += 0.5 * dt * (trace.intensity[k] + trace.intensity[k + 1]);
    }
    m.window_energy[name] = energy;

    if (name == "echo") {
      std::size_t best = first;
      double best_amp = -1.0;
      for (std::size_t k = first; k <= last; ++k) {
        const double amp = std::abs(trace.polarization[k]);
        if (amp > best_amp) {
          best_amp = amp;
          best = k;
        }
      }
      m.peak_amp = best_amp;
      m.peak_intensity = best_amp * best_amp;
      m.peak_time_us = trace.t_us[best];
      // parabolic refinement on |P|^2 when the peak is interior
      if (best > first && best < last) {
        const double y0 = trace.intensity[best - 1];
        const double y1 = trace.intensity[best];
        const double y2 = trace.intensity[best + 1];
        const double denom = y0 - 2.0 * y1 + y2;
        if (std::abs(denom) > 1e-300) {
          const double shift = 0.5 * (y0 - y2) / denom;
          if (std::abs(shift) <= 1.0) {
            const double dt = trace.t_us[best + 1] - trace.t_us[best];
            m.peak_time_us = trace.t_us[best] + shift * dt;
          }
        }
      }
    }
  }

  const auto d_it = m.window_energy.find("D");
  if (d_it != m.window_energy.end() && d_it->second > 0.0)
    m.efficiency = m.window_energy["echo"] / d_it->second;
  return m;
}

}  // namespace lockecho
