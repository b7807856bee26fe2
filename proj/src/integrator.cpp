#include "lockecho/integrator.hpp"

#include <algorithm>
#include <cmath>

#include "lockecho/sequence.hpp"
#include "lockecho/units.hpp"

namespace lockecho {

namespace {

using Complex = std::complex<double>;

constexpr Complex kI{0.0, 1.0};

// Relaxation constants in rad/us.
struct Rates {
  double g31, g32, g21;        // population feeding/decay
  double gam13, gam23, gam12;  // coherence decay

  explicit Rates(const SystemParams& p)
      : g31(khz_to_rad_per_us(p.gamma31_khz)),
        g32(khz_to_rad_per_us(p.gamma32_khz)),
        g21(khz_to_rad_per_us(p.gamma21_khz)),
        gam13(khz_to_rad_per_us(p.deph13_khz)),
        gam23(khz_to_rad_per_us(p.deph23_khz)),
        gam12(khz_to_rad_per_us(p.deph12_khz)) {}
};

inline PackedState deriv(const PackedState& s, Complex o1, Complex o2,
                         double d1, double d2, const Rates& r) {
  PackedState d;
  // field-driven population fluxes; shared terms keep the trace of the
  // derivative exactly zero
  const double f13 = 2.0 * std::imag(std::conj(o1) * s.c13);
  const double f23 = 2.0 * std::imag(std::conj(o2) * s.c23);
  const double t31 = r.g31 * s.n3;
  const double t32 = r.g32 * s.n3;
  const double t21 = r.g21 * s.n2;
  d.n1 = f13 + t31 + t21;
  d.n2 = f23 + t32 - t21;
  d.n3 = -f13 - f23 - t31 - t32;
  d.c13 = -(kI * d1 + r.gam13) * s.c13 - kI * o1 * (s.n1 - s.n3) - kI * o2 * s.c12;
  d.c23 = -(kI * d2 + r.gam23) * s.c23 - kI * o2 * (s.n2 - s.n3) -
          kI * o1 * std::conj(s.c12);
  d.c12 = -(kI * (d1 - d2) + r.gam12) * s.c12 + kI * o1 * std::conj(s.c23) -
          kI * std::conj(o2) * s.c13;
  return d;
}

inline PackedState axpy(const PackedState& a, double h, const PackedState& b) {
  PackedState out;
  out.n1 = a.n1 + h * b.n1;
  out.n2 = a.n2 + h * b.n2;
  out.n3 = a.n3 + h * b.n3;
  out.c12 = a.c12 + h * b.c12;
  out.c13 = a.c13 + h * b.c13;
  out.c23 = a.c23 + h * b.c23;
  return out;
}

// Pulse data rearranged for fast envelope evaluation.
struct Drive {
  int channel;
  PulseShape shape;
  double t0, half_width, beta, omega0;
  Complex phase_factor;
};

struct DriveSet {
  std::vector<Drive> drives;

  explicit DriveSet(const PulseSequence& seq) {
    drives.reserve(seq.pulses.size());
    for (const Pulse& p : seq.pulses) {
      Drive d;
      d.channel = p.channel;
      d.shape = p.shape;
      d.t0 = p.t0_us;
      d.half_width = p.shape == PulseShape::Square
                         ? 0.5 * p.duration_us
                         : kSechSupportScale * p.duration_us;
      d.beta = 1.0 / p.duration_us;
      d.omega0 = area_to_amplitude(p);
      d.phase_factor = std::exp(kI * p.phase_rad);
      drives.push_back(d);
    }
  }

  // Complex Rabi drives on both channels at stage time t. Membership is
  // tested against t_ref (the integration segment's midpoint) so that a
  // Runge-Kutta stage landing exactly on a pulse edge sees the same set
  // of active pulses as the rest of its segment; segments never straddle
  // an edge, which keeps square-pulse areas exact.
  void sample(double t, double t_ref, Complex& o1, Complex& o2) const {
    o1 = Complex{0.0, 0.0};
    o2 = Complex{0.0, 0.0};
    for (const Drive& d : drives) {
      if (std::abs(t_ref - d.t0) > d.half_width) continue;
      double env = d.omega0;
      if (d.shape == PulseShape::Sech) env /= std::cosh(d.beta * (t - d.t0));
      (d.channel == 1 ? o1 : o2) += env * d.phase_factor;
    }
  }
};

inline void rk4_step(PackedState& s, double t, double h, const DriveSet& drives,
                     double d1, double d2, const Rates& r) {
  const double t_ref = t + 0.5 * h;
  Complex o1, o2;
  drives.sample(t, t_ref, o1, o2);
  const PackedState k1 = deriv(s, o1, o2, d1, d2, r);
  drives.sample(t + 0.5 * h, t_ref, o1, o2);
  const PackedState k2 = deriv(axpy(s, 0.5 * h, k1), o1, o2, d1, d2, r);
  const PackedState k3 = deriv(axpy(s, 0.5 * h, k2), o1, o2, d1, d2, r);
  drives.sample(t + h, t_ref, o1, o2);
  const PackedState k4 = deriv(axpy(s, h, k3), o1, o2, d1, d2, r);
  const double h6 = h / 6.0;
  s.n1 += h6 * (k1.n1 + 2.0 * (k2.n1 + k3.n1) + k4.n1);
  s.n2 += h6 * (k1.n2 + 2.0 * (k2.n2 + k3.n2) + k4.n2);
  s.n3 += h6 * (k1.n3 + 2.0 * (k2.n3 + k3.n3) + k4.n3);
  s.c12 += h6 * (k1.c12 + 2.0 * (k2.c12 + k3.c12) + k4.c12);
  s.c13 += h6 * (k1.c13 + 2.0 * (k2.c13 + k3.c13) + k4.c13);
  s.c23 += h6 * (k1.c23 + 2.0 * (k2.c23 + k3.c23) + k4.c23);
}

// Largest angular frequency present anywhere in the window.
double max_angular_frequency(const PulseSequence& seq, const AtomContext& ctx) {
  const Rates r(ctx.params);
  double f = std::max(std::abs(ctx.delta1_rad_us), std::abs(ctx.delta2_rad_us));
  for (const double rate : {r.g31, r.g32, r.g21, r.gam13, r.gam23, r.gam12})
    f = std::max(f, rate);
  for (const Pulse& p : seq.pulses) f = std::max(f, area_to_amplitude(p));
  return f;
}

bool state_finite(const PackedState& s) {
  return std::isfinite(s.n1) && std::isfinite(s.n2) && std::isfinite(s.n3) &&
         std::isfinite(s.c12.real()) && std::isfinite(s.c12.imag()) &&
         std::isfinite(s.c13.real()) && std::isfinite(s.c13.imag()) &&
         std::isfinite(s.c23.real()) && std::isfinite(s.c23.imag());
}

}  // namespace

DensityMatrix to_matrix(const PackedState& s) {
  DensityMatrix rho;
  rho(0, 0) = s.n1;
  rho(1, 1) = s.n2;
  rho(2, 2) = s.n3;
  rho(0, 1) = s.c12;
  rho(1, 0) = std::conj(s.c12);
  rho(0, 2) = s.c13;
  rho(2, 0) = std::conj(s.c13);
  rho(1, 2) = s.c23;
  rho(2, 1) = std::conj(s.c23);
  return rho;
}

PackedState from_matrix(const DensityMatrix& rho) {
  PackedState s;
  s.n1 = rho(0, 0).real();
  s.n2 = rho(1, 1).real();
  s.n3 = rho(2, 2).real();
  s.c12 = rho(0, 1);
  s.c13 = rho(0, 2);
  s.c23 = rho(1, 2);
  return s;
}

DensityMatrix derivative(const DensityMatrix& rho, std::complex<double> omega1,
                         std::complex<double> omega2, const AtomContext& ctx) {
  const Rates r(ctx.params);
  const PackedState d = deriv(from_matrix(rho), omega1, omega2,
                              ctx.delta1_rad_us, ctx.delta2_rad_us, r);
  return to_matrix(d);
}

std::size_t output_sample_count(const PulseSequence& seq, double dt_out_us) {
  const double span = seq.t_end_us - seq.t_start_us;
  return static_cast<std::size_t>(std::floor(span / dt_out_us + 1e-9)) + 1;
}

void evolve_with_sink(
    const PulseSequence& seq, const AtomContext& ctx, double dt_out_us,
    const EvolveOptions& opts,
    const std::function<void(std::size_t, double, const PackedState&)>& sink) {
  if (dt_out_us <= 0.0) throw IntegratorError("dt_out_us must be > 0");
  if (opts.step_scale <= 0.0) throw IntegratorError("step_scale must be > 0");

  const Rates rates(ctx.params);
  const DriveSet drives(seq);

  PackedState s;
  if (opts.initial_state.has_value()) {
    s = from_matrix(*opts.initial_state);
  } else {
    s.n1 = seq.init_pop[0];
    s.n2 = seq.init_pop[1];
    s.n3 = seq.init_pop[2];
  }

  const double f_max = max_angular_frequency(seq, ctx);
  double h_target = dt_out_us;
  if (f_max > 0.0) h_target = std::min(h_target, 1.0 / (50.0 * f_max));
  h_target *= opts.step_scale;

  // Pulse support edges; substeps are split here so that discontinuous
  // envelopes never straddle a Runge-Kutta step.
  std::vector<double> edges;
  for (const Pulse& p : seq.pulses) {
    edges.push_back(p.support_start_us());
    edges.push_back(p.support_end_us());
  }
  std::sort(edges.begin(), edges.end());

  const std::size_t n_out = output_sample_count(seq, dt_out_us);
  sink(0, seq.t_start_us, s);

  for (std::size_t k = 1; k < n_out; ++k) {
    const double t_a = seq.t_start_us + static_cast<double>(k - 1) * dt_out_us;
    const double t_b = seq.t_start_us + static_cast<double>(k) * dt_out_us;

    // segment [t_a, t_b] at pulse edges
    double seg_start = t_a;
    auto it = std::upper_bound(edges.begin(), edges.end(), t_a + 1e-12);
    while (seg_start < t_b - 1e-12) {
      while (it != edges.end() && *it <= seg_start + 1e-12) ++it;
      double seg_end = t_b;
      if (it != edges.end() && *it < t_b - 1e-12) {
        seg_end = *it;
        ++it;
      }
      const double seg_len = seg_end - seg_start;
      const int n_sub =
          std::max(1, static_cast<int>(std::ceil(seg_len / h_target - 1e-12)));
      const double h = seg_len / n_sub;
      for (int j = 0; j < n_sub; ++j)
        rk4_step(s, seg_start + j * h, h, drives, ctx.delta1_rad_us,
                 ctx.delta2_rad_us, rates);
      seg_start = seg_end;
    }

    if (!state_finite(s))
      throw IntegratorError("state became non-finite at t = " +
                            std::to_string(t_b) + " us");
    sink(k, t_b, s);
  }
}

Trajectory evolve(const PulseSequence& seq, const AtomContext& ctx,
                  double dt_out_us, const EvolveOptions& opts) {
  Trajectory traj;
  const std::size_t n_out = output_sample_count(seq, dt_out_us);
  traj.t_us.reserve(n_out);
  traj.states.reserve(n_out);
  evolve_with_sink(seq, ctx, dt_out_us, opts,
                   [&](std::size_t, double t, const PackedState& s) {
                     traj.t_us.push_back(t);
                     traj.states.push_back(to_matrix(s));
                     const double trace_dev =
                         std::abs(s.n1 + s.n2 + s.n3 - 1.0);
                     traj.max_trace_dev = std::max(traj.max_trace_dev, trace_dev);
                   });
  return traj;
}

}  // namespace lockecho
