#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "lockecho/integrator.hpp"
#include "lockecho/sequence.hpp"
#include "lockecho/units.hpp"

using namespace lockecho;
using Complex = std::complex<double>;

namespace {

constexpr Complex kI{0.0, 1.0};

Pulse square(PulseRole role, int channel, double t0, double dur,
             double area_pi_units, double phase = 0.0) {
  Pulse p;
  p.role = role;
  p.channel = channel;
  p.shape = PulseShape::Square;
  p.t0_us = t0;
  p.duration_us = dur;
  p.area_rad = area_pi_units * kPi;
  p.phase_rad = phase;
  return p;
}

// Independent route for the equations of motion: build the rotating-frame
// Hamiltonian explicitly, take -i[H, rho], and add the relaxation matrix
// term by term. The implementation under test hand-codes the nine
// equations; any sign slip shows up against this.
DensityMatrix oracle_derivative(const DensityMatrix& rho, Complex o1, Complex o2,
                                const AtomContext& ctx) {
  DensityMatrix h = DensityMatrix::Zero();
  h(0, 0) = ctx.delta1_rad_us;
  h(1, 1) = ctx.delta2_rad_us;
  h(0, 2) = -o1;
  h(2, 0) = -std::conj(o1);
  h(1, 2) = -o2;
  h(2, 1) = -std::conj(o2);

  DensityMatrix d = -kI * (h * rho - rho * h);

  const double g31 = khz_to_rad_per_us(ctx.params.gamma31_khz);
  const double g32 = khz_to_rad_per_us(ctx.params.gamma32_khz);
  const double g21 = khz_to_rad_per_us(ctx.params.gamma21_khz);
  const double gam13 = khz_to_rad_per_us(ctx.params.deph13_khz);
  const double gam23 = khz_to_rad_per_us(ctx.params.deph23_khz);
  const double gam12 = khz_to_rad_per_us(ctx.params.deph12_khz);

  d(0, 0) += g31 * rho(2, 2).real() + g21 * rho(1, 1).real();
  d(1, 1) += g32 * rho(2, 2).real() - g21 * rho(1, 1).real();
  d(2, 2) -= (g31 + g32) * rho(2, 2).real();
  d(0, 2) -= gam13 * rho(0, 2);
  d(2, 0) -= gam13 * rho(2, 0);
  d(1, 2) -= gam23 * rho(1, 2);
  d(2, 1) -= gam23 * rho(2, 1);
  d(0, 1) -= gam12 * rho(0, 1);
  d(1, 0) -= gam12 * rho(1, 0);
  return d;
}

DensityMatrix random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  DensityMatrix a;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = Complex{dist(rng), dist(rng)};
  DensityMatrix rho = a.adjoint() * a;
  rho /= rho.trace();
  return rho;
}

PulseSequence bare_window(double t_start, double t_end,
                          std::array<double, 3> init = {1.0, 0.0, 0.0}) {
  PulseSequence seq;
  seq.t_start_us = t_start;
  seq.t_end_us = t_end;
  seq.init_pop = init;
  return seq;
}

}  // namespace

TEST_CASE("derivative: resonant drive from the ground state") {
  AtomContext ctx;
  DensityMatrix rho = DensityMatrix::Zero();
  rho(0, 0) = 1.0;
  const DensityMatrix d = derivative(rho, Complex{0.3, 0.0}, {}, ctx);
  CHECK(d(0, 2).real() == doctest::Approx(0.0));
  CHECK(d(0, 2).imag() == doctest::Approx(-0.3));
  CHECK(std::abs(d.trace()) < 1e-15);
}

TEST_CASE("derivative: free precession and decay of rho13") {
  AtomContext ctx;
  ctx.delta1_rad_us = 0.7;
  ctx.params.deph13_khz = 7.0;
  const double gam = khz_to_rad_per_us(7.0);
  const Complex c{0.4, 0.2};
  DensityMatrix rho = DensityMatrix::Zero();
  rho(0, 0) = 1.0;
  rho(0, 2) = c;
  rho(2, 0) = std::conj(c);
  const DensityMatrix d = derivative(rho, {}, {}, ctx);
  const Complex expected = -(kI * 0.7 + gam) * c;
  CHECK(d(0, 2).real() == doctest::Approx(expected.real()).epsilon(1e-12));
  CHECK(d(0, 2).imag() == doctest::Approx(expected.imag()).epsilon(1e-12));
}

TEST_CASE("derivative matches the commutator oracle on random states") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 50; ++trial) {
    AtomContext ctx;
    ctx.delta1_rad_us = dist(rng);
    ctx.delta2_rad_us = dist(rng);
    ctx.params.gamma31_khz = std::abs(dist(rng)) * 10.0;
    ctx.params.gamma32_khz = std::abs(dist(rng)) * 10.0;
    ctx.params.gamma21_khz = std::abs(dist(rng));
    ctx.params.deph13_khz = std::abs(dist(rng)) * 10.0;
    ctx.params.deph23_khz = std::abs(dist(rng)) * 10.0;
    ctx.params.deph12_khz = std::abs(dist(rng));
    const Complex o1{dist(rng), dist(rng)};
    const Complex o2{dist(rng), dist(rng)};
    const DensityMatrix rho = random_state(rng);

    const DensityMatrix got = derivative(rho, o1, o2, ctx);
    const DensityMatrix want = oracle_derivative(rho, o1, o2, ctx);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    // conservation and symmetry
    CHECK(std::abs(got.trace()) < 1e-12);
    CHECK((got - got.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pi pulse inverts, 2pi pulse restores") {
  AtomContext ctx;
  PulseSequence seq = bare_window(0.0, 2.0);
  seq.pulses = {square(PulseRole::D, 1, 1.0, 1.0, 1.0)};
  Trajectory traj = evolve(seq, ctx, 2.0);
  CHECK(traj.states.back()(2, 2).real() == doctest::Approx(1.0).epsilon(1e-6));

  seq.pulses[0].area_rad = 2.0 * kPi;
  traj = evolve(seq, ctx, 2.0);
  CHECK(traj.states.back()(2, 2).real() <= 1e-6);
}

TEST_CASE("free evolution matches the closed form") {
  AtomContext ctx;
  ctx.delta1_rad_us = khz_to_rad_per_us(100.0);  // 2 pi * 0.1 rad/us
  ctx.params.deph13_khz = 5.0;
  const double gam = khz_to_rad_per_us(5.0);

  DensityMatrix init = DensityMatrix::Zero();
  init(0, 0) = 0.5;
  init(2, 2) = 0.5;
  init(0, 2) = 0.5;
  init(2, 0) = 0.5;

  EvolveOptions opts;
  opts.initial_state = init;
  const PulseSequence seq = bare_window(0.0, 20.0);
  const Trajectory traj = evolve(seq, ctx, 0.5, opts);

  for (std::size_t k = 0; k < traj.t_us.size(); ++k) {
    const double t = traj.t_us[k];
    const Complex expected =
        0.5 * std::exp(-(kI * ctx.delta1_rad_us + gam) * t);
    CHECK(std::abs(traj.states[k](0, 2) - expected) < 1e-6);
  }
}

TEST_CASE("resonant Rabi oscillation rho33 = sin^2(Omega t)") {
  AtomContext ctx;
  PulseSequence seq = bare_window(0.0, 10.0);
  // constant Omega0 = 0.5 rad/us across the whole window
  Pulse p = square(PulseRole::Custom, 1, 5.0, 10.0, 0.0);
  p.area_rad = 2.0 * 0.5 * 10.0;
  seq.pulses = {p};
  const Trajectory traj = evolve(seq, ctx, 0.25);
  for (std::size_t k = 0; k < traj.t_us.size(); ++k) {
    const double s = std::sin(0.5 * traj.t_us[k]);
    CHECK(std::abs(traj.states[k](2, 2).real() - s * s) < 1e-6);
  }
}

TEST_CASE("trace and hermiticity drift stay below 1e-8 over 200 us") {
  AtomContext ctx;
  ctx.delta1_rad_us = 2.0;
  ctx.delta2_rad_us = 2.0;
  ctx.params = {5.0, 5.0, 0.5, 5.0, 5.0, 0.5};

  PulseSequence seq = bare_window(0.0, 200.0);
  Pulse d = square(PulseRole::D, 1, 10.0, 1.0, 0.5);
  d.shape = PulseShape::Sech;
  seq.pulses = {d, square(PulseRole::R, 1, 50.0, 1.0, 1.0)};

  const Trajectory traj = evolve(seq, ctx, 0.5);
  CHECK(traj.max_trace_dev <= 1e-8);
  for (const auto& m : traj.states) {
    AtomState st{m};
    CHECK(st.trace_deviation() <= 1e-8);
    CHECK(st.hermiticity_deviation() <= 1e-8);
    CHECK_NOTHROW(st.validate());
  }
}

TEST_CASE("halving the step changes sampled elements by <= 1e-7") {
  AtomContext ctx;
  ctx.delta1_rad_us = khz_to_rad_per_us(200.0);
  ctx.params = {5.0, 5.0, 0.0, 5.0, 5.0, 0.0};
  PulseSequence seq = bare_window(0.0, 50.0);
  seq.pulses = {square(PulseRole::D, 1, 5.0, 0.5, 0.5),
                square(PulseRole::R, 1, 20.0, 0.5, 1.0)};

  const Trajectory full = evolve(seq, ctx, 0.5);
  EvolveOptions half;
  half.step_scale = 0.5;
  const Trajectory fine = evolve(seq, ctx, 0.5, half);

  double max_diff = 0.0;
  for (std::size_t k = 0; k < full.states.size(); ++k)
    max_diff = std::max(max_diff,
                        (full.states[k] - fine.states[k]).cwiseAbs().maxCoeff());
  CHECK(max_diff <= 1e-7);
}

TEST_CASE("deshelving pair phase recovery") {
  // optical coherence parked in the spin state and retrieved
  DensityMatrix init = DensityMatrix::Zero();
  init(0, 0) = 0.5;
  init(2, 2) = 0.5;
  init(0, 2) = 0.5;
  init(2, 0) = 0.5;
  EvolveOptions opts;
  opts.initial_state = init;
  AtomContext ctx;

  PulseSequence seq = bare_window(0.0, 10.0, {0.0, 0.0, 1.0});
  seq.pulses = {square(PulseRole::B1, 2, 1.0, 0.5, 1.0),
                square(PulseRole::B2, 2, 5.0, 0.5, 3.0)};

  SUBCASE("pi + 3pi (sum 4pi) restores the coherence exactly") {
    const Trajectory traj = evolve(seq, ctx, 10.0, opts);
    const DensityMatrix& fin = traj.states.back();
    CHECK(std::abs(fin(0, 2) - Complex{0.5, 0.0}) < 1e-6);
    CHECK(fin(2, 2).real() == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(std::abs(fin(1, 1).real()) < 1e-6);
  }
  SUBCASE("pi + pi (sum 2pi) flips the sign") {
    seq.pulses[1].area_rad = kPi;
    const Trajectory traj = evolve(seq, ctx, 10.0, opts);
    CHECK(std::abs(traj.states.back()(0, 2) - Complex{-0.5, 0.0}) < 1e-6);
  }
  SUBCASE("population passes through the spin state in between") {
    const Trajectory traj = evolve(seq, ctx, 0.5, opts);
    // at t = 3 us (between B1 and B2) the |3> population sits in |2>
    const auto& mid = traj.states[6];
    CHECK(mid(1, 1).real() == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(std::abs(mid(2, 2).real()) < 1e-6);
    // and the optical coherence is riding on the spin transition
    CHECK(std::abs(mid(0, 1)) == doctest::Approx(0.5).epsilon(1e-6));
  }
}

TEST_CASE("laser phase multiplies the drive") {
  AtomContext ctx;
  PulseSequence seq = bare_window(0.0, 2.0);
  seq.pulses = {square(PulseRole::D, 1, 1.0, 0.5, 0.5)};
  const Trajectory ref = evolve(seq, ctx, 2.0);

  seq.pulses[0].phase_rad = 0.7;
  const Trajectory shifted = evolve(seq, ctx, 2.0);

  const Complex a = ref.states.back()(0, 2);
  const Complex b = shifted.states.back()(0, 2);
  CHECK(std::abs(b) == doctest::Approx(std::abs(a)).epsilon(1e-9));
  CHECK(std::arg(b / a) == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("non-finite states are reported with the failure time") {
  DensityMatrix bad = DensityMatrix::Zero();
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EvolveOptions opts;
  opts.initial_state = bad;
  AtomContext ctx;
  const PulseSequence seq = bare_window(0.0, 1.0);
  CHECK_THROWS_WITH_AS(evolve(seq, ctx, 0.5, opts),
                       doctest::Contains("non-finite"), IntegratorError);
}
