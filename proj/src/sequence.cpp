#include "lockecho/sequence.hpp"

#include <cmath>

#include "lockecho/units.hpp"

namespace lockecho {

double area_to_amplitude(const Pulse& p) {
  if (p.duration_us <= 0.0) throw ModelError("Pulse.duration_us must be > 0");
  if (p.shape == PulseShape::Square) {
    return p.area_rad / (2.0 * p.duration_us);
  }
  // integral of sech(beta t) over all t is pi/beta, so area = 2*Omega0*pi/beta
  const double beta = 1.0 / p.duration_us;
  return p.area_rad * beta / kTwoPi;
}

double rabi_envelope(const Pulse& p, double t_us) {
  const double omega0 = area_to_amplitude(p);
  const double dt = t_us - p.t0_us;
  if (p.shape == PulseShape::Square) {
    return std::abs(dt) <= 0.5 * p.duration_us ? omega0 : 0.0;
  }
  const double beta = 1.0 / p.duration_us;
  if (std::abs(dt) > kSechSupportScale / beta) return 0.0;
  return omega0 / std::cosh(beta * dt);
}

namespace {

// Smallest integer k >= 1 with |x - f(k)| <= tol, for f increasing.
std::optional<int> match_multiple(double x, double tol, double step,
                                  double offset) {
  // candidates f(k) = offset + step * k
  const double k_real = (x - offset) / step;
  const int k = static_cast<int>(std::lround(k_real));
  for (int cand : {k - 1, k, k + 1}) {
    if (cand >= 1 && std::abs(x - (offset + step * cand)) <= tol)
      return cand;
  }
  return std::nullopt;
}

}  // namespace

LockingReport validate_locking(const PulseSequence& seq, double tol_rad) {
  const Pulse* b1 = seq.find_role(PulseRole::B1);
  const Pulse* b2 = seq.find_role(PulseRole::B2);
  if (b1 == nullptr || b2 == nullptr)
    throw ModelError("validate_locking requires pulses with roles B1 and B2");

  LockingReport report;
  report.tolerance_rad = tol_rad;
  report.b1_area_rad = b1->area_rad;
  report.sum_area_rad = b1->area_rad + b2->area_rad;
  // sum = 4n*pi, n >= 1
  report.n_sum = match_multiple(report.sum_area_rad, tol_rad, 4.0 * kPi, 0.0);
  // B1 = (2m-1)*pi = 2m*pi - pi, m >= 1
  report.n_b1 = match_multiple(report.b1_area_rad, tol_rad, 2.0 * kPi, -kPi);
  report.valid = report.n_sum.has_value() && report.n_b1.has_value();
  return report;
}

std::string FrequencyLabel::str() const {
  auto term = [](int coeff, const char* name) -> std::string {
    if (coeff == 0) return "";
    if (coeff == 1) return std::string("+") + name;
    if (coeff == -1) return std::string("-") + name;
    return (coeff > 0 ? "+" : "") + std::to_string(coeff) + name;
  };
  std::string s = term(omega1_coeff, "omega1") + term(omega2_coeff, "omega2");
  if (s.empty()) return "0";
  if (s.front() == '+') s.erase(s.begin());
  return s;
}

PhaseMatchResult check_phase_matching(const std::array<double, 3>& k_d,
                                      const std::array<double, 3>& k_w,
                                      const std::array<double, 3>& k_r,
                                      int channel_d, int channel_w,
                                      int channel_r) {
  auto check_unit = [](const std::array<double, 3>& k, const char* name) {
    const double norm = std::sqrt(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
    if (std::abs(norm - 1.0) > 1e-9)
      throw ModelError(std::string(name) + " must be a unit vector");
  };
  check_unit(k_d, "k_D");
  check_unit(k_w, "k_W");
  check_unit(k_r, "k_R");

  PhaseMatchResult result;
  for (int i = 0; i < 3; ++i) result.k_echo[i] = -k_d[i] + k_w[i] + k_r[i];

  auto add_channel = [&](int channel, int sign) {
    if (channel == 1)
      result.omega_echo.omega1_coeff += sign;
    else
      result.omega_echo.omega2_coeff += sign;
  };
  add_channel(channel_d, -1);
  add_channel(channel_w, +1);
  add_channel(channel_r, +1);
  return result;
}

}  // namespace lockecho
