#include "lockecho/model.hpp"

#include <algorithm>
#include <cmath>

#include "lockecho/units.hpp"

namespace lockecho {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ModelError(msg);
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

void SystemParams::validate() const {
  struct Named {
    const char* name;
    double value;
  };
  const Named rates[] = {
      {"gamma31_khz", gamma31_khz}, {"gamma32_khz", gamma32_khz},
      {"gamma21_khz", gamma21_khz}, {"deph13_khz", deph13_khz},
      {"deph23_khz", deph23_khz},   {"deph12_khz", deph12_khz},
  };
  for (const auto& r : rates) {
    require(finite(r.value) && r.value >= 0.0,
            std::string("SystemParams.") + r.name + " must be >= 0");
  }
}

double SystemParams::t1_opt_us() const {
  const double total_khz = gamma31_khz + gamma32_khz;
  if (total_khz <= 0.0) throw ModelError("undefined T1: gamma31 + gamma32 is zero");
  return 1.0 / khz_to_rad_per_us(total_khz);
}

const char* to_string(PulseRole role) {
  switch (role) {
    case PulseRole::D: return "D";
    case PulseRole::W: return "W";
    case PulseRole::R: return "R";
    case PulseRole::B1: return "B1";
    case PulseRole::B2: return "B2";
    case PulseRole::Custom: return "custom";
  }
  return "?";
}

const char* to_string(PulseShape shape) {
  return shape == PulseShape::Square ? "square" : "sech";
}

PulseRole pulse_role_from_string(const std::string& s) {
  if (s == "D") return PulseRole::D;
  if (s == "W") return PulseRole::W;
  if (s == "R") return PulseRole::R;
  if (s == "B1") return PulseRole::B1;
  if (s == "B2") return PulseRole::B2;
  if (s == "custom") return PulseRole::Custom;
  throw ModelError("unknown pulse role '" + s + "'");
}

PulseShape pulse_shape_from_string(const std::string& s) {
  if (s == "square") return PulseShape::Square;
  if (s == "sech") return PulseShape::Sech;
  throw ModelError("unknown pulse shape '" + s + "'");
}

void Pulse::validate() const {
  require(finite(duration_us) && duration_us > 0.0, "Pulse.duration_us must be > 0");
  require(finite(area_rad) && area_rad >= 0.0, "Pulse.area_rad must be >= 0");
  require(finite(t0_us), "Pulse.t0_us must be finite");
  require(finite(phase_rad), "Pulse.phase_rad must be finite");
  require(channel == 1 || channel == 2, "Pulse.channel must be 1 or 2");
  const double norm = std::sqrt(wavevector[0] * wavevector[0] +
                                wavevector[1] * wavevector[1] +
                                wavevector[2] * wavevector[2]);
  require(std::abs(norm - 1.0) <= 1e-9, "Pulse.wavevector must have unit norm");
}

double Pulse::support_start_us() const {
  const double half = shape == PulseShape::Square ? 0.5 * duration_us
                                                  : kSechSupportScale * duration_us;
  return t0_us - half;
}

double Pulse::support_end_us() const {
  const double half = shape == PulseShape::Square ? 0.5 * duration_us
                                                  : kSechSupportScale * duration_us;
  return t0_us + half;
}

void PulseSequence::validate() const {
  require(finite(t_start_us) && finite(t_end_us) && t_start_us < t_end_us,
          "PulseSequence window must satisfy t_start_us < t_end_us");
  for (std::size_t i = 0; i < pulses.size(); ++i) {
    pulses[i].validate();
    if (i > 0) {
      require(pulses[i - 1].t0_us <= pulses[i].t0_us,
              "PulseSequence.pulses must be sorted by t0_us");
    }
    require(pulses[i].support_start_us() >= t_start_us &&
                pulses[i].support_end_us() <= t_end_us,
            std::string("PulseSequence window does not contain pulse '") +
                to_string(pulses[i].role) + "' support");
  }
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    require(finite(init_pop[k]) && init_pop[k] >= 0.0 && init_pop[k] <= 1.0,
            "PulseSequence.init_pop entries must lie in [0, 1]");
    sum += init_pop[k];
  }
  require(std::abs(sum - 1.0) <= 1e-9, "PulseSequence.init_pop must sum to 1");
}

const Pulse* PulseSequence::find_role(PulseRole role) const {
  for (const auto& p : pulses) {
    if (p.role == role) return &p;
  }
  return nullptr;
}

void AtomState::validate() const {
  if (trace_deviation() > kTol) throw ModelError("AtomState.rho trace must be 1");
  if (hermiticity_deviation() > kTol)
    throw ModelError("AtomState.rho must be Hermitian");
  for (int k = 0; k < 3; ++k) {
    const double p = rho(k, k).real();
    if (p < -kTol || p > 1.0 + kTol)
      throw ModelError("AtomState.rho diagonal entries must lie in [0, 1]");
  }
}

double AtomState::trace_deviation() const {
  return std::abs(rho.trace() - std::complex<double>(1.0, 0.0));
}

double AtomState::hermiticity_deviation() const {
  return (rho - rho.adjoint()).cwiseAbs().maxCoeff();
}

void EnsembleSpec::validate() const {
  require(finite(fwhm_khz) && fwhm_khz > 0.0, "EnsembleSpec.fwhm_khz must be > 0");
  require(finite(span_khz) && span_khz >= 2.0 * fwhm_khz,
          "EnsembleSpec.span_khz must be >= 2 * fwhm_khz");
  require(segments >= 3, "EnsembleSpec.segments must be >= 3");
  require(segments % 2 == 1, "EnsembleSpec.segments must be odd");
  require(finite(spin_fwhm_khz) && spin_fwhm_khz >= 0.0,
          "EnsembleSpec.spin_fwhm_khz must be >= 0");
}

}  // namespace lockecho
