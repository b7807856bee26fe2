#include "lockecho/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <sstream>

#include "lockecho/integrator.hpp"
#include "lockecho/units.hpp"

namespace lockecho {

double eval_decay_model(double t, double delta_t, double tau, double n) {
  if (tau <= 0.0) throw AnalysisError("decay model requires tau > 0");
  if (n < 0.0) throw AnalysisError("decay model requires n >= 0");
  if (t < delta_t) throw AnalysisError("decay model requires t >= delta_t");
  const double a = (std::exp(-(t - delta_t) / tau) + n) / (n + 1.0);
  return a * a;
}

const char* to_string(TimeUnit unit) {
  return unit == TimeUnit::Microseconds ? "us" : "s";
}

namespace {

// Amplitude written as (1 - s) exp(-(t - dt)/tau) + s with s = n/(n+1);
// s is bounded in [0, 1), which keeps the search stable for any n.
double model_amp(double t, double delta_t, double tau, double s) {
  return (1.0 - s) * std::exp(-(t - delta_t) / tau) + s;
}

double sse(std::span<const double> t, std::span<const double> y,
           double delta_t, double tau, double s) {
  double acc = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double a = model_amp(t[k], delta_t, tau, s);
    const double r = a * a - y[k];
    acc += r * r;
  }
  return acc;
}

}  // namespace

DecayFit fit_decay(std::span<const double> t, std::span<const double> intensity,
                   TimeUnit unit) {
  if (t.size() != intensity.size())
    throw AnalysisError("fit_decay: t and intensity lengths differ");
  if (t.size() < 4)
    throw AnalysisError("fit_decay: need at least 4 points (under-determined)");
  for (std::size_t k = 1; k < t.size(); ++k) {
    if (!(t[k] > t[k - 1]))
      throw AnalysisError("fit_decay: t must be strictly increasing");
  }
  const auto [y_min, y_max] =
      std::minmax_element(intensity.begin(), intensity.end());
  if (*y_max - *y_min <= 1e-12 * std::max(1.0, std::abs(*y_max)))
    throw AnalysisError("fit_decay: flat data");

  const double delta_t = t.front();
  const double span = t.back() - t.front();

  // coarse grid
  double best_tau = span, best_s = 0.0;
  double best_sse = std::numeric_limits<double>::infinity();
  const double tau_lo = std::max(span * 1e-4, (t[1] - t[0]) * 1e-2);
  const double tau_hi = span * 1e3;
  const int n_tau = 80, n_s = 81;
  for (int i = 0; i < n_tau; ++i) {
    const double tau =
        tau_lo * std::pow(tau_hi / tau_lo, static_cast<double>(i) / (n_tau - 1));
    for (int j = 0; j < n_s; ++j) {
      const double s = static_cast<double>(j) / n_s;  // [0, 1)
      const double e = sse(t, intensity, delta_t, tau, s);
      if (e < best_sse) {
        best_sse = e;
        best_tau = tau;
        best_s = s;
      }
    }
  }

  // damped Gauss-Newton on p = (log tau, s)
  double log_tau = std::log(best_tau);
  double s = best_s;
  double current = best_sse;
  for (int iter = 0; iter < 200; ++iter) {
    // numerical Jacobian of residuals r_k = a_k^2 - y_k
    const double tau = std::exp(log_tau);
    double jtj00 = 0.0, jtj01 = 0.0, jtj11 = 0.0, jtr0 = 0.0, jtr1 = 0.0;
    const double eps_lt = 1e-6, eps_s = 1e-8;
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double a = model_amp(t[k], delta_t, tau, s);
      const double r = a * a - intensity[k];
      const double a_lt =
          model_amp(t[k], delta_t, std::exp(log_tau + eps_lt), s);
      const double d0 = (a_lt * a_lt - a * a) / eps_lt;
      const double sp = std::min(s + eps_s, 1.0 - 1e-12);
      const double a_s = model_amp(t[k], delta_t, tau, sp);
      const double d1 = (a_s * a_s - a * a) / (sp - s);
      jtj00 += d0 * d0;
      jtj01 += d0 * d1;
      jtj11 += d1 * d1;
      jtr0 += d0 * r;
      jtr1 += d1 * r;
    }
    const double det = jtj00 * jtj11 - jtj01 * jtj01;
    if (std::abs(det) < 1e-300) break;
    double step0 = -(jtj11 * jtr0 - jtj01 * jtr1) / det;
    double step1 = -(jtj00 * jtr1 - jtj01 * jtr0) / det;

    double scale = 1.0;
    bool improved = false;
    for (int halve = 0; halve < 40; ++halve) {
      const double cand_lt = log_tau + scale * step0;
      const double cand_s = std::clamp(s + scale * step1, 0.0, 1.0 - 1e-12);
      const double e = sse(t, intensity, delta_t, std::exp(cand_lt), cand_s);
      if (e < current) {
        const double rel = std::max(std::abs(cand_lt - log_tau) /
                                        std::max(1.0, std::abs(log_tau)),
                                    std::abs(cand_s - s) / std::max(1e-9, s));
        log_tau = cand_lt;
        s = cand_s;
        current = e;
        improved = true;
        if (rel < 1e-6) iter = 200;  // converged
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
  }

  DecayFit fit;
  fit.delta_t = delta_t;
  fit.tau = std::exp(log_tau);
  fit.n = s / (1.0 - s);
  fit.rms_residual = std::sqrt(current / static_cast<double>(t.size()));
  fit.unit = unit;
  return fit;
}

std::vector<std::pair<double, double>> population_transfer_curve(
    std::span<const double> area_rad) {
  std::vector<std::pair<double, double>> out;
  out.reserve(area_rad.size());

  for (const double area : area_rad) {
    if (area < 0.0)
      throw AnalysisError("population_transfer_curve: area must be >= 0");
    PulseSequence seq;
    seq.t_start_us = 0.0;
    seq.t_end_us = 2.0;
    seq.init_pop = {0.0, 0.0, 1.0};
    if (area > 0.0) {
      Pulse p;
      p.role = PulseRole::B1;
      p.channel = 2;
      p.shape = PulseShape::Square;
      p.t0_us = 1.0;
      p.duration_us = 0.5;
      p.area_rad = area;
      seq.pulses.push_back(p);
    }
    AtomContext ctx;  // resonant, all rates zero
    double rho33 = 1.0;
    evolve_with_sink(seq, ctx, seq.t_end_us - seq.t_start_us, {},
                     [&](std::size_t, double, const PackedState& s) {
                       rho33 = s.n3;
                     });
    out.emplace_back(area, rho33);
  }
  return out;
}

double beer_absorption(double optical_depth) {
  if (optical_depth < 0.0)
    throw AnalysisError("beer_absorption: optical depth must be >= 0");
  return 1.0 - std::exp(-optical_depth);
}

NoiseBudget noise_budget(double n0_per_cm3, double volume_cm3,
                         double pulse_dt_ns, double t1_us, double alpha) {
  if (n0_per_cm3 <= 0.0) throw AnalysisError("noise_budget: n0 must be > 0");
  if (volume_cm3 <= 0.0) throw AnalysisError("noise_budget: volume must be > 0");
  if (pulse_dt_ns <= 0.0) throw AnalysisError("noise_budget: pulse_dt must be > 0");
  if (t1_us <= 0.0) throw AnalysisError("noise_budget: t1 must be > 0");
  if (alpha < 0.0) throw AnalysisError("noise_budget: alpha must be >= 0");

  NoiseBudget b;
  b.n0_per_cm3 = n0_per_cm3;
  b.volume_cm3 = volume_cm3;
  b.n_atoms = n0_per_cm3 * volume_cm3;
  b.pulse_dt_ns = pulse_dt_ns;
  b.t1_us = t1_us;
  b.eta = (pulse_dt_ns * 1e-3) / t1_us;
  b.n_e = b.eta * b.n_atoms;
  b.alpha = alpha;
  b.n_f = alpha * b.n_e;
  return b;
}

EchoPrediction delta_pulse_oracle(const PulseSequence& seq,
                                  const EnsembleSpec& spec) {
  spec.validate();
  const Pulse* d = nullptr;
  const Pulse* w = nullptr;
  const Pulse* r = nullptr;
  for (const Pulse& p : seq.pulses) {
    if (p.channel != 1)
      throw AnalysisError("delta_pulse_oracle: unrecognized template "
                          "(pulse off channel 1)");
    switch (p.role) {
      case PulseRole::D:
        if (d) throw AnalysisError("delta_pulse_oracle: duplicate D pulse");
        d = &p;
        break;
      case PulseRole::W:
        if (w) throw AnalysisError("delta_pulse_oracle: duplicate W pulse");
        w = &p;
        break;
      case PulseRole::R:
        if (r) throw AnalysisError("delta_pulse_oracle: duplicate R pulse");
        r = &p;
        break;
      default:
        throw AnalysisError("delta_pulse_oracle: unrecognized template "
                            "(unexpected pulse role)");
    }
  }
  if (d == nullptr || r == nullptr)
    throw AnalysisError("delta_pulse_oracle: unrecognized template "
                        "(needs D and R pulses)");

  EchoPrediction pred;
  pred.envelope_fwhm_us = 8.0 * std::log(2.0) / khz_to_rad_per_us(spec.fwhm_khz);
  if (w == nullptr) {
    if (!(d->t0_us < r->t0_us))
      throw AnalysisError("delta_pulse_oracle: D must precede R");
    pred.two_pulse = true;
    pred.echo_time_us = 2.0 * r->t0_us - d->t0_us;
    const double half_r = std::sin(0.5 * r->area_rad);
    pred.relative_amplitude = std::abs(std::sin(d->area_rad)) * half_r * half_r;
  } else {
    if (!(d->t0_us < w->t0_us && w->t0_us < r->t0_us))
      throw AnalysisError("delta_pulse_oracle: expected order D, W, R");
    pred.two_pulse = false;
    pred.echo_time_us = r->t0_us + (w->t0_us - d->t0_us);
    pred.relative_amplitude = 0.5 * std::abs(std::sin(d->area_rad) *
                                             std::sin(w->area_rad) *
                                             std::sin(r->area_rad));
  }
  return pred;
}

DecayData read_decay_csv(std::istream& in) {
  DecayData data;
  std::string line;
  int line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    // strip whitespace and skip blanks/comments
    std::string s;
    for (char c : line)
      if (c != ' ' && c != '\t' && c != '\r') s += c;
    if (s.empty() || s[0] == '#') continue;

    if (!saw_header) {
      saw_header = true;
      if (s.rfind("t_us,", 0) == 0)
        data.unit = TimeUnit::Microseconds;
      else if (s.rfind("t_s,", 0) == 0)
        data.unit = TimeUnit::Seconds;
      else
        throw AnalysisError("line " + std::to_string(line_no) +
                            ": expected header 't_us,<name>' or 't_s,<name>'");
      continue;
    }

    const std::size_t comma = s.find(',');
    if (comma == std::string::npos)
      throw AnalysisError("line " + std::to_string(line_no) +
                          ": expected 't,intensity'");
    try {
      std::size_t used = 0;
      const double tv = std::stod(s.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument("trailing");
      const std::string rest = s.substr(comma + 1);
      const double yv = std::stod(rest, &used);
      if (used != rest.size()) throw std::invalid_argument("trailing");
      data.t.push_back(tv);
      data.intensity.push_back(yv);
    } catch (const std::exception&) {
      throw AnalysisError("line " + std::to_string(line_no) +
                          ": non-numeric CSV row");
    }
  }
  if (data.t.empty())
    throw AnalysisError("decay CSV contains no data rows");
  return data;
}

}  // namespace lockecho
