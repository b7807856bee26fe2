// lockecho: run photon-echo scenarios, sweep parameters, fit decay
// curves and evaluate the effective-atom noise budget.
//
// Exit codes: 0 success, 1 usage/parse error, 2 runtime error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lockecho/analysis.hpp"
#include "lockecho/ensemble.hpp"
#include "lockecho/scenario.hpp"
#include "lockecho/sequence.hpp"
#include "lockecho/units.hpp"
#include "presets_gen.hpp"

namespace fs = std::filesystem;
using namespace lockecho;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct ScenarioSource {
  std::string display;  // path or preset:<name>
  std::string text;
};

ScenarioSource load_scenario_text(const std::string& arg) {
  if (fs::exists(arg)) {
    std::ifstream in(arg, std::ios::binary);
    if (!in) throw ModelError("cannot read scenario file '" + arg + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return {arg, ss.str()};
  }
  // fall back to a bundled preset name, with or without decoration
  std::string name = arg;
  if (name.rfind("presets/", 0) == 0) name = name.substr(8);
  if (name.size() > 4 && name.ends_with(".scn"))
    name = name.substr(0, name.size() - 4);
  for (const auto& p : lockecho_presets::kPresets) {
    if (p.name == name) return {"preset:" + name, std::string(p.text)};
  }
  throw ModelError("scenario '" + arg + "' is neither a file nor a bundled preset");
}

struct CommonFlags {
  std::string out_dir = ".";
  int workers = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--out", flags.out_dir, "Output directory");
  cmd->add_option("--workers", flags.workers,
                  "Worker thread count (0 = all cores); does not change output bytes");
  cmd->add_option("--seed", flags.seed, "Seed recorded in the manifest");
  cmd->add_option("--set", flags.overrides,
                  "Scenario override section.key=value (repeatable)")
      ->allow_extra_args(false);
}

Scenario parse_with_overrides(const ScenarioSource& src,
                              const std::vector<std::string>& overrides) {
  Scenario sc = parse_scenario(src.text);
  for (const std::string& kv : overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ModelError("--set expects key=value, got '" + kv + "'");
    apply_override(sc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return sc;
}

// Role-labelled pulse windows plus an echo window. The echo window is
// centered on the delta-pulse prediction when the schedule matches a
// known template (deshelving pulses are ignored for timing) and
// otherwise covers everything after the last pulse.
std::map<std::string, std::array<double, 2>> build_windows(const Scenario& sc) {
  std::map<std::string, std::array<double, 2>> windows;
  double last_support = sc.sequence.t_start_us;
  int custom_idx = 0;
  for (const Pulse& p : sc.sequence.pulses) {
    last_support = std::max(last_support, p.support_end_us());
    // windows narrower than the sampling cannot be integrated; skip them
    if (p.support_end_us() - p.support_start_us() < 2.0 * sc.dt_out_us)
      continue;
    std::string name = to_string(p.role);
    if (windows.count(name)) name += "_" + std::to_string(++custom_idx);
    windows[name] = {p.support_start_us(), p.support_end_us()};
  }

  PulseSequence core = sc.sequence;
  std::erase_if(core.pulses, [](const Pulse& p) {
    return p.role != PulseRole::D && p.role != PulseRole::W &&
           p.role != PulseRole::R;
  });

  double lo = last_support + sc.dt_out_us;
  double hi = sc.sequence.t_end_us;
  try {
    const EchoPrediction pred = delta_pulse_oracle(core, sc.ensemble);
    const double half = std::max(3.0 * pred.envelope_fwhm_us, 2.0);
    lo = std::max(lo, pred.echo_time_us - half);
    hi = std::min(hi, pred.echo_time_us + half);
  } catch (const AnalysisError&) {
    // no template: keep the trailing window
  }
  if (hi - lo < 2.0 * sc.dt_out_us) {
    lo = last_support + sc.dt_out_us;
    hi = sc.sequence.t_end_us;
  }
  windows["echo"] = {lo, hi};
  return windows;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EnsembleError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw EnsembleError("write failed for '" + path.string() + "'");
}

std::string trace_csv(const EchoTrace& trace) {
  std::string out = "t_us,re_P,im_P,intensity\n";
  for (std::size_t k = 0; k < trace.t_us.size(); ++k) {
    out += fmt_g(trace.t_us[k]);
    out += ',';
    out += fmt_g(trace.polarization[k].real());
    out += ',';
    out += fmt_g(trace.polarization[k].imag());
    out += ',';
    out += fmt_g(trace.intensity[k]);
    out += '\n';
  }
  return out;
}

std::string metrics_text(const EchoMetrics& m, const EchoTrace& trace,
                         const std::map<std::string, std::array<double, 2>>& windows) {
  std::string out;
  out += "echo_peak_time_us: " + fmt_g(m.peak_time_us) + "\n";
  out += "echo_peak_amp: " + fmt_g(m.peak_amp) + "\n";
  out += "echo_peak_intensity: " + fmt_g(m.peak_intensity) + "\n";
  out += "efficiency: " + fmt_g(m.efficiency) + "\n";
  for (const auto& [name, energy] : m.window_energy)
    out += "energy_" + name + ": " + fmt_g(energy) + "\n";
  const auto& w = windows.at("echo");
  out += "echo_window_start_us: " + fmt_g(w[0]) + "\n";
  out += "echo_window_end_us: " + fmt_g(w[1]) + "\n";
  out += "final_rho11: " + fmt_g(trace.final_pop[0]) + "\n";
  out += "final_rho22: " + fmt_g(trace.final_pop[1]) + "\n";
  out += "final_rho33: " + fmt_g(trace.final_pop[2]) + "\n";
  return out;
}

std::string manifest_text(const ScenarioSource& src, std::uint64_t hash,
                          const CommonFlags& flags, double wall_ms,
                          const std::vector<std::string>& outputs) {
  char hash_hex[20];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(hash));
  std::string out;
  out += "scenario: " + src.display + "\n";
  out += std::string("scenario_hash: ") + hash_hex + "\n";
  out += std::string("tool_version: ") + kVersion + "\n";
  out += "workers: " + std::to_string(flags.workers) + "\n";
  out += "seed: " + std::to_string(flags.seed) + "\n";
  out += "wall_ms: " + fmt_g(wall_ms) + "\n";
  for (const auto& o : outputs) out += "output: " + o + "\n";
  return out;
}

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch())
      .count();
}

int cmd_run(const std::string& scenario_arg, const CommonFlags& flags) {
  const double t0 = now_ms();
  const ScenarioSource src = load_scenario_text(scenario_arg);
  const Scenario sc = parse_with_overrides(src, flags.overrides);

  RunOptions ropts;
  ropts.workers = flags.workers;
  ropts.scenario_hash = fnv1a64(src.text);
  const EchoTrace trace = run_ensemble(sc.sequence, sc.ensemble, sc.system,
                                       sc.dt_out_us, ropts);
  const auto windows = build_windows(sc);
  const EchoMetrics m = echo_metrics(trace, windows);

  fs::create_directories(flags.out_dir);
  const fs::path dir(flags.out_dir);
  const std::string metrics = metrics_text(m, trace, windows);
  write_file(dir / "trace.csv", trace_csv(trace));
  write_file(dir / "metrics.txt", metrics);
  write_file(dir / "run_manifest.txt",
             manifest_text(src, ropts.scenario_hash, flags, now_ms() - t0,
                           {"trace.csv", "metrics.txt"}));
  std::cout << metrics;
  return 0;
}

int cmd_sweep(const std::string& scenario_arg, const std::string& param,
              const std::vector<double>& values, bool with_fit,
              const CommonFlags& flags) {
  if (values.empty()) throw ModelError("sweep needs a non-empty value list");
  const double t_begin = now_ms();
  const ScenarioSource src = load_scenario_text(scenario_arg);

  std::string csv = "value,echo_peak_amp,echo_peak_time_us,intensity_norm\n";
  std::vector<double> sweep_t, sweep_y;
  double first_intensity = 0.0;

  for (std::size_t i = 0; i < values.size(); ++i) {
    Scenario sc = parse_with_overrides(src, flags.overrides);
    apply_sweep_parameter(sc, param, values[i]);

    RunOptions ropts;
    ropts.workers = flags.workers;
    ropts.scenario_hash = fnv1a64(src.text);
    const EchoTrace trace = run_ensemble(sc.sequence, sc.ensemble, sc.system,
                                         sc.dt_out_us, ropts);
    const EchoMetrics m = echo_metrics(trace, build_windows(sc));
    if (i == 0) first_intensity = m.peak_intensity;
    const double norm =
        first_intensity > 0.0 ? m.peak_intensity / first_intensity : 0.0;
    csv += fmt_g(values[i]) + "," + fmt_g(m.peak_amp) + "," +
           fmt_g(m.peak_time_us) + "," + fmt_g(norm) + "\n";
    sweep_t.push_back(values[i]);
    sweep_y.push_back(norm);
    std::cerr << "sweep " << param << " = " << values[i]
              << ": peak " << m.peak_amp << " at " << m.peak_time_us << " us\n";
  }

  fs::create_directories(flags.out_dir);
  const fs::path dir(flags.out_dir);
  std::vector<std::string> outputs = {"sweep.csv"};
  write_file(dir / "sweep.csv", csv);

  if (with_fit) {
    const DecayFit fit = fit_decay(sweep_t, sweep_y, TimeUnit::Microseconds);
    std::string txt;
    txt += "delta_t_us: " + fmt_g(fit.delta_t) + "\n";
    txt += "tau_us: " + fmt_g(fit.tau) + "\n";
    txt += "n: " + fmt_g(fit.n) + "\n";
    txt += "asymptote: " + fmt_g(fit.n * fit.n / ((fit.n + 1) * (fit.n + 1))) + "\n";
    txt += "rms_residual: " + fmt_g(fit.rms_residual) + "\n";
    write_file(dir / "sweep_fit.txt", txt);
    outputs.push_back("sweep_fit.txt");
    std::cout << txt;
  }
  write_file(dir / "run_manifest.txt",
             manifest_text(src, fnv1a64(src.text), flags, now_ms() - t_begin,
                           outputs));
  std::cout << csv;
  return 0;
}

int cmd_fit(const std::string& csv_path, const std::string& unit_flag,
            const CommonFlags& flags) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw AnalysisError("cannot read CSV file '" + csv_path + "'");
  DecayData data = read_decay_csv(in);
  if (unit_flag == "us")
    data.unit = TimeUnit::Microseconds;
  else if (unit_flag == "s")
    data.unit = TimeUnit::Seconds;
  else if (!unit_flag.empty())
    throw AnalysisError("--unit must be 'us' or 's'");

  const DecayFit fit = fit_decay(data.t, data.intensity, data.unit);
  const std::string u = to_string(fit.unit);
  std::string txt;
  txt += "delta_t_" + u + ": " + fmt_g(fit.delta_t) + "\n";
  txt += "tau_" + u + ": " + fmt_g(fit.tau) + "\n";
  txt += "n: " + fmt_g(fit.n) + "\n";
  txt += "asymptote: " + fmt_g(fit.n * fit.n / ((fit.n + 1) * (fit.n + 1))) + "\n";
  txt += "rms_residual: " + fmt_g(fit.rms_residual) + "\n";
  fs::create_directories(flags.out_dir);
  write_file(fs::path(flags.out_dir) / "fit.txt", txt);
  std::cout << txt;
  return 0;
}

int cmd_noise(double n0, double volume, double pulse_dt_ns, double t1_us,
              double alpha) {
  const NoiseBudget b = noise_budget(n0, volume, pulse_dt_ns, t1_us, alpha);
  std::cout << "n_atoms: " << fmt_g(b.n_atoms) << "\n"
            << "eta: " << fmt_g(b.eta) << "\n"
            << "n_e: " << fmt_g(b.n_e) << "\n"
            << "n_f: " << fmt_g(b.n_f) << "\n";
  return 0;
}

int cmd_presets_list() {
  for (const auto& p : lockecho_presets::kPresets) {
    // first comment line doubles as the description
    std::string_view text = p.text;
    std::string desc;
    if (text.rfind("# ", 0) == 0) {
      const auto eol = text.find('\n');
      desc = std::string(text.substr(2, eol - 2));
    }
    std::cout << p.name << "\n    " << desc << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photon-echo simulator for a three-level lambda medium"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonFlags run_flags;
  std::string run_scenario;
  CLI::App* run = app.add_subcommand("run", "Run one scenario and write trace + metrics");
  run->add_option("scenario", run_scenario, "Scenario file or preset name")->required();
  add_common(run, run_flags);

  CommonFlags sweep_flags;
  std::string sweep_scenario, sweep_param;
  std::vector<double> sweep_values;
  bool sweep_fit = false;
  CLI::App* sweep = app.add_subcommand("sweep", "Re-run a scenario over a parameter list");
  sweep->add_option("scenario", sweep_scenario, "Scenario file or preset name")->required();
  sweep->add_option("--param", sweep_param, "Parameter name (see docs)")->required();
  sweep->add_option("--values", sweep_values, "Comma-separated values")
      ->required()
      ->delimiter(',');
  sweep->add_flag("--fit", sweep_fit, "Fit the decay model to the aggregate");
  add_common(sweep, sweep_flags);

  CommonFlags fit_flags;
  std::string fit_csv, fit_unit;
  CLI::App* fit = app.add_subcommand("fit", "Fit the saturating decay model to CSV data");
  fit->add_option("csv", fit_csv, "Two-column CSV (t, intensity) with unit header")->required();
  fit->add_option("--unit", fit_unit, "Override the time unit (us|s)");
  add_common(fit, fit_flags);

  double n_n0 = 4.7e18, n_volume = 1e-7, n_dt = 0.1, n_t1 = 160.0, n_alpha = 1e-7;
  CLI::App* noise = app.add_subcommand("noise", "Effective-atom noise budget");
  noise->add_option("--n0", n_n0, "Ion density (cm^-3)");
  noise->add_option("--volume", n_volume, "Interaction volume (cm^3)");
  noise->add_option("--pulse-dt-ns", n_dt, "Photon pulse duration (ns)");
  noise->add_option("--t1-us", n_t1, "Spontaneous decay time (us)");
  noise->add_option("--alpha", n_alpha, "Solid-angle area ratio");

  CLI::App* presets = app.add_subcommand("presets", "Bundled scenarios");
  CLI::App* presets_list = presets->add_subcommand("list", "List bundled presets");
  presets->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (run->parsed()) return cmd_run(run_scenario, run_flags);
    if (sweep->parsed())
      return cmd_sweep(sweep_scenario, sweep_param, sweep_values, sweep_fit,
                       sweep_flags);
    if (fit->parsed()) return cmd_fit(fit_csv, fit_unit, fit_flags);
    if (noise->parsed()) return cmd_noise(n_n0, n_volume, n_dt, n_t1, n_alpha);
    if (presets_list->parsed()) return cmd_presets_list();
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const AnalysisError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
