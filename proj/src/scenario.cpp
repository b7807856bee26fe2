#include "lockecho/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "lockecho/units.hpp"

namespace lockecho {

namespace {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
  int col = 0;        // column of the key
  int value_col = 0;  // column of the value
};

struct Section {
  std::string name;
  int line = 0;
  bool is_pulse = false;
  std::vector<KeyValue> entries;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

// Lexes the file into sections of key/value pairs; no semantics yet.
std::vector<Section> lex(std::string_view text) {
  std::vector<Section> sections;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view raw = text.substr(
        pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    ++line_no;
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;

    const std::size_t hash = raw.find('#');
    if (hash != std::string_view::npos) raw = raw.substr(0, hash);
    std::string_view body = trim(raw);
    if (body.empty()) continue;
    const int col = static_cast<int>(raw.find_first_not_of(" \t")) + 1;

    if (body.front() == '[') {
      const bool dbl = body.size() >= 2 && body[1] == '[';
      const std::string_view close = dbl ? "]]" : "]";
      if (!body.ends_with(close))
        throw ScenarioError(line_no, col, "unterminated section header");
      std::string_view name = body.substr(dbl ? 2 : 1,
                                          body.size() - 2 * (dbl ? 2 : 1));
      name = trim(name);
      if (name.empty())
        throw ScenarioError(line_no, col, "empty section name");
      Section sec;
      sec.name = std::string(name);
      sec.line = line_no;
      sec.is_pulse = dbl;
      sections.push_back(std::move(sec));
      continue;
    }

    const std::size_t eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ScenarioError(line_no, col, "expected 'key = value'");
    const std::string_view key = trim(body.substr(0, eq));
    const std::string_view value = trim(body.substr(eq + 1));
    if (key.empty()) throw ScenarioError(line_no, col, "missing key before '='");
    if (value.empty())
      throw ScenarioError(line_no, col + static_cast<int>(eq) + 1,
                          "missing value for key '" + std::string(key) + "'");
    if (sections.empty())
      throw ScenarioError(line_no, col,
                          "key '" + std::string(key) + "' outside any section");
    std::size_t value_off = eq + 1;
    while (value_off < body.size() &&
           (body[value_off] == ' ' || body[value_off] == '\t'))
      ++value_off;
    KeyValue kv;
    kv.key = std::string(key);
    kv.value = std::string(value);
    kv.line = line_no;
    kv.col = col;
    kv.value_col = col + static_cast<int>(value_off);
    sections.back().entries.push_back(std::move(kv));
  }
  return sections;
}

// One section's entries with required/default lookup and unknown-key
// rejection.
class SectionReader {
 public:
  SectionReader(const Section& sec) : sec_(sec) {
    for (const auto& kv : sec_.entries) {
      if (!seen_.insert(kv.key).second)
        throw ScenarioError(kv.line, kv.col,
                            "duplicate key '" + kv.key + "' in [" + sec_.name + "]");
    }
  }

  const KeyValue* find(const std::string& key) {
    used_.insert(key);
    for (const auto& kv : sec_.entries)
      if (kv.key == key) return &kv;
    return nullptr;
  }

  double number(const std::string& key) {
    const KeyValue* kv = require_kv(key);
    return parse_number(*kv);
  }

  double number_or(const std::string& key, double fallback) {
    const KeyValue* kv = find(key);
    return kv == nullptr ? fallback : parse_number(*kv);
  }

  int integer(const std::string& key, int fallback) {
    const KeyValue* kv = find(key);
    if (kv == nullptr) return fallback;
    const double v = parse_number(*kv);
    if (v != std::floor(v) || std::abs(v) > 1e9)
      throw ScenarioError(kv->line, kv->value_col,
                          "key '" + key + "' must be an integer");
    return static_cast<int>(v);
  }

  std::string text(const std::string& key) { return require_kv(key)->value; }

  std::string text_or(const std::string& key, const std::string& fallback) {
    const KeyValue* kv = find(key);
    return kv == nullptr ? fallback : kv->value;
  }

  bool has(const std::string& key) {
    used_.insert(key);
    for (const auto& kv : sec_.entries)
      if (kv.key == key) return true;
    return false;
  }

  std::array<double, 3> vector3(const std::string& key,
                                std::array<double, 3> fallback) {
    const KeyValue* kv = find(key);
    if (kv == nullptr) return fallback;
    std::array<double, 3> out{};
    std::string_view rest = kv->value;
    for (int i = 0; i < 3; ++i) {
      const std::size_t comma = rest.find(',');
      if ((i < 2) == (comma == std::string_view::npos))
        throw ScenarioError(kv->line, kv->value_col,
                            "key '" + key + "' must be three comma-separated numbers");
      std::string_view piece =
          i < 2 ? rest.substr(0, comma) : rest;
      out[i] = parse_double_or_throw(std::string(trim(piece)), *kv, key);
      if (i < 2) rest = rest.substr(comma + 1);
    }
    return out;
  }

  // Call after reading everything: rejects keys this reader never asked for.
  void finish() const {
    for (const auto& kv : sec_.entries) {
      if (used_.find(kv.key) == used_.end())
        throw ScenarioError(kv.line, kv.col,
                            "unknown key '" + kv.key + "' in [" + sec_.name + "]");
    }
  }

  const Section& section() const { return sec_; }

 private:
  const KeyValue* require_kv(const std::string& key) {
    const KeyValue* kv = find(key);
    if (kv == nullptr)
      throw ScenarioError(sec_.line, 1,
                          "missing required key '" + key + "' in [" + sec_.name + "]");
    return kv;
  }

  double parse_number(const KeyValue& kv) {
    return parse_double_or_throw(kv.value, kv, kv.key);
  }

  static double parse_double_or_throw(const std::string& s, const KeyValue& kv,
                                      const std::string& key) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || !std::isfinite(v))
      throw ScenarioError(kv.line, kv.value_col,
                          "key '" + key + "' has non-numeric value '" + s + "'");
    return v;
  }

  const Section& sec_;
  std::set<std::string> seen_;
  std::set<std::string> used_;
};

int default_channel(PulseRole role) {
  return (role == PulseRole::B1 || role == PulseRole::B2) ? 2 : 1;
}

Pulse read_pulse(SectionReader& reader) {
  Pulse p;
  const std::string role_str = reader.text("role");
  try {
    p.role = pulse_role_from_string(role_str);
  } catch (const ModelError& e) {
    throw ScenarioError(reader.section().line, 1, e.what());
  }
  const std::string shape_str = reader.text("shape");
  try {
    p.shape = pulse_shape_from_string(shape_str);
  } catch (const ModelError& e) {
    throw ScenarioError(reader.section().line, 1, e.what());
  }
  p.channel = reader.integer("channel", default_channel(p.role));
  p.t0_us = reader.number("t0_us");
  p.duration_us = reader.number("duration_us");
  p.area_rad = reader.number("area_pi") * kPi;
  p.phase_rad = reader.number_or("phase_rad", 0.0);
  p.wavevector = reader.vector3("k", {0.0, 0.0, 1.0});
  reader.finish();
  return p;
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  const std::vector<Section> sections = lex(text);

  Scenario sc;
  bool saw_system = false, saw_ensemble = false, saw_window = false;
  std::array<double, 3> init_pop{1.0, 0.0, 0.0};
  std::vector<Pulse> pulses;

  for (const auto& sec : sections) {
    SectionReader reader(sec);
    if (sec.is_pulse) {
      if (sec.name != "pulse")
        throw ScenarioError(sec.line, 1, "unknown section [[" + sec.name + "]]");
      pulses.push_back(read_pulse(reader));
      continue;
    }
    if (sec.name == "system") {
      if (saw_system) throw ScenarioError(sec.line, 1, "duplicate [system] section");
      saw_system = true;
      sc.system.gamma31_khz = reader.number("gamma31_khz");
      sc.system.gamma32_khz = reader.number("gamma32_khz");
      sc.system.gamma21_khz = reader.number("gamma21_khz");
      sc.system.deph13_khz = reader.number("deph13_khz");
      sc.system.deph23_khz = reader.number("deph23_khz");
      sc.system.deph12_khz = reader.number("deph12_khz");
    } else if (sec.name == "ensemble") {
      if (saw_ensemble) throw ScenarioError(sec.line, 1, "duplicate [ensemble] section");
      saw_ensemble = true;
      sc.ensemble.fwhm_khz = reader.number("fwhm_khz");
      sc.ensemble.span_khz = reader.number("span_khz");
      sc.ensemble.segments = reader.integer("segments", 401);
      sc.ensemble.spin_fwhm_khz = reader.number_or("spin_fwhm_khz", 0.0);
    } else if (sec.name == "window") {
      if (saw_window) throw ScenarioError(sec.line, 1, "duplicate [window] section");
      saw_window = true;
      sc.sequence.t_start_us = reader.number("t_start_us");
      sc.sequence.t_end_us = reader.number("t_end_us");
      sc.dt_out_us = reader.number_or("dt_out_us", 0.05);
    } else if (sec.name == "init") {
      init_pop[0] = reader.number_or("rho11", 1.0);
      init_pop[1] = reader.number_or("rho22", 0.0);
      init_pop[2] = reader.number_or("rho33", 0.0);
    } else {
      throw ScenarioError(sec.line, 1, "unknown section [" + sec.name + "]");
    }
    reader.finish();
  }

  if (!saw_system) throw ScenarioError(1, 1, "missing [system] section");
  if (!saw_ensemble) throw ScenarioError(1, 1, "missing [ensemble] section");
  if (!saw_window) throw ScenarioError(1, 1, "missing [window] section");

  sc.sequence.init_pop = init_pop;
  sc.sequence.pulses = std::move(pulses);
  std::stable_sort(sc.sequence.pulses.begin(), sc.sequence.pulses.end(),
                   [](const Pulse& a, const Pulse& b) { return a.t0_us < b.t0_us; });

  if (sc.dt_out_us <= 0.0)
    throw ScenarioError(1, 1, "key 'dt_out_us' must be > 0");
  sc.system.validate();
  sc.ensemble.validate();
  sc.sequence.validate();
  return sc;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string serialize_scenario(const Scenario& sc) {
  std::string out;
  out += "[system]\n";
  out += "gamma31_khz = " + fmt(sc.system.gamma31_khz) + "\n";
  out += "gamma32_khz = " + fmt(sc.system.gamma32_khz) + "\n";
  out += "gamma21_khz = " + fmt(sc.system.gamma21_khz) + "\n";
  out += "deph13_khz = " + fmt(sc.system.deph13_khz) + "\n";
  out += "deph23_khz = " + fmt(sc.system.deph23_khz) + "\n";
  out += "deph12_khz = " + fmt(sc.system.deph12_khz) + "\n";
  out += "\n[ensemble]\n";
  out += "fwhm_khz = " + fmt(sc.ensemble.fwhm_khz) + "\n";
  out += "span_khz = " + fmt(sc.ensemble.span_khz) + "\n";
  out += "segments = " + std::to_string(sc.ensemble.segments) + "\n";
  out += "spin_fwhm_khz = " + fmt(sc.ensemble.spin_fwhm_khz) + "\n";
  out += "\n[window]\n";
  out += "t_start_us = " + fmt(sc.sequence.t_start_us) + "\n";
  out += "t_end_us = " + fmt(sc.sequence.t_end_us) + "\n";
  out += "dt_out_us = " + fmt(sc.dt_out_us) + "\n";
  out += "\n[init]\n";
  out += "rho11 = " + fmt(sc.sequence.init_pop[0]) + "\n";
  out += "rho22 = " + fmt(sc.sequence.init_pop[1]) + "\n";
  out += "rho33 = " + fmt(sc.sequence.init_pop[2]) + "\n";
  for (const auto& p : sc.sequence.pulses) {
    out += "\n[[pulse]]\n";
    out += std::string("role = ") + to_string(p.role) + "\n";
    out += "channel = " + std::to_string(p.channel) + "\n";
    out += std::string("shape = ") + to_string(p.shape) + "\n";
    out += "t0_us = " + fmt(p.t0_us) + "\n";
    out += "duration_us = " + fmt(p.duration_us) + "\n";
    out += "area_pi = " + fmt(p.area_rad / kPi) + "\n";
    out += "phase_rad = " + fmt(p.phase_rad) + "\n";
    out += "k = " + fmt(p.wavevector[0]) + "," + fmt(p.wavevector[1]) + "," +
           fmt(p.wavevector[2]) + "\n";
  }
  return out;
}

namespace {

double parse_value(std::string_view value, const std::string& key) {
  char* end = nullptr;
  const std::string s(value);
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v))
    throw ModelError("override '" + key + "' has non-numeric value '" + s + "'");
  return v;
}

}  // namespace

void apply_override(Scenario& sc, std::string_view key, std::string_view value) {
  const std::string k(key);
  auto starts = [&](const char* prefix) { return k.rfind(prefix, 0) == 0; };

  std::map<std::string, double*> scalar{
      {"system.gamma31_khz", &sc.system.gamma31_khz},
      {"system.gamma32_khz", &sc.system.gamma32_khz},
      {"system.gamma21_khz", &sc.system.gamma21_khz},
      {"system.deph13_khz", &sc.system.deph13_khz},
      {"system.deph23_khz", &sc.system.deph23_khz},
      {"system.deph12_khz", &sc.system.deph12_khz},
      {"ensemble.fwhm_khz", &sc.ensemble.fwhm_khz},
      {"ensemble.span_khz", &sc.ensemble.span_khz},
      {"ensemble.spin_fwhm_khz", &sc.ensemble.spin_fwhm_khz},
      {"window.t_start_us", &sc.sequence.t_start_us},
      {"window.t_end_us", &sc.sequence.t_end_us},
      {"window.dt_out_us", &sc.dt_out_us},
      {"init.rho11", &sc.sequence.init_pop[0]},
      {"init.rho22", &sc.sequence.init_pop[1]},
      {"init.rho33", &sc.sequence.init_pop[2]},
  };
  if (auto it = scalar.find(k); it != scalar.end()) {
    *it->second = parse_value(value, k);
  } else if (k == "ensemble.segments") {
    sc.ensemble.segments = static_cast<int>(parse_value(value, k));
  } else if (starts("pulse.")) {
    const std::size_t dot = k.find('.', 6);
    if (dot == std::string::npos)
      throw ModelError("override '" + k + "': expected pulse.<ROLE>.<key>");
    const std::string role_str = k.substr(6, dot - 6);
    const std::string field = k.substr(dot + 1);
    const PulseRole role = pulse_role_from_string(role_str);
    Pulse* target = nullptr;
    for (auto& p : sc.sequence.pulses)
      if (p.role == role) target = &p;
    if (target == nullptr)
      throw ModelError("override '" + k + "': no pulse with role " + role_str);
    if (field == "t0_us")
      target->t0_us = parse_value(value, k);
    else if (field == "duration_us")
      target->duration_us = parse_value(value, k);
    else if (field == "area_pi")
      target->area_rad = parse_value(value, k) * kPi;
    else if (field == "phase_rad")
      target->phase_rad = parse_value(value, k);
    else if (field == "channel")
      target->channel = static_cast<int>(parse_value(value, k));
    else if (field == "shape")
      target->shape = pulse_shape_from_string(std::string(value));
    else
      throw ModelError("override '" + k + "': unknown pulse key '" + field + "'");
  } else {
    throw ModelError("unknown override key '" + k + "'");
  }
  revalidate(sc);
}

void revalidate(Scenario& sc) {
  std::stable_sort(sc.sequence.pulses.begin(), sc.sequence.pulses.end(),
                   [](const Pulse& a, const Pulse& b) { return a.t0_us < b.t0_us; });
  if (sc.dt_out_us <= 0.0) throw ModelError("dt_out_us must be > 0");
  sc.system.validate();
  sc.ensemble.validate();
  sc.sequence.validate();
}

const std::vector<std::string>& sweep_parameter_names() {
  static const std::vector<std::string> names = {
      "T_b2_delay",  "area_pi:D",   "area_pi:W",  "area_pi:R",
      "area_pi:B1",  "area_pi:B2",  "fwhm_khz",   "gamma31_khz",
      "gamma32_khz", "gamma21_khz", "deph13_khz", "deph23_khz",
      "deph12_khz"};
  return names;
}

void apply_sweep_parameter(Scenario& sc, const std::string& param, double value) {
  char value_buf[40];
  std::snprintf(value_buf, sizeof(value_buf), "%.17g", value);

  if (param == "T_b2_delay") {
    const Pulse* b1 = sc.sequence.find_role(PulseRole::B1);
    const Pulse* b2 = sc.sequence.find_role(PulseRole::B2);
    if (b1 == nullptr || b2 == nullptr)
      throw ModelError("T_b2_delay sweep needs pulses with roles B1 and B2");
    const double shift = (b1->t0_us + value) - b2->t0_us;
    const double b2_t0 = b2->t0_us;
    for (Pulse& p : sc.sequence.pulses)
      if (p.t0_us >= b2_t0 - 1e-12) p.t0_us += shift;
    sc.sequence.t_end_us += shift;
    revalidate(sc);
    return;
  }
  if (param.rfind("area_pi:", 0) == 0) {
    apply_override(sc, "pulse." + param.substr(8) + ".area_pi", value_buf);
    return;
  }
  if (param == "fwhm_khz") {
    apply_override(sc, "ensemble.fwhm_khz", value_buf);
    return;
  }
  for (const char* rate : {"gamma31_khz", "gamma32_khz", "gamma21_khz",
                           "deph13_khz", "deph23_khz", "deph12_khz"}) {
    if (param == rate) {
      apply_override(sc, std::string("system.") + rate, value_buf);
      return;
    }
  }
  std::string known;
  for (const auto& n : sweep_parameter_names()) known += " " + n;
  throw ModelError("unknown sweep parameter '" + param + "'; valid:" + known);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (const char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ull;
  }
  return hash;
}

}  // namespace lockecho
