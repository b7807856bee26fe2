// Scenario files: a small UTF-8 "key = value" format with [section]
// headers and repeated [[pulse]] blocks. parse_scenario validates
// everything up front and applies documented defaults; serialize_scenario
// writes the fully resolved configuration back out in canonical form, so
// parse -> serialize -> parse is the identity.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lockecho/model.hpp"

namespace lockecho {

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(int line, int col, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ", col " +
                           std::to_string(col) + ": " + msg),
        line_(line),
        col_(col) {}

  int line() const { return line_; }
  int col() const { return col_; }

 private:
  int line_;
  int col_;
};

// Fully resolved run configuration.
struct Scenario {
  SystemParams system;
  EnsembleSpec ensemble;
  PulseSequence sequence;  // carries the window and initial populations
  double dt_out_us = 0.05;
};

Scenario parse_scenario(std::string_view text);

std::string serialize_scenario(const Scenario& sc);

// Applies a single "section.key=value" override (pulses are addressed as
// pulse.<ROLE>.<key>), then revalidates. Throws ModelError on unknown
// keys or invalid values.
void apply_override(Scenario& sc, std::string_view key, std::string_view value);

// Sweepable parameters: T_b2_delay, area_pi:<ROLE>, fwhm_khz, and any
// relaxation rate. T_b2_delay repositions B2 to t(B1) + value; every
// later pulse and the window end shift along with it, so the read pulse
// keeps its separation and the echo keeps its margin.
const std::vector<std::string>& sweep_parameter_names();
void apply_sweep_parameter(Scenario& sc, const std::string& param, double value);

// Re-sorts pulses by t0 and revalidates every invariant. Needed after
// overrides that move pulses in time.
void revalidate(Scenario& sc);

// FNV-1a 64-bit hash; stable across platforms for identical bytes.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace lockecho
