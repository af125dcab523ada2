#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "antifrag/certify.hpp"
#include "antifrag/core.hpp"
#include "antifrag/learners.hpp"

namespace antifrag::harness {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kCellsSchema = "cells/1";
inline constexpr std::string_view kReportSchema = "antifrag.report/1";
inline constexpr std::string_view kTraceSchema = "antifrag.trace/1";
inline constexpr std::string_view kConfigSchema = "antifrag.config/1";

enum class Pipeline { run, sweep, certify };

std::string_view to_string(Pipeline p);

struct OutputOptions {
  bool rounds = false;  // rounds.csv with every action and loss
  bool timing = false;  // fill wall_ms (breaks byte-identical cells.csv)
  bool traces = false;  // traces/<cell>.json
};

struct ExperimentConfig {
  std::string name = "experiment";
  Pipeline pipeline = Pipeline::sweep;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string output_dir = "out";

  ActionSpace space = ActionSpace::unit_box(1);
  EnvSpec env;                      // family and structural parameters
  std::vector<double> levels;       // target volatilities of the sweep
  std::size_t horizon = 1024;       // sweep horizon
  std::vector<std::size_t> K_grid{1};
  std::size_t repetitions = 10;

  std::vector<std::size_t> horizons{1024, 4096, 16384};  // certify only
  double volatility_rate = 0.01;                          // certify only

  std::vector<learners::LearnerSpec> learners;
  certify::CertifyOptions certify;
  OutputOptions output;
};

/// Parses and validates a JSON config. Unknown keys are rejected. Throws
/// ErrorCode::validation with a message naming the offending key.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::string& path);

/// Checks cross-field constraints and that every planned environment can be
/// generated. Throws ErrorCode::validation.
void validate(const ExperimentConfig& config);

/// Normalized config with every default filled in; parse_config accepts it.
std::string config_json(const ExperimentConfig& config);

/// 16 hex digits over the normalized config without jobs and output_dir.
std::string config_hash(const ExperimentConfig& config);

struct Plan {
  std::size_t sweep_environments = 0;
  std::size_t horizon_environments = 0;
  std::size_t sweep_rows = 0;    // levels * reps * |K_grid| * |learners|
  std::size_t horizon_rows = 0;  // horizons * reps * |K_grid| * |learners|

  std::size_t rows() const noexcept { return sweep_rows + horizon_rows; }
};

Plan plan(const ExperimentConfig& config, Pipeline pipeline);

struct Outcome {
  std::size_t rows = 0;
  std::size_t aborted_cells = 0;
  bool incomplete = false;
  std::string summary;
  std::vector<std::string> files;
};

/// Runs the pipeline and writes cells.csv, report.json and the optional
/// outputs into config.output_dir. Aborted runs do not stop the pipeline; they
/// mark the outputs incomplete.
Outcome execute(const ExperimentConfig& config, Pipeline pipeline);

/// Registered learners, environment families and their parameter defaults.
std::string registry_text();
std::string registry_json();

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// config_hash, when given, is recorded next to the tool version.
std::string trace_to_json(const EnvironmentTrace& trace, std::string_view config_hash = {});
EnvironmentTrace trace_from_json(std::string_view json_text);
EnvironmentTrace load_trace(const std::string& path);

/// Runs every learner on a stored trace and returns cells.csv-formatted rows.
/// With no config, every registered learner type runs with defaults at K = 1.
std::string replay(const EnvironmentTrace& trace, const ExperimentConfig* config);

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

std::string cells_header();

}  // namespace antifrag::harness
