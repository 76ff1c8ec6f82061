#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "duotilt/duotilt.hpp"

namespace duotilt::harness {

inline constexpr int kSchemaVersion = 1;

/// Config problem; line is 1-based, 0 when unknown.
struct ConfigError : std::runtime_error {
  ConfigError(const std::string& what, int line_no)
      : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + what : what),
        line(line_no) {}
  int line;
};

struct EventConfig {
  // heston
  double ratio = 1.08;
  int steps = 10;
  // sird: barrier as a fraction of N0
  double barrier_fraction = 0.3325;
  int horizon = 100;
  // var_garch
  double b0 = -0.15;
  double b1 = -0.25;
  int T = 5;
  int conditioning = 0;
  int target = 1;
  bool conditional = true;  // also estimate the passage probability and the ratio
};

struct Sweep {
  std::string param;
  std::vector<double> values;
  std::string method = "two_stage";
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string preset;
  std::string model;  // heston | sird | var_garch
  HestonParams heston;
  SirdParams sird;
  VarGarchParams var_garch;
  EventConfig event;
  std::string link = "default";  // default | lan (var_garch)
  std::vector<std::string> methods;
  std::size_t samples = 100000;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  std::string output = "out";
  SgdConfig sgd;
  bool pilot_auto = false;  // sird: seed stage 1 at the deterministic pilot tilt
  CovarOptions covar;
  std::optional<Sweep> sweep;
  std::string source;  // canonical text the manifest hash is taken over

  void validate() const;
};

/// Preset defaults (model, event, methods, sgd).
ExperimentConfig preset_config(const std::string& name);

/// Parses YAML text; errors carry line numbers.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Sets a sweepable parameter (model or event field) by name.
void apply_param(ExperimentConfig& cfg, const std::string& name, double value);

struct SummaryRow {
  EstimateSummary summary;
  std::optional<EfficiencyReport> efficiency;
};

struct SweepRow {
  double param = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  double elapsed_s = 0.0;
};

struct RunReport {
  std::vector<SummaryRow> rows;
  std::vector<SweepRow> sweep;
  nlohmann::json jobs = nlohmann::json::object();  // method -> array of job records
  std::vector<std::pair<std::string, std::string>> traces;  // file name, csv
  int failed_jobs = 0;
};

RunReport run_experiment(const ExperimentConfig& cfg);

/// summary.csv, <method>.json, trace_*.csv, sweep.csv (with a sweep), manifest.json.
void write_report(const RunReport& report, const ExperimentConfig& cfg,
                  const std::filesystem::path& dir);

std::string summary_csv(const RunReport& report);
std::uint64_t fnv1a(const std::string& s);

}  // namespace duotilt::harness
