#pragma once

#include "aphase/lp_solver.hpp"
#include "aphase/phase.hpp"
#include "aphase/splitting.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace aphase {

struct FiberInputs {
  double radius = 0.05;
  int count = 9;
  double s = 1.0;
};

/// Fully resolved experiment description. `resolved` echoes it with every default filled in.
struct ExperimentConfig {
  std::string system_name;
  std::map<std::string, double> params;
  std::string experiment;  // phase | fiber | verify | constants | sweep
  std::vector<Vec> points;
  FiberInputs fiber;
  std::size_t max_rows = 1000000;
  SolverConfig solver;
  PhaseConfig phase;
  SplittingOptions splitting;
  ConstantsOptions constants;
  ConstantOverrides overrides;
  double R_init = 0.5;
  std::filesystem::path output = "out";
  std::uint64_t seed = 0;
  int workers = 1;
  nlohmann::ordered_json resolved;
};

/// Strict parse: unknown keys throw ConfigError naming the key.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Re-resolves after command-line overrides.
void apply_overrides(ExperimentConfig& cfg, const std::optional<std::string>& out, std::optional<int> workers,
                     std::optional<std::uint64_t> seed);

enum class ExitCode : int { Ok = 0, Usage = 1, VerificationFailed = 2, NotHyperbolic = 3 };

struct RunOutcome {
  ExitCode code = ExitCode::Ok;
  nlohmann::ordered_json report;
};

/// Runs the experiment and writes report.json plus CSV tables into cfg.output.
RunOutcome run_experiment(const ExperimentConfig& cfg);

/// RFC 4180 CSV with CRLF line endings and a mandatory header.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(std::vector<std::string> row);
  std::string str() const;
  void write(const std::filesystem::path& path) const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// %.17g
std::string format_double(double v);

}  // namespace aphase
