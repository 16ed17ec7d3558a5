#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rieszwb/gauss.hpp"

namespace rieszwb {

inline constexpr const char* kReportSchemaVersion = "1.0";

// Validation failure; `field` is the JSON path of the offending entry.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

const std::vector<std::string>& task_names();

struct Scenario {
  std::string name;
  std::string description;
  std::string task;
  SetDescriptor set;
  nlohmann::json set_json;
  double alpha = 2.0;
  int resolution = 8;
  nlohmann::json params = nlohmann::json::object();
  SolveSettings settings;
  std::optional<std::string> output;
};

// Parses and validates (descriptor, alpha, task parameters); throws ScenarioError.
Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);

struct Overrides {
  std::optional<double> tol;
  std::optional<long> max_iter;
  std::optional<int> resolution;
  std::optional<int> threads;
};

void apply_overrides(Scenario& s, const Overrides& o);

struct RunOptions {
  bool trace = false;
  bool normalize = false;
};

enum class RunStatus { ok, inconclusive, error };
std::string to_string(RunStatus s);
int exit_code(RunStatus s);

struct RunOutput {
  RunStatus status = RunStatus::ok;
  nlohmann::json report;
  // Extra files keyed by suffix (".csv", "_trace_0.csv", ...).
  std::vector<std::pair<std::string, std::string>> files;
};

RunOutput run_scenario(const Scenario& s, const RunOptions& opt = {});

nlohmann::json error_report(const std::string& message, const std::string& field, const std::string& scenario,
                            const std::string& task);

}  // namespace rieszwb
