#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rieszwb/scenario.hpp"

#ifndef RIESZWB_SCENARIO_DIR
#define RIESZWB_SCENARIO_DIR "scenarios"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
  std::string scenario;
  std::string output;
  std::optional<double> tol;
  std::optional<long> max_iter;
  std::optional<int> resolution;
  std::optional<int> threads;
  bool trace = false;
  bool normalize = false;
};

fs::path scenario_dir() {
  if (const char* env = std::getenv("RIESZWB_SCENARIO_DIR"); env && *env) return env;
  return RIESZWB_SCENARIO_DIR;
}

// A bare name resolves against the bundled scenario directory.
std::string resolve(const std::string& arg) {
  if (fs::exists(arg)) return arg;
  fs::path p = scenario_dir() / arg;
  if (fs::exists(p)) return p.string();
  p += ".json";
  if (fs::exists(p)) return p.string();
  return arg;
}

void emit(const json& report, const std::vector<std::pair<std::string, std::string>>& files, const std::string& name,
          const std::string& output) {
  const std::string text = report.dump(2) + "\n";
  if (output.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(output);
  const fs::path base = fs::path(output) / (name.empty() ? std::string("error") : name);
  std::ofstream(base.string() + ".json") << text;
  for (const auto& [suffix, content] : files) std::ofstream(base.string() + suffix) << content;
  std::cerr << "wrote " << base.string() << ".json\n";
}

int fail(const std::string& message, const std::string& field, const std::string& name, const std::string& task,
         const std::string& output) {
  std::cerr << "error: " << message << "\n";
  emit(rieszwb::error_report(message, field, name, task), {}, name, output);
  return rieszwb::exit_code(rieszwb::RunStatus::error);
}

int run(const Flags& f, const std::string& required_task) {
  rieszwb::Scenario s;
  try {
    s = rieszwb::load_scenario(resolve(f.scenario));
    rieszwb::apply_overrides(s, {f.tol, f.max_iter, f.resolution, f.threads});
  } catch (const rieszwb::ScenarioError& e) {
    return fail(e.what(), e.field(), "", "", f.output);
  }
  if (!required_task.empty() && s.task != required_task)
    return fail("scenario task is '" + s.task + "', expected '" + required_task + "'", "task", s.name, s.task,
                f.output);
  const std::string output = !f.output.empty() ? f.output : s.output.value_or("");
  const rieszwb::RunOutput out = rieszwb::run_scenario(s, {f.trace, f.normalize});
  if (out.status == rieszwb::RunStatus::error && out.report.contains("error"))
    std::cerr << "error: " << out.report["error"]["message"].get<std::string>() << "\n";
  emit(out.report, out.files, s.name, output);
  return rieszwb::exit_code(out.status);
}

std::vector<fs::path> bundled() {
  std::vector<fs::path> files;
  if (fs::is_directory(scenario_dir()))
    for (const auto& e : fs::directory_iterator(scenario_dir()))
      if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

int list() {
  const auto files = bundled();
  if (files.empty()) {
    std::cerr << "no scenarios in " << scenario_dir().string() << "\n";
    return 1;
  }
  for (const auto& p : files) {
    try {
      const auto s = rieszwb::load_scenario(p.string());
      std::cout << s.name << "\t" << s.task << "\t" << s.description << "\n";
    } catch (const std::exception& e) {
      std::cout << p.stem().string() << "\tinvalid\t" << e.what() << "\n";
    }
  }
  return 0;
}

int validate(const std::vector<std::string>& paths) {
  std::vector<std::string> targets = paths;
  if (targets.empty())
    for (const auto& p : bundled()) targets.push_back(p.string());
  if (targets.empty()) {
    std::cerr << "nothing to validate\n";
    return 1;
  }
  int code = 0;
  for (const auto& t : targets) {
    try {
      const auto s = rieszwb::load_scenario(resolve(t));
      std::cout << "ok\t" << t << "\t" << s.task << "\n";
    } catch (const rieszwb::ScenarioError& e) {
      std::cout << "invalid\t" << t << "\t" << e.what() << "\n";
      code = 1;
    }
  }
  return code;
}

void add_run_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("-s,--scenario", f.scenario, "Scenario file or bundled scenario name")
      ->required()
      ->envname("RIESZWB_SCENARIO");
  cmd->add_option("-o,--output", f.output, "Directory for the report and CSV files (default: stdout)")
      ->envname("RIESZWB_OUTPUT");
  cmd->add_option("--tol", f.tol, "Solver tolerance")->envname("RIESZWB_TOL");
  cmd->add_option("--max-iter", f.max_iter, "Solver iteration cap")->envname("RIESZWB_MAX_ITER");
  cmd->add_option("--resolution", f.resolution, "Discretization resolution")->envname("RIESZWB_RESOLUTION");
  cmd->add_option("--threads", f.threads, "Threads for kernel assembly")->envname("RIESZWB_THREADS");
  cmd->add_flag("--trace", f.trace, "Write solver traces as CSV")->envname("RIESZWB_TRACE");
  cmd->add_flag("--normalize-report", f.normalize, "Omit timestamps and timings")
      ->envname("RIESZWB_NORMALIZE_REPORT");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Riesz potential solvers: equilibrium, balayage and Gauss variational problems"};
  app.require_subcommand(1);
  Flags flags;
  std::vector<std::string> validate_paths;

  CLI::App* run_cmd = app.add_subcommand("run", "Run a scenario of any task");
  add_run_flags(run_cmd, flags);
  std::vector<std::pair<CLI::App*, std::string>> task_cmds;
  for (const auto& t : rieszwb::task_names()) {
    CLI::App* c = app.add_subcommand(t, "Run a '" + t + "' scenario");
    add_run_flags(c, flags);
    task_cmds.emplace_back(c, t);
  }
  CLI::App* list_cmd = app.add_subcommand("list", "List bundled scenarios");
  CLI::App* validate_cmd = app.add_subcommand("validate", "Validate scenarios without running them");
  validate_cmd->add_option("paths", validate_paths, "Scenario files (default: all bundled)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (*list_cmd) return list();
  if (*validate_cmd) return validate(validate_paths);
  if (*run_cmd) return run(flags, "");
  for (const auto& [cmd, task] : task_cmds)
    if (*cmd) return run(flags, task);
  return 1;
}
