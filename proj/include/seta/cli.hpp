#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "seta/tasks.hpp"
#include "seta/trainer.hpp"

namespace seta {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitMissing = 4;

struct ExperimentConfig {
  BenchmarkGeometry geometry;
  SetaConfig seta;
  int tasks = 6;
  TaskKind kind = TaskKind::Classification;
  int planted = 8;
  std::vector<double> overlaps{0.3, 0.45, 0.6, 0.4, 0.5};
  int n_train = 1024;
  int n_eval = 512;
  double noise = 0.0;
  std::vector<std::string> train_files;  // optional JSONL datasets, one per task
  std::vector<std::string> eval_files;
  double ewc_lambda = 1.0;
  std::string out_dir = "runs/default";

  void validate() const;
};

// Flat "section.key = value" lines; '#' starts a comment. Unknown keys are errors.
ExperimentConfig parse_config(std::istream& is, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical dump, parseable by parse_config.
std::string render_config(const ExperimentConfig& cfg);

struct Workload {
  BaseModel base;
  std::vector<TaskData> tasks;
  std::vector<std::string> warnings;
};

Workload build_workload(const ExperimentConfig& cfg, const std::filesystem::path& config_dir = {});

struct RunOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::string method;  // baseline only
};

int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err);
int cmd_baseline(const RunOptions& opt, std::ostream& out, std::ostream& err);
int cmd_verify_fixtures(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);
int cmd_report(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err);

// Directory holding the bundled fixtures and configs.
std::filesystem::path default_data_dir();

int cli_main(int argc, char** argv);

}  // namespace seta
