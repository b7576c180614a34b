#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seta/blockgrid.hpp"
#include "seta/nanonet.hpp"

namespace seta {

enum class TaskKind { Classification, Regression };

struct TaskSpec {
  int task_id = 1;
  TaskKind kind = TaskKind::Classification;
  int n_classes = 8;
  IndexSet planted_blocks;  // explicit support; drawn at random when empty
  int planted_count = 8;
  std::map<int, double> overlap_with;  // earlier task id -> fraction of this support
  int n_train = 1024;
  int n_eval = 512;
  double noise_std = 0.0;
};

// Shape of the synthetic world. The last `context_blocks` input blocks carry a
// per-task signature that the frozen base ignores; the router can read it.
struct BenchmarkGeometry {
  int dim = 32;
  int hidden_layers = 2;
  int block_size = 4;
  int n_classes = 8;
  int context_blocks = 1;
  double base_diag = 1.0;
  double base_scale = 0.3;
  double readout_gain = 3.0;
  double delta_scale = 0.5;
  double signature_norm = 3.0;
  double context_noise = 0.3;
  double label_margin = 1.0;  // classification inputs are redrawn until the teacher's top-2 logit gap reaches this

  int context_dims() const { return context_blocks * block_size; }
};

struct Sample {
  Vector x;
  double y = 0.0;

  int label() const { return static_cast<int>(y); }
};

using Dataset = std::vector<Sample>;

struct TaskData {
  TaskSpec spec;
  Dataset train;
  Dataset eval;
  IndexSet planted;
  DeltaOverlay teacher;
  Vector signature;
};

BaseModel generate_base(const BenchmarkGeometry& geo, std::uint64_t seed);
// Blocks a planted support may use: hidden layers, content columns only.
IndexSet plantable_blocks(const BaseModel& base, const BenchmarkGeometry& geo);

std::vector<TaskData> generate_sequence(const BaseModel& base, const BenchmarkGeometry& geo,
                                        const std::vector<TaskSpec>& specs, std::uint64_t seed,
                                        std::vector<std::string>* warnings = nullptr);

// overlaps[i] is the overlap of task i+2 with task i+1.
std::vector<TaskSpec> chain_specs(int tasks, const std::vector<double>& overlaps, int planted_count,
                                  int n_train, int n_eval, double noise_std,
                                  TaskKind kind = TaskKind::Classification, int n_classes = 8);

// Teacher output for one input (used for labels and sanity checks).
Vector teacher_output(const BaseModel& base, const TaskData& task, const Vector& x);

struct LoadedDataset {
  Dataset samples;
  std::optional<Index> dim;
  std::vector<std::string> warnings;
};

LoadedDataset load_jsonl(const std::filesystem::path& path);
LoadedDataset parse_jsonl(std::istream& is, const std::string& source = "<stream>");
void write_jsonl(std::ostream& os, const Dataset& data, TaskKind kind);

}  // namespace seta
