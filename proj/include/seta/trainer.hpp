#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "seta/blockgrid.hpp"
#include "seta/capacity.hpp"
#include "seta/experts.hpp"
#include "seta/gating.hpp"
#include "seta/metrics.hpp"
#include "seta/nanonet.hpp"
#include "seta/sos.hpp"
#include "seta/tasks.hpp"

namespace seta {

enum class Optimizer { Sgd, Momentum };
enum class GateInitMode { Zero, Prototype };

struct TrainConfig {
  double learning_rate = 0.1;
  double lr_warmup_fraction = 0.2;         // linear LR ramp over the task's steps
  double selection_warmup_fraction = 1.0;  // share of batches in the warm-up round (1 = one full pass)
  int epochs_per_task = 10;
  int batch_size = 16;
  double lambda = 0.1;
  std::uint64_t seed = 7;
  Optimizer optimizer = Optimizer::Sgd;
  double momentum = 0.9;
  double gate_learning_rate = 0.1;
  GateInitMode gate_init = GateInitMode::Prototype;
  double gate_init_scale = 1.0;
  bool check_gradients = true;
  double fd_step = 1e-5;
  double fd_tolerance = 1e-4;
  int fd_samples = 8;

  void validate() const;
};

struct SetaConfig {
  SelectionConfig selection;
  SosThresholds sos;
  int top_k = 2;
  TrainConfig train;
};

// Active experts per sample, reused to hold top-k selection fixed while probing.
using PinnedRouting = std::vector<std::vector<std::size_t>>;

struct CompositeLoss {
  double loss = 0.0;
  double data = 0.0;
  double penalty = 0.0;
  std::map<BlockCoord, Matrix> data_grad;     // trainable blocks only
  std::map<BlockCoord, Matrix> penalty_grad;  // shared blocks only
  std::map<ExpertId, Vector> gate_grad;       // every registered row
};

// Mean data NLL under the routed superposition plus the shared-block anchoring term.
CompositeLoss composite_loss(std::span<const Sample> batch, TaskKind kind, const BaseModel& base,
                             const Registry& reg, const GateState& gate, const IndexSet& trainable,
                             double lambda, const PinnedRouting* pinned = nullptr,
                             PinnedRouting* record = nullptr);

struct RunState {
  const BaseModel* base = nullptr;
  Registry registry;
  GateState gate;
  int tasks_done = 0;
};

struct TaskReport {
  int task_id = 0;
  IndexSet selection;
  std::vector<TraceRecord> trace;
  std::vector<GateSplit> gate_splits;
  std::optional<ExpertId> new_unique;
  double fd_error = -1.0;  // < 0 when not checked
  double final_loss = 0.0;
  double shared_drift = 0.0;  // ||dW_s - dW*_s||_F before re-anchoring
  double wall_seconds = 0.0;
  CapacityRow capacity;
  std::vector<double> accuracy;  // on tasks 1..t
};

// Hooks for audits; default no-ops.
class RunObserver {
 public:
  virtual ~RunObserver() = default;
  virtual void on_gate_split(const GateState&, const GateSplit&) {}
  virtual void before_optimize(const RunState&, const TaskReport&) {}
  virtual void after_optimize(const RunState&, const TaskReport&) {}
};

RunState start_run(const BaseModel& base, const SetaConfig& cfg);
TaskReport run_task(RunState& state, const TaskData& task, std::span<const TaskData> seen,
                    const SetaConfig& cfg, RunObserver* observer = nullptr);

struct RunResult {
  AccuracyMatrix accuracy;
  CapacityLedger ledger;
  std::vector<TaskReport> reports;
  RunState state;
  std::vector<TraceRecord> trace;
};

RunResult run_sequence(const BaseModel& base, const std::vector<TaskData>& tasks, const SetaConfig& cfg,
                       RunObserver* observer = nullptr);

double evaluate(const BaseModel& base, const Registry& reg, const GateState& gate, const TaskData& task);
double evaluate_overlay(const BaseModel& base, const DeltaOverlay& delta, const TaskData& task);

struct BaselineResult {
  AccuracyMatrix accuracy;
  CapacityLedger ledger;
  std::vector<TraceRecord> trace;
  DeltaOverlay delta;
};

// Trains one delta on `support` for one task. Returns the mean loss of the last epoch.
// `stream` names the shuffle substream; `anchor` adds the uniform pull used by EWC-lite.
double fit_overlay(const BaseModel& base, const TaskData& task, const IndexSet& support, DeltaOverlay& delta,
                   const TrainConfig& tc, int stream, const DeltaOverlay* anchor = nullptr,
                   double pull_lambda = 0.0);

BaselineResult baseline_seq_train(const BaseModel& base, const std::vector<TaskData>& tasks,
                                  const SetaConfig& cfg);
// Uniform pull toward the previous task's final deltas; ewc_lambda = 0 is Seq-Train.
BaselineResult baseline_ewc_lite(const BaseModel& base, const std::vector<TaskData>& tasks,
                                 const SetaConfig& cfg, double ewc_lambda);

// Warm-up importance: per-block mean |entry| of the gradient of the mean loss over the warm-up batches.
ImportanceMap warmup_importance(const BaseModel& base, const TaskData& task, const TrainConfig& cfg,
                                const std::function<std::vector<WeightedOverlay>(const Vector&)>& overlays);

}  // namespace seta
