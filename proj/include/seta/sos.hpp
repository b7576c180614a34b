#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "seta/blockgrid.hpp"
#include "seta/capacity.hpp"
#include "seta/experts.hpp"

namespace seta {

struct SosThresholds {
  int tau_ect = 2;  // minimum intersection that counts as real sharing
  int tau_trt = 2;  // remainders smaller than this are absorbed
};

struct RawDecomposition {
  IndexSet intersection;  // prev ∩ curr
  IndexSet remainder;     // prev ∖ curr
  IndexSet exclusive;     // curr ∖ prev
};

RawDecomposition raw_decompose(const IndexSet& prev, const IndexSet& curr, int layer);

struct FilterResult {
  IndexSet shared;
  IndexSet remainder;
  bool coincidence_rejected = false;  // intersection too small, folded back
  bool remainder_absorbed = false;    // tiny remainder moved into the shared part
};

FilterResult apply_filters(const IndexSet& intersection, const IndexSet& remainder,
                           const SosThresholds& thresholds);

struct LayerSplit {
  int layer = 0;
  IndexSet shared_gain;
  IndexSet stays_unique;
  bool coincidence_rejected = false;
  bool remainder_absorbed = false;
};

// Evolution plan for one prior unique expert.
struct ExpertSplit {
  ExpertId source = -1;
  std::vector<LayerSplit> layers;

  IndexSet shared_gain() const;
  IndexSet stays_unique() const;
};

struct SplitOutcome {
  std::vector<ExpertSplit> splits;
  IndexSet new_task;     // curr blocks nobody owned before
  IndexSet shared_hits;  // curr blocks already held by the shared expert
};

SplitOutcome plan_evolution(const Registry& reg, const IndexSet& curr, const SosThresholds& thresholds);

struct SplitEvent {
  ExpertId parent = -1;
  std::vector<ExpertId> new_children;  // children created by this split
  std::optional<ExpertId> unique_child;
  ExpertId shared_child = -1;
};

struct FormationResult {
  std::vector<SplitEvent> splits;
  std::optional<ExpertId> new_unique;
  std::optional<ExpertId> new_shared;  // set when this step created the shared expert
  IndexSet newly_shared;
};

FormationResult form_experts(Registry& reg, int task_id, const IndexSet& curr,
                             const SplitOutcome& outcome, const Grid& grid);

struct GrowthPoint {
  int step = 0;
  long sos_total = 0;
  long independent_total = 0;
};

// Replays set-level evolution over a selection trace (weights irrelevant).
std::vector<GrowthPoint> growth_curve(const std::vector<IndexSet>& selections,
                                      const SosThresholds& thresholds, CapacityLedger* ledger = nullptr);

void write_ledger_csv(std::ostream& os, const CapacityLedger& ledger);
CapacityLedger read_ledger_csv(std::istream& is);

}  // namespace seta
