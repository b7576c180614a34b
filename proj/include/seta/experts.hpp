#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "seta/blockgrid.hpp"
#include "seta/capacity.hpp"
#include "seta/nanonet.hpp"

namespace seta {

using ExpertId = int;

enum class ExpertKind { Unique, Shared };

struct ExpertRecord {
  ExpertId id = -1;
  ExpertKind kind = ExpertKind::Unique;
  int task_id = 0;  // owning task of a Unique expert; 0 for Shared
  IndexSet owned;
  DeltaOverlay deltas;
  bool frozen = false;
  bool retired = false;  // split into children; kept so ids stay append-only
  std::map<BlockCoord, Matrix> anchors;
  std::map<BlockCoord, int> share_count;

  std::string label() const;
};

class Registry {
 public:
  bool empty() const { return experts_.empty(); }
  std::size_t size() const { return experts_.size(); }
  const std::deque<ExpertRecord>& experts() const { return experts_; }

  ExpertRecord& append(ExpertKind kind, int task_id);
  ExpertRecord& at(ExpertId id);
  const ExpertRecord& at(ExpertId id) const;
  ExpertRecord* shared();
  const ExpertRecord* shared() const;
  std::vector<ExpertId> live_ids() const;
  IndexSet owned_union() const;
  int last_task() const;

  // Throws IntegrityError describing the first violated invariant.
  void check_invariants() const;

  std::map<int, IndexSet> task_selections;

 private:
  std::deque<ExpertRecord> experts_;
};

ExpertId init_first_task(Registry& reg, const IndexSet& p1, const Grid& grid);
void freeze_history(Registry& reg, int current_task);
// Newcomers start at n_j = 2, known blocks gain one.
void bump_share_counts(ExpertRecord& shared, const IndexSet& newly_intersected);
void set_anchors(ExpertRecord& shared);
// lambda * sum_j n_j * ||dW_j - dW*_j||_F^2 over the shared expert's blocks.
double anchoring_penalty(const ExpertRecord& shared, double lambda);
CapacityRow capacity_snapshot(const Registry& reg, int step);

// Concatenated block arrays in coordinate order (the on-disk delta layout).
std::string serialize_deltas(const ExpertRecord& e);

void save_registry(const Registry& reg, const std::filesystem::path& dir);
Registry load_registry(const std::filesystem::path& dir, const Grid& grid);

}  // namespace seta
