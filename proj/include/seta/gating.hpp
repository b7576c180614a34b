#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "seta/experts.hpp"
#include "seta/nanonet.hpp"

namespace seta {

class GateState {
 public:
  GateState() = default;
  GateState(Index dim, int top_k);

  Index dim() const { return dim_; }
  int top_k() const { return top_k_; }
  std::size_t size() const { return order_.size(); }
  const std::vector<ExpertId>& order() const { return order_; }
  bool contains(ExpertId id) const { return rows_.count(id) > 0; }
  const Vector& row(ExpertId id) const;
  Vector& row(ExpertId id);

  void add(ExpertId id, Vector row);
  void remove(ExpertId id);

 private:
  Index dim_ = 0;
  int top_k_ = 2;
  std::map<ExpertId, Vector> rows_;
  std::vector<ExpertId> order_;  // registration order, append-only
};

struct Routing {
  std::vector<ExpertId> experts;  // registration order
  Vector logits;
  Vector softmax;
  std::vector<std::size_t> active;     // indices into experts, best first
  std::vector<double> active_weights;  // softmax renormalised over the active set
};

// Active set = top min(top_k, N) logits; ties go to the earlier registration.
Routing route(const GateState& gate, const Vector& x);

struct GateSplit {
  ExpertId parent = -1;
  Vector parent_row;
  std::vector<ExpertId> children;
};

// Children get bit copies of the parent row; the parent row is dropped.
GateSplit expand_on_split(GateState& gate, ExpertId parent, std::span<const ExpertId> children);

enum class GateInit { Zero, Copy };

struct GateInitRule {
  GateInit kind = GateInit::Zero;
  Vector value;  // used by Copy
};

void register_new_expert(GateState& gate, ExpertId id, const GateInitRule& rule = {});

// Content-routed superposition of the live experts; no task id on this path.
std::vector<WeightedOverlay> routed_overlays(const Registry& reg, const Routing& r);
Vector taskfree_forward(const BaseModel& base, const Registry& reg, const GateState& gate,
                        const Vector& x, Routing* routing = nullptr);

struct AuditRow {
  long sample_id = 0;
  ExpertId expert_id = -1;
  double logit = 0.0;
  double softmax_weight = 0.0;
  bool active = false;
};

std::vector<AuditRow> audit_rows(long sample_id, const Routing& r);
void write_routing_audit(std::ostream& os, const std::vector<AuditRow>& rows);
std::vector<AuditRow> read_routing_audit(std::istream& is);

}  // namespace seta
