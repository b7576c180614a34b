#include "seta/gating.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "seta/errors.hpp"

namespace seta {

GateState::GateState(Index dim, int top_k) : dim_(dim), top_k_(top_k) {
  if (dim < 1) throw ConfigError("gate dim must be >= 1");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
}

const Vector& GateState::row(ExpertId id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) throw RegistryError(fmt::format("no gate row for expert {}", id));
  return it->second;
}

Vector& GateState::row(ExpertId id) {
  auto it = rows_.find(id);
  if (it == rows_.end()) throw RegistryError(fmt::format("no gate row for expert {}", id));
  return it->second;
}

void GateState::add(ExpertId id, Vector row) {
  if (rows_.count(id)) throw RegistryError(fmt::format("expert {} already has a gate row", id));
  if (row.size() != dim_) throw ShapeError(fmt::format("gate row has dim {}, expected {}", row.size(), dim_));
  rows_.emplace(id, std::move(row));
  order_.push_back(id);
}

void GateState::remove(ExpertId id) {
  if (!rows_.erase(id)) throw RegistryError(fmt::format("no gate row for expert {}", id));
  order_.erase(std::find(order_.begin(), order_.end(), id));
}

Routing route(const GateState& gate, const Vector& x) {
  if (gate.size() == 0) throw StateError("routing with no registered experts");
  if (x.size() != gate.dim()) throw ShapeError(fmt::format("router input dim {} != {}", x.size(), gate.dim()));
  Routing r;
  r.experts = gate.order();
  const std::size_t n = r.experts.size();
  r.logits.resize(Index(n));
  for (std::size_t i = 0; i < n; ++i) r.logits(Index(i)) = x.dot(gate.row(r.experts[i]));
  const double m = r.logits.maxCoeff();
  r.softmax = (r.logits.array() - m).exp().matrix();
  r.softmax /= r.softmax.sum();

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return r.logits(Index(a)) > r.logits(Index(b)); });
  idx.resize(std::min<std::size_t>(n, std::size_t(gate.top_k())));
  r.active = idx;
  double z = 0.0;
  for (auto i : idx) z += r.softmax(Index(i));
  for (auto i : idx) r.active_weights.push_back(r.softmax(Index(i)) / z);
  return r;
}

GateSplit expand_on_split(GateState& gate, ExpertId parent, std::span<const ExpertId> children) {
  GateSplit s;
  s.parent = parent;
  s.parent_row = gate.row(parent);
  for (std::size_t i = 0; i < children.size(); ++i) {
    if (gate.contains(children[i]) || std::count(children.begin(), children.end(), children[i]) > 1)
      throw RegistryError(fmt::format("child expert {} is already registered", children[i]));
  }
  for (ExpertId c : children) {
    gate.add(c, s.parent_row);
    s.children.push_back(c);
  }
  gate.remove(parent);
  return s;
}

void register_new_expert(GateState& gate, ExpertId id, const GateInitRule& rule) {
  if (rule.kind == GateInit::Copy) {
    gate.add(id, rule.value);
  } else {
    gate.add(id, Vector::Zero(gate.dim()));
  }
}

std::vector<WeightedOverlay> routed_overlays(const Registry& reg, const Routing& r) {
  std::vector<WeightedOverlay> out;
  for (std::size_t k = 0; k < r.active.size(); ++k)
    out.push_back({r.active_weights[k], &reg.at(r.experts[r.active[k]]).deltas});
  return out;
}

Vector taskfree_forward(const BaseModel& base, const Registry& reg, const GateState& gate,
                        const Vector& x, Routing* routing) {
  if (reg.live_ids().empty()) return forward(base, {}, x);
  Routing r = route(gate, x);
  Vector y = forward(base, routed_overlays(reg, r), x);
  if (routing) *routing = std::move(r);
  return y;
}

std::vector<AuditRow> audit_rows(long sample_id, const Routing& r) {
  std::vector<AuditRow> out;
  for (std::size_t i = 0; i < r.experts.size(); ++i) {
    const bool on = std::find(r.active.begin(), r.active.end(), i) != r.active.end();
    out.push_back({sample_id, r.experts[i], r.logits(Index(i)), r.softmax(Index(i)), on});
  }
  return out;
}

void write_routing_audit(std::ostream& os, const std::vector<AuditRow>& rows) {
  os << "sample_id,expert_id,logit,softmax_weight,active_flag\n";
  for (const auto& a : rows)
    os << fmt::format("{},{},{},{},{}\n", a.sample_id, a.expert_id, a.logit, a.softmax_weight, a.active ? 1 : 0);
}

std::vector<AuditRow> read_routing_audit(std::istream& is) {
  std::vector<AuditRow> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "sample_id,expert_id,logit,softmax_weight,active_flag")
        throw ParseError("routing audit: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::stringstream ss(line);
    ss.imbue(std::locale::classic());
    AuditRow a;
    char c1, c2, c3, c4;
    int flag = 0;
    if (!(ss >> a.sample_id >> c1 >> a.expert_id >> c2 >> a.logit >> c3 >> a.softmax_weight >> c4 >> flag) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',' || (flag != 0 && flag != 1))
      throw ParseError(fmt::format("routing audit line {} is malformed", lineno));
    a.active = flag == 1;
    out.push_back(a);
  }
  return out;
}

}  // namespace seta
