#include "seta/sos.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "seta/errors.hpp"

namespace seta {

RawDecomposition raw_decompose(const IndexSet& prev, const IndexSet& curr, int layer) {
  const IndexSet p = prev.in_layer(layer), c = curr.in_layer(layer);
  return {p & c, p - c, c - p};
}

FilterResult apply_filters(const IndexSet& intersection, const IndexSet& remainder,
                           const SosThresholds& t) {
  if (t.tau_ect < 1 || t.tau_trt < 1) throw ConfigError("SoS thresholds must be >= 1");
  if (!(intersection & remainder).empty())
    throw PreconditionError("intersection and remainder overlap");
  FilterResult r{intersection, remainder};
  if (r.shared.size() < std::size_t(t.tau_ect)) {
    r.remainder |= r.shared;
    r.shared.clear();
    r.coincidence_rejected = true;
  }
  // Absorbing into an empty shared part would create sharing from nothing.
  if (!r.shared.empty() && !r.remainder.empty() && r.remainder.size() < std::size_t(t.tau_trt)) {
    r.shared |= r.remainder;
    r.remainder.clear();
    r.remainder_absorbed = true;
  }
  return r;
}

IndexSet ExpertSplit::shared_gain() const {
  IndexSet out;
  for (const auto& l : layers) out |= l.shared_gain;
  return out;
}

IndexSet ExpertSplit::stays_unique() const {
  IndexSet out;
  for (const auto& l : layers) out |= l.stays_unique;
  return out;
}

namespace {

std::vector<int> layers_of(const IndexSet& a, const IndexSet& b) {
  std::vector<int> out;
  for (const auto* s : {&a, &b})
    for (const auto& c : *s)
      if (out.empty() || out.back() != c.layer) out.push_back(c.layer);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

SplitOutcome plan_evolution(const Registry& reg, const IndexSet& curr, const SosThresholds& t) {
  SplitOutcome out;
  const IndexSet prior = reg.owned_union();
  out.new_task = curr - prior;
  if (const ExpertRecord* s = reg.shared()) out.shared_hits = curr & s->owned;
  for (ExpertId id : reg.live_ids()) {
    const ExpertRecord& e = reg.at(id);
    if (e.kind != ExpertKind::Unique || (e.owned & curr).empty()) continue;
    ExpertSplit split;
    split.source = id;
    for (int layer : layers_of(e.owned, curr)) {
      const auto raw = raw_decompose(e.owned, curr, layer);
      if (raw.intersection.empty() && raw.remainder.empty()) continue;
      const auto f = apply_filters(raw.intersection, raw.remainder, t);
      split.layers.push_back({layer, f.shared, f.remainder, f.coincidence_rejected, f.remainder_absorbed});
    }
    out.splits.push_back(std::move(split));
  }
  return out;
}

FormationResult form_experts(Registry& reg, int task_id, const IndexSet& curr,
                             const SplitOutcome& outcome, const Grid& grid) {
  if (reg.task_selections.count(task_id)) throw StateError(fmt::format("task {} already evolved", task_id));
  FormationResult res;
  const IndexSet prior = reg.owned_union();
  if (!(outcome.new_task & prior).empty() || !outcome.new_task.subset_of(curr))
    throw IntegrityError("new-task blocks collide with existing ownership");

  const IndexSet hits = outcome.shared_hits;
  for (const auto& split : outcome.splits) {
    const IndexSet gain = split.shared_gain();
    if (gain.empty()) continue;
    ExpertRecord& parent = reg.at(split.source);
    if (parent.retired || parent.kind != ExpertKind::Unique)
      throw IntegrityError(fmt::format("expert {} cannot be split", split.source));
    const IndexSet keep = split.stays_unique();
    if ((gain | keep) != parent.owned || !(gain & keep).empty())
      throw IntegrityError(fmt::format("split of expert {} does not partition its blocks", split.source));

    SplitEvent ev;
    ev.parent = parent.id;
    const int parent_task = parent.task_id;
    const bool parent_frozen = parent.frozen;
    DeltaOverlay parent_deltas = parent.deltas;
    parent.owned.clear();
    parent.deltas.clear();
    parent.retired = true;

    ExpertRecord* shared = reg.shared();
    if (shared == nullptr) {
      shared = &reg.append(ExpertKind::Shared, 0);
      res.new_shared = shared->id;
      ev.new_children.push_back(shared->id);
    }
    ev.shared_child = shared->id;
    for (const auto& b : gain) {
      const Matrix& w = parent_deltas.at(b);  // inherited bit-exactly
      shared->owned.insert(b);
      shared->deltas.set(b, w);
      shared->anchors[b] = w;
    }
    res.newly_shared |= gain;

    if (!keep.empty()) {
      ExpertRecord& child = reg.append(ExpertKind::Unique, parent_task);
      child.frozen = parent_frozen;
      child.owned = keep;
      for (const auto& b : keep) child.deltas.set(b, parent_deltas.at(b));
      ev.unique_child = child.id;
      ev.new_children.push_back(child.id);
    }
    res.splits.push_back(std::move(ev));
  }

  if (ExpertRecord* shared = reg.shared()) {
    if (!res.newly_shared.empty()) bump_share_counts(*shared, res.newly_shared);
    if (!hits.empty()) bump_share_counts(*shared, hits);
  }

  if (!outcome.new_task.empty()) {
    ExpertRecord& u = reg.append(ExpertKind::Unique, task_id);
    u.owned = outcome.new_task;
    u.deltas = DeltaOverlay::zeros(grid, outcome.new_task);
    res.new_unique = u.id;
  }
  reg.task_selections[task_id] = curr;
  return res;
}

std::vector<GrowthPoint> growth_curve(const std::vector<IndexSet>& selections,
                                      const SosThresholds& t, CapacityLedger* ledger) {
  if (selections.size() < 2) throw PreconditionError("growth curve needs at least 2 tasks");
  int rows = 1, cols = 1, layers = 1;
  for (const auto& s : selections)
    for (const auto& b : s) {
      if (b.layer < 0 || b.row < 0 || b.col < 0) throw ShapeError("negative block coordinate in trace");
      layers = std::max(layers, b.layer + 1);
      rows = std::max(rows, b.row + 1);
      cols = std::max(cols, b.col + 1);
    }
  const Grid grid(std::vector<LayerDims>(std::size_t(layers), LayerDims{rows, cols}), 1);

  Registry reg;
  std::vector<GrowthPoint> out;
  long independent = 0;
  for (std::size_t i = 0; i < selections.size(); ++i) {
    const int task = int(i) + 1;
    if (task == 1) {
      init_first_task(reg, selections[i], grid);
    } else {
      const auto plan = plan_evolution(reg, selections[i], t);
      form_experts(reg, task, selections[i], plan, grid);
      freeze_history(reg, task);
    }
    independent += long(selections[i].size());
    const CapacityRow row = capacity_snapshot(reg, task);
    if (ledger) ledger->rows.push_back(row);
    out.push_back({task, row.total, independent});
  }
  return out;
}

void write_ledger_csv(std::ostream& os, const CapacityLedger& ledger) {
  std::size_t width = 0;
  for (const auto& r : ledger.rows) width = std::max(width, r.unique.size());
  os << "step,total,shared";
  for (std::size_t t = 1; t <= width; ++t) os << ",unique_t" << t;
  os << "\n";
  for (const auto& r : ledger.rows) {
    os << r.step << "," << r.total << "," << r.shared;
    for (std::size_t t = 0; t < width; ++t) os << "," << (t < r.unique.size() ? r.unique[t] : 0);
    os << "\n";
  }
}

CapacityLedger read_ledger_csv(std::istream& is) {
  CapacityLedger out;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.rfind("step,total,shared", 0) != 0) throw ParseError("ledger CSV: unexpected header");
      header = true;
      continue;
    }
    std::vector<long> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stol(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(fmt::format("ledger CSV line {}: bad integer '{}'", lineno, cell));
      }
    }
    if (v.size() < 3) throw ParseError(fmt::format("ledger CSV line {}: too few fields", lineno));
    CapacityRow r;
    r.step = int(v[0]);
    r.task_added = int(v[0]);
    r.total = v[1];
    r.shared = v[2];
    r.unique.assign(v.begin() + 3, v.end());
    out.rows.push_back(std::move(r));
  }
  return out;
}

}  // namespace seta
