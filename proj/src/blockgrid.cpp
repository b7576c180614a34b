#include "seta/blockgrid.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "seta/errors.hpp"

namespace seta {

std::string to_string(const BlockCoord& b) {
  return fmt::format("({},{},{})", b.layer, b.row, b.col);
}

IndexSet IndexSet::in_layer(int layer) const {
  IndexSet out;
  auto it = blocks_.lower_bound(BlockCoord{layer, 0, 0});
  for (; it != blocks_.end() && it->layer == layer; ++it) out.blocks_.insert(out.blocks_.end(), *it);
  return out;
}

bool IndexSet::subset_of(const IndexSet& other) const {
  return std::includes(other.begin(), other.end(), begin(), end());
}

IndexSet operator|(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::inserter(out.blocks_, out.blocks_.end()));
  return out;
}

IndexSet operator&(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::inserter(out.blocks_, out.blocks_.end()));
  return out;
}

IndexSet operator-(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                      std::inserter(out.blocks_, out.blocks_.end()));
  return out;
}

IndexSet& IndexSet::operator|=(const IndexSet& other) {
  blocks_.insert(other.begin(), other.end());
  return *this;
}

Grid::Grid(std::vector<LayerDims> dims, int block_size) : block_size_(block_size) {
  if (block_size < 1) throw ConfigError(fmt::format("block size must be >= 1, got {}", block_size));
  if (dims.empty()) throw ConfigError("grid needs at least one layer");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const auto& d = dims[i];
    if (d.rows < 1 || d.cols < 1)
      throw ConfigError(fmt::format("layer {} has non-positive dims {}x{}", i, d.rows, d.cols));
    LayerGrid g;
    g.dims = d;
    g.block_rows = static_cast<int>((d.rows + block_size - 1) / block_size);
    g.block_cols = static_cast<int>((d.cols + block_size - 1) / block_size);
    layers_.push_back(g);
  }
}

const LayerGrid& Grid::layer(int l) const {
  if (l < 0 || l >= layer_count()) throw ShapeError(fmt::format("layer {} out of range", l));
  return layers_[static_cast<std::size_t>(l)];
}

bool Grid::valid(const BlockCoord& b) const {
  if (b.layer < 0 || b.layer >= layer_count()) return false;
  const auto& g = layers_[static_cast<std::size_t>(b.layer)];
  return b.row >= 0 && b.row < g.block_rows && b.col >= 0 && b.col < g.block_cols;
}

BlockExtent Grid::extent(const BlockCoord& b) const {
  if (!valid(b)) throw ShapeError("block " + to_string(b) + " outside grid");
  const auto& g = layers_[static_cast<std::size_t>(b.layer)];
  BlockExtent e;
  e.row0 = Index(b.row) * block_size_;
  e.col0 = Index(b.col) * block_size_;
  e.rows = std::min<Index>(block_size_, g.dims.rows - e.row0);
  e.cols = std::min<Index>(block_size_, g.dims.cols - e.col0);
  return e;
}

std::size_t Grid::block_count(int l) const {
  const auto& g = layer(l);
  return std::size_t(g.block_rows) * std::size_t(g.block_cols);
}

std::vector<BlockCoord> Grid::coords(int l) const {
  const auto& g = layer(l);
  std::vector<BlockCoord> out;
  out.reserve(block_count(l));
  for (int r = 0; r < g.block_rows; ++r)
    for (int c = 0; c < g.block_cols; ++c) out.push_back({l, r, c});
  return out;
}

Grid partition(const std::vector<LayerDims>& dims, int block_size) { return Grid(dims, block_size); }

ImportanceMap score_blocks(const std::vector<Matrix>& gradients, const Grid& grid) {
  if (static_cast<int>(gradients.size()) != grid.layer_count())
    throw ShapeError(fmt::format("{} gradient matrices for {} layers", gradients.size(),
                                 grid.layer_count()));
  ImportanceMap out;
  for (int l = 0; l < grid.layer_count(); ++l) {
    const Matrix& g = gradients[static_cast<std::size_t>(l)];
    const auto& dims = grid.layer(l).dims;
    if (g.rows() != dims.rows || g.cols() != dims.cols)
      throw ShapeError(fmt::format("layer {} gradient is {}x{}, expected {}x{}", l, g.rows(),
                                   g.cols(), dims.rows, dims.cols));
    for (const auto& b : grid.coords(l)) {
      const auto e = grid.extent(b);
      const double sum = g.block(e.row0, e.col0, e.rows, e.cols).cwiseAbs().sum();
      out.emplace_hint(out.end(), b, sum / double(e.size()));
    }
  }
  return out;
}

bool SelectionConfig::eligible(int layer) const {
  if (eligible_layers.empty()) return true;
  return layer >= 0 && layer < static_cast<int>(eligible_layers.size()) &&
         eligible_layers[static_cast<std::size_t>(layer)];
}

IndexSet select_topk(const ImportanceMap& importance, const SelectionConfig& cfg) {
  if (cfg.budget < 1) throw ConfigError(fmt::format("budget must be >= 1, got {}", cfg.budget));

  std::map<int, double> layer_max;
  std::size_t eligible_count = 0;
  for (const auto& [b, s] : importance) {
    if (!(s >= 0.0)) throw PreconditionError("negative or NaN score at " + to_string(b));
    if (!cfg.eligible(b.layer)) continue;
    ++eligible_count;
    auto [it, fresh] = layer_max.emplace(b.layer, s);
    if (!fresh) it->second = std::max(it->second, s);
  }
  if (std::size_t(cfg.budget) > eligible_count)
    throw BudgetError(fmt::format("budget {} exceeds the {} scored blocks in eligible layers "
                                  "(short by {})",
                                  cfg.budget, eligible_count, std::size_t(cfg.budget) - eligible_count));

  std::vector<std::pair<BlockCoord, double>> cand;
  for (const auto& [b, s] : importance) {
    if (!cfg.eligible(b.layer)) continue;
    if (layer_max[b.layer] < cfg.tau_block) continue;  // whole layer skipped
    cand.emplace_back(b, s);
  }
  const bool asc = cfg.tie_break == TieBreak::CoordAscending;
  std::sort(cand.begin(), cand.end(), [asc](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return asc ? a.first < b.first : b.first < a.first;
  });
  if (cand.size() > std::size_t(cfg.budget)) cand.resize(std::size_t(cfg.budget));
  IndexSet out;
  for (const auto& c : cand) out.insert(c.first);
  return out;
}

void write_trace(std::ostream& os, const std::vector<TraceRecord>& records) {
  for (const auto& r : records)
    os << fmt::format("{} {} {} {} {}\n", r.task_id, r.coord.layer, r.coord.row, r.coord.col, r.score);
}

std::vector<TraceRecord> read_trace(std::istream& is) {
  std::vector<TraceRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ss.imbue(std::locale::classic());
    TraceRecord r;
    if (!(ss >> r.task_id >> r.coord.layer >> r.coord.row >> r.coord.col >> r.score))
      throw ParseError(fmt::format("trace line {}: expected 'task_id layer row col score'", lineno));
    std::string rest;
    if (ss >> rest) throw ParseError(fmt::format("trace line {}: trailing field '{}'", lineno, rest));
    out.push_back(r);
  }
  return out;
}

std::vector<TraceRecord> make_trace(int task_id, const IndexSet& selection,
                                    const ImportanceMap& importance) {
  std::vector<TraceRecord> out;
  for (const auto& b : selection) {
    auto it = importance.find(b);
    out.push_back({task_id, b, it == importance.end() ? 0.0 : it->second});
  }
  return out;
}

std::map<int, IndexSet> selections_by_task(const std::vector<TraceRecord>& records) {
  std::map<int, IndexSet> out;
  for (const auto& r : records) out[r.task_id].insert(r.coord);
  return out;
}

}  // namespace seta
