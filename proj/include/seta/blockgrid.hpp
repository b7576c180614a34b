#pragma once

#include <compare>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace seta {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct BlockCoord {
  int layer = 0;
  int row = 0;
  int col = 0;

  auto operator<=>(const BlockCoord&) const = default;
};

std::string to_string(const BlockCoord& b);

// Ordered so that iteration (and everything derived from it) is deterministic.
class IndexSet {
 public:
  using Storage = std::set<BlockCoord>;
  using const_iterator = Storage::const_iterator;

  IndexSet() = default;
  IndexSet(std::initializer_list<BlockCoord> init) : blocks_(init) {}
  template <class It>
  IndexSet(It first, It last) : blocks_(first, last) {}

  bool insert(const BlockCoord& b) { return blocks_.insert(b).second; }
  bool erase(const BlockCoord& b) { return blocks_.erase(b) > 0; }
  bool contains(const BlockCoord& b) const { return blocks_.count(b) > 0; }
  std::size_t size() const { return blocks_.size(); }
  bool empty() const { return blocks_.empty(); }
  void clear() { blocks_.clear(); }
  const_iterator begin() const { return blocks_.begin(); }
  const_iterator end() const { return blocks_.end(); }

  IndexSet in_layer(int layer) const;
  bool subset_of(const IndexSet& other) const;

  friend IndexSet operator|(const IndexSet& a, const IndexSet& b);
  friend IndexSet operator&(const IndexSet& a, const IndexSet& b);
  friend IndexSet operator-(const IndexSet& a, const IndexSet& b);
  IndexSet& operator|=(const IndexSet& other);
  bool operator==(const IndexSet&) const = default;

 private:
  Storage blocks_;
};

struct LayerDims {
  Index rows = 0;  // d
  Index cols = 0;  // k
};

struct BlockExtent {
  Index row0 = 0;
  Index col0 = 0;
  Index rows = 0;
  Index cols = 0;
  Index size() const { return rows * cols; }
};

struct LayerGrid {
  LayerDims dims;
  int block_rows = 0;
  int block_cols = 0;
};

class Grid {
 public:
  Grid() = default;
  Grid(std::vector<LayerDims> dims, int block_size);

  int block_size() const { return block_size_; }
  int layer_count() const { return static_cast<int>(layers_.size()); }
  const LayerGrid& layer(int l) const;
  bool valid(const BlockCoord& b) const;
  // Throws ShapeError for coordinates outside the grid.
  BlockExtent extent(const BlockCoord& b) const;
  std::size_t block_count(int l) const;
  std::vector<BlockCoord> coords(int l) const;

 private:
  int block_size_ = 1;
  std::vector<LayerGrid> layers_;
};

Grid partition(const std::vector<LayerDims>& dims, int block_size);

using ImportanceMap = std::map<BlockCoord, double>;

// Mean |grad| over each block's true entry count (partial blocks included).
ImportanceMap score_blocks(const std::vector<Matrix>& gradients, const Grid& grid);

enum class TieBreak { CoordAscending, CoordDescending };

struct SelectionConfig {
  int block_size = 4;
  int budget = 12;
  double tau_block = 0.0;
  TieBreak tie_break = TieBreak::CoordAscending;
  // Per-layer eligibility; empty means every layer is eligible.
  std::vector<bool> eligible_layers;

  bool eligible(int layer) const;
};

IndexSet select_topk(const ImportanceMap& importance, const SelectionConfig& cfg);

struct TraceRecord {
  int task_id = 0;
  BlockCoord coord;
  double score = 0.0;
};

// Line-delimited "task_id layer row col score".
void write_trace(std::ostream& os, const std::vector<TraceRecord>& records);
std::vector<TraceRecord> read_trace(std::istream& is);
std::vector<TraceRecord> make_trace(int task_id, const IndexSet& selection,
                                    const ImportanceMap& importance);
// Per-task selections in ascending task order.
std::map<int, IndexSet> selections_by_task(const std::vector<TraceRecord>& records);

}  // namespace seta
