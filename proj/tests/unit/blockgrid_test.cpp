#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "seta/blockgrid.hpp"
#include "seta/errors.hpp"

using namespace seta;

namespace {

// Independent per-entry oracle: walk every entry, bucket by integer division.
ImportanceMap brute_scores(const std::vector<Matrix>& g, int l) {
  std::map<BlockCoord, std::pair<double, int>> acc;
  for (int layer = 0; layer < int(g.size()); ++layer)
    for (Index u = 0; u < g[layer].rows(); ++u)
      for (Index v = 0; v < g[layer].cols(); ++v) {
        auto& a = acc[{layer, int(u / l), int(v / l)}];
        a.first += std::abs(g[layer](u, v));
        a.second += 1;
      }
  ImportanceMap out;
  for (auto& [c, a] : acc) out[c] = a.first / a.second;
  return out;
}

// Sort oracle for selection: (-score, coord) ascending, skip layers below tau.
IndexSet sort_select(const ImportanceMap& m, int budget, double tau) {
  std::map<int, double> layer_max;
  for (auto& [c, s] : m) layer_max[c.layer] = std::max(layer_max[c.layer], s);
  std::vector<std::pair<double, BlockCoord>> v;
  for (auto& [c, s] : m)
    if (layer_max[c.layer] >= tau) v.push_back({-s, c});
  std::sort(v.begin(), v.end());
  IndexSet out;
  for (int i = 0; i < budget && i < int(v.size()); ++i) out.insert(v[std::size_t(i)].second);
  return out;
}

}  // namespace

TEST(Partition, CeilDivision) {
  Grid g = partition({{4096, 4096}, {2, 2}, {6, 4}}, 256);
  EXPECT_EQ(g.layer(0).block_rows, 16);
  EXPECT_EQ(g.layer(0).block_cols, 16);
  Grid small = partition({{2, 2}, {6, 4}}, 2);
  EXPECT_EQ(small.layer(0).block_rows, 1);
  EXPECT_EQ(small.layer(0).block_cols, 1);
  EXPECT_EQ(small.layer(1).block_rows, 3);
  EXPECT_EQ(small.layer(1).block_cols, 2);
}

TEST(Partition, RejectsEmptyDims) {
  EXPECT_THROW(partition({{0, 4}}, 2), ConfigError);
  EXPECT_THROW(partition({{4, 4}}, 0), ConfigError);
}

TEST(Partition, EntryCountsCoverTheMatrix) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = 1 + rng() % 13, k = 1 + rng() % 13;
    const int l = 1 + int(rng() % 5);
    Grid g = partition({{d, k}}, l);
    Index total = 0;
    for (const auto& b : g.coords(0)) total += g.extent(b).size();
    EXPECT_EQ(total, d * k);
  }
}

TEST(Partition, ExtentOutsideGridThrows) {
  Grid g = partition({{4, 4}}, 2);
  EXPECT_THROW(g.extent({0, 2, 0}), ShapeError);
  EXPECT_THROW(g.extent({1, 0, 0}), ShapeError);
}

TEST(ScoreBlocks, HandValues) {
  Grid g = partition({{2, 4}}, 2);
  Matrix m(2, 4);
  m << 0.2, -0.4, 0, 0, 0.6, -0.8, 0, 0;
  auto s = score_blocks({m}, g);
  EXPECT_DOUBLE_EQ(s.at({0, 0, 0}), 0.5);
  EXPECT_DOUBLE_EQ(s.at({0, 0, 1}), 0.0);
}

TEST(ScoreBlocks, PartialBlocksUseTrueEntryCount) {
  Grid g = partition({{3, 3}}, 2);
  Matrix m = Matrix::Constant(3, 3, 1.0);
  m(2, 2) = -3.0;
  auto s = score_blocks({m}, g);
  EXPECT_DOUBLE_EQ(s.at({0, 1, 1}), 3.0);  // single-entry corner block
  EXPECT_DOUBLE_EQ(s.at({0, 0, 1}), 1.0);
}

TEST(ScoreBlocks, MatchesBruteForceOnRandomMatrices) {
  std::mt19937 rng(11);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int l = 1 + int(rng() % 4);
    std::vector<Matrix> gs;
    std::vector<LayerDims> dims;
    for (int layer = 0; layer < 2; ++layer) {
      const Index d = 1 + rng() % 8, k = 1 + rng() % 8;
      Matrix m(d, k);
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
      gs.push_back(m);
      dims.push_back({d, k});
    }
    auto got = score_blocks(gs, partition(dims, l));
    auto want = brute_scores(gs, l);
    ASSERT_EQ(got.size(), want.size());
    for (auto& [c, s] : want) EXPECT_NEAR(got.at(c), s, 1e-12);
  }
}

TEST(ScoreBlocks, ShapeMismatchThrows) {
  Grid g = partition({{4, 4}}, 2);
  EXPECT_THROW(score_blocks({Matrix::Zero(4, 3)}, g), ShapeError);
  EXPECT_THROW(score_blocks({}, g), ShapeError);
}

TEST(SelectTopk, TieBreakByCoordinate) {
  ImportanceMap m{{{0, 0, 0}, 0.9}, {{0, 0, 1}, 0.5}, {{0, 1, 0}, 0.5}};
  SelectionConfig cfg;
  cfg.budget = 2;
  EXPECT_EQ(select_topk(m, cfg), (IndexSet{{0, 0, 0}, {0, 0, 1}}));
  cfg.tie_break = TieBreak::CoordDescending;
  EXPECT_EQ(select_topk(m, cfg), (IndexSet{{0, 0, 0}, {0, 1, 0}}));
}

TEST(SelectTopk, AllBelowThresholdGivesEmpty) {
  ImportanceMap m{{{0, 0, 0}, 0.1}, {{1, 0, 0}, 0.2}};
  SelectionConfig cfg;
  cfg.budget = 1;
  cfg.tau_block = 0.5;
  EXPECT_TRUE(select_topk(m, cfg).empty());
}

TEST(SelectTopk, BudgetOverEligibleThrowsNamingShortfall) {
  ImportanceMap m{{{0, 0, 0}, 0.1}, {{1, 0, 0}, 0.2}};
  SelectionConfig cfg;
  cfg.budget = 2;
  cfg.eligible_layers = {false, true};
  try {
    select_topk(m, cfg);
    FAIL() << "expected BudgetError";
  } catch (const BudgetError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST(SelectTopk, LargeBudgetExactSize) {
  ImportanceMap m;
  std::mt19937 rng(5);
  for (int l = 0; l < 4; ++l)
    for (int i = 0; i < 24; ++i)
      for (int j = 0; j < 24; ++j) m[{l, i, j}] = double(rng() % 1000) / 1000.0;
  SelectionConfig cfg;
  cfg.budget = 960;
  EXPECT_EQ(select_topk(m, cfg).size(), 960u);
}

TEST(SelectTopk, MatchesSortOracle) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    ImportanceMap m;
    for (int l = 0; l < 3; ++l)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[{l, i, j}] = double(rng() % 7) / 7.0;  // plenty of ties
    SelectionConfig cfg;
    cfg.tau_block = double(rng() % 4) / 4.0;
    int eligible = 0;
    std::map<int, double> mx;
    for (auto& [c, s] : m) mx[c.layer] = std::max(mx[c.layer], s);
    for (auto& [c, s] : m) eligible += mx[c.layer] >= cfg.tau_block;
    if (eligible == 0) continue;
    cfg.budget = 1 + int(rng() % unsigned(eligible));
    EXPECT_EQ(select_topk(m, cfg), sort_select(m, cfg.budget, cfg.tau_block));
    EXPECT_EQ(select_topk(m, cfg), select_topk(m, cfg));
  }
}

TEST(SelectTopk, RaisingTauNeverAddsSkippedLayerBlocks) {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    ImportanceMap m;
    for (int l = 0; l < 3; ++l)
      for (int i = 0; i < 4; ++i) m[{l, i, 0}] = double(rng() % 100) / 100.0;
    std::map<int, double> mx;
    for (auto& [c, s] : m) mx[c.layer] = std::max(mx[c.layer], s);
    for (double tau : {0.2, 0.5, 0.8}) {
      SelectionConfig cfg;
      cfg.tau_block = tau;
      cfg.budget = 1;
      IndexSet got;
      try {
        got = select_topk(m, cfg);
      } catch (const BudgetError&) {
        continue;
      }
      for (auto& b : got) EXPECT_GE(mx[b.layer], tau);
    }
  }
}

TEST(IndexSet, AlgebraMatchesEnumeration) {
  const std::vector<BlockCoord> u{{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {1, 0, 0}, {1, 1, 1}};
  for (unsigned a = 0; a < 32; ++a)
    for (unsigned b = 0; b < 32; ++b) {
      IndexSet A, B, uni, inter, diff;
      for (unsigned i = 0; i < 5; ++i) {
        const bool ia = a >> i & 1, ib = b >> i & 1;
        if (ia) A.insert(u[i]);
        if (ib) B.insert(u[i]);
        if (ia || ib) uni.insert(u[i]);
        if (ia && ib) inter.insert(u[i]);
        if (ia && !ib) diff.insert(u[i]);
      }
      EXPECT_EQ(A | B, uni);
      EXPECT_EQ(A & B, inter);
      EXPECT_EQ(A - B, diff);
      EXPECT_EQ(A.subset_of(B), (a & ~b) == 0);
    }
}

TEST(Trace, RoundTrip) {
  std::vector<TraceRecord> recs{{1, {0, 1, 2}, 0.125}, {2, {1, 0, 3}, 1e-17}, {2, {0, 0, 0}, 3.0}};
  std::stringstream ss;
  write_trace(ss, recs);
  auto back = read_trace(ss);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].task_id, recs[i].task_id);
    EXPECT_EQ(back[i].coord, recs[i].coord);
    EXPECT_EQ(back[i].score, recs[i].score);
  }
  auto by = selections_by_task(back);
  EXPECT_EQ(by.at(2), (IndexSet{{1, 0, 3}, {0, 0, 0}}));
}

TEST(Trace, MalformedLineThrows) {
  std::stringstream ss("1 0 0 0 0.5\n1 0 x 0 0.5\n");
  EXPECT_THROW(read_trace(ss), ParseError);
}
