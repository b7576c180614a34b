#include <gtest/gtest.h>

#include <bit>
#include <random>
#include <sstream>

#include "seta/errors.hpp"
#include "seta/sos.hpp"

using namespace seta;

namespace {

const BlockCoord a{0, 0, 0}, b{0, 0, 1}, c{0, 1, 0}, d{0, 1, 1};
const Grid kGrid({{8, 8}, {8, 8}}, 2);

IndexSet from_mask(unsigned mask, const std::vector<BlockCoord>& universe) {
  IndexSet s;
  for (std::size_t i = 0; i < universe.size(); ++i)
    if (mask & (1u << i)) s.insert(universe[i]);
  return s;
}

// Direct encoding of the two filters on bitmasks.
std::pair<unsigned, unsigned> filter_oracle(unsigned I, unsigned R, int ect, int trt) {
  if (std::popcount(I) < ect) {
    R |= I;
    I = 0;
  }
  const int r = std::popcount(R);
  if (I != 0 && r > 0 && r < trt) {
    I |= R;
    R = 0;
  }
  return {I, R};
}

IndexSet random_set(std::mt19937_64& rng, int layers, int side, double p) {
  std::bernoulli_distribution keep(p);
  IndexSet s;
  for (int l = 0; l < layers; ++l)
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j)
        if (keep(rng)) s.insert({l, i, j});
  return s;
}

}  // namespace

TEST(RawDecompose, HandExample) {
  const auto r = raw_decompose({a, b, c}, {b, c, d}, 0);
  EXPECT_EQ(r.intersection, IndexSet({b, c}));
  EXPECT_EQ(r.remainder, IndexSet({a}));
  EXPECT_EQ(r.exclusive, IndexSet({d}));
}

TEST(RawDecompose, IdenticalAndDisjoint) {
  const auto same = raw_decompose({a, b}, {a, b}, 0);
  EXPECT_TRUE(same.remainder.empty());
  EXPECT_TRUE(same.exclusive.empty());
  EXPECT_TRUE(raw_decompose({a}, {d}, 0).intersection.empty());
}

TEST(RawDecompose, RestrictsToLayer) {
  const BlockCoord other{1, 0, 0};
  const auto r = raw_decompose({a, other}, {a, other}, 1);
  EXPECT_EQ(r.intersection, IndexSet({other}));
}

TEST(ApplyFilters, CoincidenceRejected) {
  const auto r = apply_filters({a}, {b, c}, {2, 2});
  EXPECT_TRUE(r.shared.empty());
  EXPECT_EQ(r.remainder, IndexSet({a, b, c}));
  EXPECT_TRUE(r.coincidence_rejected);
  EXPECT_FALSE(r.remainder_absorbed);
}

TEST(ApplyFilters, TinyRemainderAbsorbed) {
  const auto r = apply_filters({b, c}, {a}, {2, 2});
  EXPECT_EQ(r.shared, IndexSet({a, b, c}));
  EXPECT_TRUE(r.remainder.empty());
  EXPECT_TRUE(r.remainder_absorbed);
}

TEST(ApplyFilters, EmptyRemainderUnchanged) {
  const auto r = apply_filters({b, c}, {}, {2, 2});
  EXPECT_EQ(r.shared, IndexSet({b, c}));
  EXPECT_FALSE(r.remainder_absorbed);
  EXPECT_FALSE(r.coincidence_rejected);
}

TEST(ApplyFilters, AbsorptionSuppressedWhenIntersectionRejected) {
  // |I| = 1 < 2 empties I; the merged remainder of 2 must not be absorbed into nothing.
  const auto r = apply_filters({a}, {b}, {2, 3});
  EXPECT_TRUE(r.shared.empty());
  EXPECT_EQ(r.remainder, IndexSet({a, b}));
}

TEST(ApplyFilters, Errors) {
  EXPECT_THROW(apply_filters({a, b}, {b}, {2, 2}), PreconditionError);
  EXPECT_THROW(apply_filters({a}, {b}, {0, 2}), ConfigError);
  EXPECT_THROW(apply_filters({a}, {b}, {2, 0}), ConfigError);
}

TEST(ApplyFilters, ExhaustiveOracleOverSixElements) {
  const std::vector<BlockCoord> u{{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {0, 1, 0}, {0, 1, 1}, {0, 1, 2}};
  long cases = 0;
  for (int ect = 1; ect <= 3; ++ect)
    for (int trt = 1; trt <= 3; ++trt)
      for (unsigned I = 0; I < 64; ++I)
        for (unsigned R = 0; R < 64; ++R) {
          if (I & R) continue;
          const auto got = apply_filters(from_mask(I, u), from_mask(R, u), {ect, trt});
          const auto [eI, eR] = filter_oracle(I, R, ect, trt);
          ASSERT_EQ(got.shared, from_mask(eI, u)) << I << " " << R << " " << ect << " " << trt;
          ASSERT_EQ(got.remainder, from_mask(eR, u)) << I << " " << R << " " << ect << " " << trt;
          // Idempotence.
          const auto again = apply_filters(got.shared, got.remainder, {ect, trt});
          ASSERT_EQ(again.shared, got.shared);
          ASSERT_EQ(again.remainder, got.remainder);
          ++cases;
        }
  EXPECT_EQ(cases, 9 * 729);  // 3^6 disjoint pairs per threshold pair
}

TEST(FormExperts, ComposedHandExample) {
  Registry reg;
  init_first_task(reg, {a, b, c}, kGrid);
  const IndexSet curr{b, c, d};
  const auto plan = plan_evolution(reg, curr, {2, 2});
  const auto res = form_experts(reg, 2, curr, plan, kGrid);
  ASSERT_NE(reg.shared(), nullptr);
  EXPECT_EQ(reg.shared()->owned, IndexSet({a, b, c}));
  ASSERT_TRUE(res.new_unique.has_value());
  EXPECT_EQ(reg.at(*res.new_unique).owned, IndexSet({d}));
  EXPECT_EQ(reg.at(*res.new_unique).task_id, 2);
  EXPECT_TRUE(reg.at(0).owned.empty());
  EXPECT_TRUE(reg.at(0).retired);
  EXPECT_FALSE(res.splits.front().unique_child.has_value());
  EXPECT_NO_THROW(reg.check_invariants());
}

TEST(FormExperts, InheritedWeightsAreBitExact) {
  Registry reg;
  init_first_task(reg, {a, b, c, d}, kGrid);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (const BlockCoord& x : {a, b, c, d})
    reg.at(0).deltas.at(x) = Matrix::NullaryExpr(2, 2, [&] { return n(rng); });
  freeze_history(reg, 2);
  const DeltaOverlay before = reg.at(0).deltas;
  const IndexSet curr{a, b, {1, 0, 0}};
  const auto res = form_experts(reg, 2, curr, plan_evolution(reg, curr, {2, 2}), kGrid);
  // a, b shared; c, d remain a frozen Unique(1) child.
  for (const BlockCoord& x : {a, b}) EXPECT_EQ(encode_f64(reg.shared()->deltas.at(x)), encode_f64(before.at(x)));
  ASSERT_TRUE(res.splits.front().unique_child.has_value());
  const auto& child = reg.at(*res.splits.front().unique_child);
  EXPECT_TRUE(child.frozen);
  EXPECT_EQ(child.task_id, 1);
  for (const BlockCoord& x : {c, d}) EXPECT_EQ(encode_f64(child.deltas.at(x)), encode_f64(before.at(x)));
  for (const BlockCoord& x : {a, b}) EXPECT_EQ(encode_f64(reg.shared()->anchors.at(x)), encode_f64(before.at(x)));
}

TEST(FormExperts, NoOverlapLeavesSharedUntouched) {
  Registry reg;
  init_first_task(reg, {a, b}, kGrid);
  const IndexSet curr{c, d};
  const auto res = form_experts(reg, 2, curr, plan_evolution(reg, curr, {2, 2}), kGrid);
  EXPECT_EQ(reg.shared(), nullptr);
  EXPECT_TRUE(res.splits.empty());
  EXPECT_EQ(reg.size(), 2u);
  EXPECT_THROW(form_experts(reg, 2, curr, plan_evolution(reg, curr, {2, 2}), kGrid), StateError);
}

TEST(FormExperts, ConservationOnRandomSequences) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    Registry reg;
    init_first_task(reg, random_set(rng, 2, 4, 0.4), kGrid);
    for (int t = 2; t <= 6; ++t) {
      const IndexSet prior = reg.owned_union();
      const IndexSet curr = random_set(rng, 2, 4, 0.4);
      const auto plan = plan_evolution(reg, curr, {2, 2});
      IndexSet gained, kept, untouched = prior;
      for (const auto& s : plan.splits) {
        EXPECT_TRUE((s.shared_gain() & s.stays_unique()).empty());
        gained |= s.shared_gain();
        kept |= s.stays_unique();
        untouched = untouched - reg.at(s.source).owned;
      }
      EXPECT_TRUE((gained & plan.new_task).empty());
      EXPECT_TRUE((kept & plan.new_task).empty());
      EXPECT_TRUE((untouched & (gained | kept)).empty());
      EXPECT_EQ(gained | kept | plan.new_task | untouched, prior | curr);
      form_experts(reg, t, curr, plan, kGrid);
      freeze_history(reg, t);
      ASSERT_NO_THROW(reg.check_invariants()) << trial << " " << t;
    }
  }
}

TEST(GrowthCurve, IdenticalSelectionsStayConstant) {
  const IndexSet s{a, b, c, d};
  const auto g = growth_curve(std::vector<IndexSet>(5, s), {2, 2});
  for (const auto& p : g) EXPECT_EQ(p.sos_total, 4);
  EXPECT_EQ(g.back().independent_total, 20);
}

TEST(GrowthCurve, DisjointSelectionsMatchIndependent) {
  std::vector<IndexSet> sel;
  for (int t = 0; t < 4; ++t) sel.push_back({{0, t, 0}, {0, t, 1}, {1, t, 2}});
  for (const auto& p : growth_curve(sel, {2, 2})) EXPECT_EQ(p.sos_total, p.independent_total);
}

TEST(GrowthCurve, SubAdditiveAndBalancedOnRandomTraces) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<IndexSet> sel;
    for (int t = 0; t < 6; ++t) sel.push_back(random_set(rng, 2, 5, 0.3));
    CapacityLedger ledger;
    const auto g = growth_curve(sel, {2, 2}, &ledger);
    IndexSet uni;
    for (std::size_t t = 0; t < g.size(); ++t) {
      uni |= sel[t];
      EXPECT_LE(g[t].sos_total, g[t].independent_total);
      EXPECT_EQ(g[t].sos_total, long(uni.size()));  // owned union equals selection union
      EXPECT_TRUE(ledger.rows[t].balanced());
    }
  }
}

TEST(GrowthCurve, NeedsTwoTasks) {
  EXPECT_THROW(growth_curve({IndexSet{a}}, {2, 2}), PreconditionError);
}

TEST(LedgerCsv, RoundTrip) {
  CapacityLedger l;
  l.rows.push_back({1, 1, 960, 0, {960}});
  l.rows.push_back({2, 2, 1506, 414, {546, 546}});
  std::stringstream ss;
  write_ledger_csv(ss, l);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "step,total,shared,unique_t1,unique_t2");
  const auto back = read_ledger_csv(ss);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[0].unique, std::vector<long>({960, 0}));
  EXPECT_EQ(back.rows[1].total, 1506);
  EXPECT_EQ(back.rows[1].unique, std::vector<long>({546, 546}));
  std::stringstream bad("step,total,shared\n1,x,0\n");
  EXPECT_THROW(read_ledger_csv(bad), ParseError);
}
