// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "seta/cli.hpp"
#include "seta/errors.hpp"
#include "seta/metrics.hpp"
#include "seta/sos.hpp"
#include "seta/trainer.hpp"

using namespace seta;
namespace fs = std::filesystem;

namespace {

// Tolerances, pinned.
constexpr double kMetricTol = 0.01;
constexpr double kEwcGenTol = 0.03;
constexpr double kSharedPctTol = 0.05;
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kVShareMin = 0.95;
constexpr double kSaturationScale = 50.0;
constexpr double kGrowthDefault = 0.75;
constexpr double kGrowthHigh = 0.55;
constexpr int kProbes = 1000;
const std::vector<std::uint64_t> kCompareSeeds{1, 2, 3};

int failures = 0;
std::map<int, std::string> lines;  // printed in criterion order at the end

void report(int id, bool ok, const std::string& what) {
  lines[id] = fmt::format("{} criterion {}: {}", ok ? "PASS" : "FAIL", id, what);
  std::cerr << lines[id] << std::endl;  // progress while the long runs go
  if (!ok) ++failures;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ArtifactError("missing " + p.string());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

Table table(const fs::path& p) {
  std::istringstream is(slurp(p));
  return read_table(is);
}

const fs::path kFixtures = fs::path(SETA_DATA_DIR) / "fixtures";
const fs::path kConfigs = SETA_CONFIG_DIR;

void criterion1() {
  std::istringstream is(slurp(kFixtures / "accuracy_matrix_reference.csv"));
  const AccuracyMatrix m = read_accuracy_csv(is);
  const Table g = table(kFixtures / "general_benchmarks.csv");
  auto row = [&](const std::string& method) {
    for (std::size_t r = 0; r < g.rows.size(); ++r)
      if (g.rows[r][g.column("method")] == method)
        return std::vector<double>{g.number(r, "mmlu"), g.number(r, "bbh"), g.number(r, "piqa")};
    throw ParseError("no row " + method);
  };
  const double rt = retention_rt(m), ft = forgetting_ft(m), a2 = acc_t(m, 2), a5 = acc_t(m, 5);
  const double gs = gen_loss(row("zero_shot"), row("SETA")), ge = gen_loss(row("zero_shot"), row("EWC"));
  const bool ok = std::abs(rt - 30.47) <= kMetricTol && std::abs(ft - 19.28) <= kMetricTol &&
                  std::abs(a2 - 59.00) <= kMetricTol && std::abs(a5 - 36.25) <= kMetricTol &&
                  std::abs(gs + 18.42) <= kMetricTol && std::abs(ge + 21.0) <= kEwcGenTol;
  report(1, ok,
         fmt::format("R_T {:.4f}, F_T {:.4f}, Acc_2 {:.4f}, Acc_5 {:.4f}, GEN(SETA) {:.4f}, GEN(EWC) {:.4f}", rt, ft,
                     a2, a5, gs, ge));
}

void criterion2() {
  const Table util = table(kFixtures / "shared_utilization.csv");
  bool ok = true;
  int rows = 0;
  double worst = 0.0;
  for (const std::string budget : {"960", "1280"}) {
    std::istringstream is(slurp(kFixtures / ("capacity_budget_" + budget + ".csv")));
    const CapacityLedger ledger = read_ledger_csv(is);
    for (const auto& r : ledger.rows) {
      ok = ok && r.balanced();
      ++rows;
    }
    try {
      const auto rep = capacity_report(ledger);
      for (std::size_t i = 0; i < rep.size() && i < util.rows.size(); ++i)
        worst = std::max(worst, std::abs(rep[i].shared_pct - util.number(i, "pct_" + budget)));
    } catch (const IntegrityError&) {
      ok = false;
    }
  }
  ok = ok && worst <= kSharedPctTol;
  report(2, ok, fmt::format("{} ledger rows balanced, max shared% deviation {:.4f} points", rows, worst));
}

void criterion3() {
  const std::vector<BlockCoord> u{{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {0, 1, 0}, {0, 1, 1}, {0, 1, 2}};
  auto set = [&](unsigned mask) {
    IndexSet s;
    for (unsigned i = 0; i < 6; ++i)
      if (mask >> i & 1u) s.insert(u[i]);
    return s;
  };
  long cases = 0, mismatches = 0;
  for (int ect = 1; ect <= 3; ++ect)
    for (int trt = 1; trt <= 3; ++trt)
      for (unsigned I = 0; I < 64; ++I)
        for (unsigned R = 0; R < 64; ++R) {
          if (I & R) continue;
          unsigned eI = I, eR = R;
          if (std::popcount(eI) < ect) {
            eR |= eI;
            eI = 0;
          }
          if (eI && eR && std::popcount(eR) < trt) {
            eI |= eR;
            eR = 0;
          }
          const auto got = apply_filters(set(I), set(R), {ect, trt});
          if (got.shared != set(eI) || got.remainder != set(eR)) ++mismatches;
          ++cases;
        }
  report(3, mismatches == 0, fmt::format("{} cases, {} mismatches", cases, mismatches));
}

// Watches the default run for criteria 4 and 5.
class Audit : public RunObserver {
 public:
  void on_gate_split(const GateState& gate, const GateSplit& split) override {
    ++splits;
    std::normal_distribution<double> n;
    for (int p = 0; p < kProbes; ++p) {
      const Vector x = Vector::NullaryExpr(gate.dim(), [&] { return n(rng); });
      const double parent = x.dot(split.parent_row);
      for (ExpertId c : split.children) worst_logit = std::max(worst_logit, std::abs(x.dot(gate.row(c)) - parent));
    }
  }
  void before_optimize(const RunState& st, const TaskReport&) override {
    before.clear();
    for (ExpertId id : st.registry.live_ids()) {
      const auto& e = st.registry.at(id);
      if (e.frozen && e.kind == ExpertKind::Unique) before[id] = serialize_deltas(e);
    }
  }
  void after_optimize(const RunState& st, const TaskReport&) override {
    for (const auto& [id, bytes] : before) {
      ++frozen_checks;
      if (serialize_deltas(st.registry.at(id)) != bytes) ++frozen_changed;
    }
  }

  std::mt19937_64 rng{2024};
  int splits = 0;
  double worst_logit = 0.0;
  std::map<ExpertId, std::string> before;
  int frozen_checks = 0;
  int frozen_changed = 0;
};

double growth_ratio(const RunResult& r) {
  long independent = 0;
  for (const auto& rep : r.reports) independent += long(rep.selection.size());
  return double(r.ledger.rows.back().total) / double(independent);
}

double growth_for(const fs::path& conf, RunResult* keep = nullptr, RunObserver* obs = nullptr) {
  const ExperimentConfig cfg = load_config(conf);
  ExperimentConfig c = cfg;
  c.seta.train.fd_step = kGradStep;
  c.seta.train.fd_tolerance = kGradTol;
  const Workload w = build_workload(c, conf.parent_path());
  RunResult r = run_sequence(w.base, w.tasks, c.seta, obs);
  const double g = growth_ratio(r);
  if (keep) *keep = std::move(r);
  return g;
}

void criteria_4_5_6_9() {
  Audit audit;
  RunResult run;
  double g_default = 0.0;
  try {
    g_default = growth_for(kConfigs / "default.conf", &run, &audit);
  } catch (const NumericError& e) {
    // The trainer raises when a gradient check exceeds its tolerance.
    report(4, false, std::string("default run aborted: ") + e.what());
    report(5, false, "default run aborted");
    report(6, false, e.what());
    report(9, false, "default run aborted");
    return;
  }
  report(4, audit.splits > 0 && audit.worst_logit == 0.0,
         fmt::format("{} gate splits x {} probes, max |child - parent| logit = {}", audit.splits, kProbes,
                     audit.worst_logit));
  report(5, audit.frozen_checks > 0 && audit.frozen_changed == 0,
         fmt::format("{} frozen-expert snapshots compared, {} changed", audit.frozen_checks, audit.frozen_changed));
  double worst = 0.0;
  bool all = true;
  for (const auto& r : run.reports) {
    all = all && r.fd_error >= 0.0;
    worst = std::max(worst, r.fd_error);
  }
  report(6, all && worst <= kGradTol,
         fmt::format("{} task starts checked, max relative error {:.3e} (step {:.0e})", run.reports.size(), worst, kGradStep));

  const double g_high = growth_for(kConfigs / "high_overlap.conf");
  report(9, g_default <= kGrowthDefault && g_high <= kGrowthHigh,
         fmt::format("task-6 blocks / independent: default {:.3f} (<= {}), high overlap {:.3f} (<= {})", g_default,
                     kGrowthDefault, g_high, kGrowthHigh));
}

void criterion7() {
  const std::uint64_t seed = 7;
  const auto sat = attention_grad_profile(kSaturationScale, seed);
  bool mono = true;
  double prev = INFINITY;
  std::string series;
  for (double s : {0.0, 1.0, 2.0, 5.0, 10.0, 50.0}) {
    const auto r = attention_grad_profile(s, seed);
    const double ratio = (r.q_grad + r.k_grad) / r.v_grad;
    mono = mono && ratio <= prev;
    prev = ratio;
    series += fmt::format(" {:.3g}", ratio);
  }
  report(7, sat.v_share >= kVShareMin && mono,
         fmt::format("v_share at s=50 is {:.4f}; (q+k)/v over s:{}", sat.v_share, series));
}

void criterion8() {
  const ExperimentConfig base_cfg = load_config(kConfigs / "default.conf");
  bool every = true;
  double rt_seta = 0, rt_seq = 0;
  std::string detail;
  for (std::uint64_t seed : kCompareSeeds) {
    ExperimentConfig c = base_cfg;
    c.seta.train.seed = seed;
    const Workload w = build_workload(c, kConfigs);
    const auto s = run_sequence(w.base, w.tasks, c.seta);
    const auto q = baseline_seq_train(w.base, w.tasks, c.seta);
    const double fs_ = forgetting_ft(s.accuracy), fq = forgetting_ft(q.accuracy);
    every = every && fs_ < fq;
    rt_seta += retention_rt(s.accuracy) / double(kCompareSeeds.size());
    rt_seq += retention_rt(q.accuracy) / double(kCompareSeeds.size());
    detail += fmt::format(" seed {}: F_T {:.2f} vs {:.2f};", seed, fs_, fq);
  }
  report(8, every && rt_seta > rt_seq,
         fmt::format("SETA vs Seq-Train{} mean R_T {:.2f} vs {:.2f}", detail, rt_seta, rt_seq));
}

void criterion10() {
  const fs::path dir = fs::temp_directory_path() / "seta_acceptance_determinism";
  fs::remove_all(dir);
  RunOptions a, b;
  a.config = b.config = kConfigs / "default.conf";
  a.out = dir / "a";
  b.out = dir / "b";
  std::ostringstream sink;
  const int ca = cmd_run(a, sink, sink), cb = cmd_run(b, sink, sink);
  bool same = ca == 0 && cb == 0;
  for (const char* f : {"accuracy_matrix.csv", "capacity_ledger.csv"})
    same = same && slurp(dir / "a" / f) == slurp(dir / "b" / f);
  report(10, same, "two cmd_run executions give byte-identical accuracy_matrix.csv and capacity_ledger.csv");
  fs::remove_all(dir);
}

template <class Fn>
void guarded(std::initializer_list<int> ids, Fn fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    for (int id : ids) report(id, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  guarded({1}, criterion1);
  guarded({2}, criterion2);
  guarded({3}, criterion3);
  guarded({4, 5, 6, 9}, criteria_4_5_6_9);
  guarded({7}, criterion7);
  guarded({8}, criterion8);
  guarded({10}, criterion10);
  for (const auto& [id, line] : lines) std::cout << line << "\n";
  std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
