#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "seta/capacity.hpp"

namespace seta {

// M[i][j] = accuracy (percent) on task j after training task i, j <= i.
// Indices are 0-based in code; step t in prose is row t-1.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(int tasks, std::vector<std::string> names = {});

  int size() const { return n_; }
  void set(int i, int j, double v);
  double at(int i, int j) const;
  bool defined(int i, int j) const;
  bool row_complete(int i) const;
  const std::vector<std::string>& task_names() const { return names_; }
  // exact cell equality; undefined cells match each other
  bool operator==(const AccuracyMatrix& o) const;

 private:
  int n_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> m_;  // NaN marks undefined
};

double acc_t(const AccuracyMatrix& m, int t);  // t is 1-based
double retention_rt(const AccuracyMatrix& m);
double forgetting_ft(const AccuracyMatrix& m);
double gen_loss(const std::vector<double>& zero_shot, const std::vector<double>& post);

struct CapacityReportRow {
  CapacityRow row;
  double shared_pct = 0.0;
};

std::vector<CapacityReportRow> capacity_report(const CapacityLedger& ledger);
void write_capacity_report(std::ostream& os, const std::vector<CapacityReportRow>& rows);
// Side-by-side shared% series for several ledgers (e.g. different budgets).
void write_shared_comparison(std::ostream& os,
                             const std::vector<std::pair<std::string, CapacityLedger>>& series);

void write_accuracy_csv(std::ostream& os, const AccuracyMatrix& m);
AccuracyMatrix read_accuracy_csv(std::istream& is);

// Plain numeric table reader: '#' comments, one header row, comma separated.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& col) const;
};

Table read_table(std::istream& is);

}  // namespace seta
