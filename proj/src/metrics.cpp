#include "seta/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "seta/errors.hpp"

namespace seta {

namespace {

constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, int lineno) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(fmt::format("line {}: '{}' is not a number", lineno, s));
  }
}

}  // namespace

AccuracyMatrix::AccuracyMatrix(int tasks, std::vector<std::string> names)
    : n_(tasks), names_(std::move(names)) {
  if (tasks < 1) throw ConfigError("accuracy matrix needs at least one task");
  if (names_.empty())
    for (int j = 0; j < tasks; ++j) names_.push_back(fmt::format("T{}", j + 1));
  if (int(names_.size()) != tasks) throw ConfigError("task name count differs from matrix size");
  m_.assign(std::size_t(tasks), std::vector<double>(std::size_t(tasks), kUndefined));
}

void AccuracyMatrix::set(int i, int j, double v) {
  if (i < 0 || i >= n_ || j < 0 || j > i)
    throw PreconditionError(fmt::format("accuracy cell ({},{}) is outside the lower triangle", i, j));
  if (!std::isfinite(v) || v < 0.0 || v > 100.0)
    throw PreconditionError(fmt::format("accuracy {} outside [0,100]", v));
  m_[std::size_t(i)][std::size_t(j)] = v;
}

double AccuracyMatrix::at(int i, int j) const {
  if (!defined(i, j)) throw StateError(fmt::format("accuracy cell ({},{}) is undefined", i, j));
  return m_[std::size_t(i)][std::size_t(j)];
}

bool AccuracyMatrix::defined(int i, int j) const {
  return i >= 0 && i < n_ && j >= 0 && j <= i && !std::isnan(m_[std::size_t(i)][std::size_t(j)]);
}

bool AccuracyMatrix::row_complete(int i) const {
  for (int j = 0; j <= i; ++j)
    if (!defined(i, j)) return false;
  return i < n_;
}

bool AccuracyMatrix::operator==(const AccuracyMatrix& o) const {
  if (n_ != o.n_ || names_ != o.names_) return false;
  for (std::size_t i = 0; i < m_.size(); ++i)
    for (std::size_t j = 0; j < m_[i].size(); ++j) {
      const double a = m_[i][j], b = o.m_[i][j];
      if (std::isnan(a) != std::isnan(b) || (!std::isnan(a) && a != b)) return false;
    }
  return true;
}

double acc_t(const AccuracyMatrix& m, int t) {
  if (t < 1 || t > m.size() || !m.row_complete(t - 1))
    throw StateError(fmt::format("row {} of the accuracy matrix is incomplete", t));
  double s = 0.0;
  for (int j = 0; j < t; ++j) s += m.at(t - 1, j);
  return s / t;
}

double retention_rt(const AccuracyMatrix& m) { return acc_t(m, m.size()); }

double forgetting_ft(const AccuracyMatrix& m) {
  const int T = m.size();
  if (T < 2) throw StateError("forgetting is undefined for a single task");
  if (!m.row_complete(T - 1)) throw StateError("final row of the accuracy matrix is incomplete");
  double s = 0.0;
  for (int j = 0; j < T - 1; ++j) {
    double peak = -std::numeric_limits<double>::infinity();
    for (int l = j; l < T - 1; ++l) peak = std::max(peak, m.at(l, j));
    s += peak - m.at(T - 1, j);
  }
  return s / (T - 1);
}

double gen_loss(const std::vector<double>& zero_shot, const std::vector<double>& post) {
  if (zero_shot.size() != post.size() || zero_shot.empty())
    throw PreconditionError(fmt::format("benchmark lists differ in length ({} vs {})", zero_shot.size(), post.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i) s += post[i] - zero_shot[i];
  return s / double(post.size());
}

std::vector<CapacityReportRow> capacity_report(const CapacityLedger& ledger) {
  std::vector<CapacityReportRow> out;
  for (const auto& r : ledger.rows) {
    if (!r.balanced())
      throw IntegrityError(fmt::format("ledger step {}: total {} != shared {} + uniques {}", r.step,
                                       r.total, r.shared, r.unique_sum()));
    out.push_back({r, r.total > 0 ? 100.0 * double(r.shared) / double(r.total) : 0.0});
  }
  return out;
}

void write_capacity_report(std::ostream& os, const std::vector<CapacityReportRow>& rows) {
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.row.unique.size());
  os << "step,total,shared";
  for (std::size_t t = 1; t <= width; ++t) os << ",unique_t" << t;
  os << ",shared_pct\n";
  for (const auto& r : rows) {
    os << r.row.step << "," << r.row.total << "," << r.row.shared;
    for (std::size_t t = 0; t < width; ++t) os << "," << (t < r.row.unique.size() ? r.row.unique[t] : 0);
    os << fmt::format(",{:.4f}\n", r.shared_pct);
  }
}

void write_shared_comparison(std::ostream& os,
                             const std::vector<std::pair<std::string, CapacityLedger>>& series) {
  std::vector<std::vector<CapacityReportRow>> reports;
  std::size_t steps = 0;
  os << "step";
  for (const auto& [name, ledger] : series) {
    reports.push_back(capacity_report(ledger));
    steps = std::max(steps, reports.back().size());
    os << "," << name << "_total," << name << "_shared," << name << "_pct";
  }
  os << "\n";
  for (std::size_t s = 0; s < steps; ++s) {
    os << s + 1;
    for (const auto& rep : reports) {
      if (s < rep.size())
        os << fmt::format(",{},{},{:.4f}", rep[s].row.total, rep[s].row.shared, rep[s].shared_pct);
      else
        os << ",,,";
    }
    os << "\n";
  }
}

void write_accuracy_csv(std::ostream& os, const AccuracyMatrix& m) {
  os << "step";
  for (const auto& n : m.task_names()) os << "," << n;
  os << "\n";
  for (int i = 0; i < m.size(); ++i) {
    os << i + 1;
    for (int j = 0; j < m.size(); ++j) {
      os << ",";
      if (m.defined(i, j)) os << fmt::format("{}", m.at(i, j));
    }
    os << "\n";
  }
}

AccuracyMatrix read_accuracy_csv(std::istream& is) {
  const Table t = read_table(is);
  if (t.header.empty() || t.header[0] != "step") throw ParseError("accuracy CSV: header must start with 'step'");
  const int n = int(t.header.size()) - 1;
  if (n < 1 || int(t.rows.size()) != n)
    throw ParseError(fmt::format("accuracy CSV: {} task columns but {} rows", n, t.rows.size()));
  AccuracyMatrix m(n, std::vector<std::string>(t.header.begin() + 1, t.header.end()));
  for (int i = 0; i < n; ++i) {
    const auto& row = t.rows[std::size_t(i)];
    if (int(row.size()) != n + 1) throw ParseError(fmt::format("accuracy CSV row {} has {} cells", i + 1, row.size()));
    for (int j = 0; j < n; ++j) {
      const std::string& cell = row[std::size_t(j) + 1];
      if (cell.empty()) continue;
      if (j > i) continue;  // readings beyond the diagonal are not part of the matrix
      m.set(i, j, parse_double(cell, i + 2));
    }
  }
  return m;
}

std::size_t Table::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError("table has no column '" + name + "'");
  return std::size_t(it - header.begin());
}

double Table::number(std::size_t row, const std::string& col) const {
  const auto c = column(col);
  if (row >= rows.size() || c >= rows[row].size())
    throw ParseError(fmt::format("table cell ({}, {}) missing", row, col));
  return parse_double(rows[row][c], int(row) + 2);
}

Table read_table(std::istream& is) {
  Table t;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size())
        throw ParseError(fmt::format("line {}: {} cells, header has {}", lineno, cells.size(), t.header.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

}  // namespace seta
