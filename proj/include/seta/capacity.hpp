#pragma once

#include <vector>

namespace seta {

struct CapacityRow {
  int step = 0;
  int task_added = 0;
  long total = 0;
  long shared = 0;
  std::vector<long> unique;  // unique[t-1] = blocks held by Unique(t)

  long unique_sum() const {
    long s = 0;
    for (long u : unique) s += u;
    return s;
  }
  bool balanced() const { return total == shared + unique_sum(); }
};

struct CapacityLedger {
  std::vector<CapacityRow> rows;
};

}  // namespace seta
