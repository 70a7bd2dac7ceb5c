#include "dbp/protocol.hpp"

#include "dbp/errors.hpp"

#include <map>

namespace dbp {

OutcomeMatrix::OutcomeMatrix(std::size_t samples, std::size_t copies)
    : rows_(samples, std::vector<int>(copies, 0)), copies_(copies) {
  if (samples == 0 || copies == 0) throw ShapeError("outcome matrix must be non-empty");
}

OutcomeMatrix::OutcomeMatrix(std::vector<std::vector<int>> rows) : rows_(std::move(rows)) {
  if (rows_.empty() || rows_[0].empty()) throw ShapeError("outcome matrix must be non-empty");
  copies_ = rows_[0].size();
  for (const auto& r : rows_) {
    if (r.size() != copies_) throw ShapeError("outcome matrix rows differ in length");
    for (int v : r) {
      if (v != 0 && v != 1) throw RangeError("outcome entries must be 0 or 1");
    }
  }
}

void OutcomeMatrix::set(std::size_t sample, std::size_t copy, int value) {
  if (value != 0 && value != 1) throw RangeError("outcome entries must be 0 or 1");
  rows_.at(sample).at(copy) = value;
}

double wor_rob(const OutcomeMatrix& a) {
  std::size_t broken = 0;
  for (std::size_t j = 0; j < a.samples(); ++j) {
    int m = 0;
    for (int v : a.row(j)) m = std::max(m, v);
    broken += static_cast<std::size_t>(m);
  }
  return 1.0 - static_cast<double>(broken) / static_cast<double>(a.samples());
}

double avg_rob(const OutcomeMatrix& a) {
  std::size_t failures = 0;
  for (std::size_t j = 0; j < a.samples(); ++j) {
    for (int v : a.row(j)) failures += static_cast<std::size_t>(v);
  }
  return 1.0 - static_cast<double>(failures) / static_cast<double>(a.samples() * a.copies());
}

int majority_vote(const std::vector<int>& labels) {
  if (labels.empty()) throw ShapeError("majority vote over no predictions");
  std::map<int, int> counts;
  for (int l : labels) ++counts[l];
  int best = counts.begin()->first, best_n = 0;
  for (const auto& [label, n] : counts) {  // ascending labels, so ties keep the smallest
    if (n > best_n) {
      best = label;
      best_n = n;
    }
  }
  return best;
}

double mv_rob(const std::vector<int>& mv_labels, const std::vector<int>& truth) {
  if (mv_labels.size() != truth.size()) throw ShapeError("mv_rob: label count mismatch");
  if (truth.empty()) throw ShapeError("mv_rob over no samples");
  std::size_t wrong = 0;
  for (std::size_t j = 0; j < truth.size(); ++j) wrong += mv_labels[j] != truth[j] ? 1 : 0;
  return 1.0 - static_cast<double>(wrong) / static_cast<double>(truth.size());
}

}  // namespace dbp
