#pragma once

#include <cstddef>
#include <vector>

namespace dbp {

/// S x N record: entry (j, i) is 1 iff purification i of sample j was misclassified.
class OutcomeMatrix {
 public:
  OutcomeMatrix(std::size_t samples, std::size_t copies);
  explicit OutcomeMatrix(std::vector<std::vector<int>> rows);

  std::size_t samples() const noexcept { return rows_.size(); }
  std::size_t copies() const noexcept { return copies_; }
  int at(std::size_t sample, std::size_t copy) const { return rows_.at(sample).at(copy); }
  void set(std::size_t sample, std::size_t copy, int value);
  const std::vector<int>& row(std::size_t sample) const { return rows_.at(sample); }

 private:
  std::vector<std::vector<int>> rows_;
  std::size_t copies_;
};

/// 1 - (1/S) sum_j max_i A
double wor_rob(const OutcomeMatrix& a);
/// 1 - (1/NS) sum_j sum_i A
double avg_rob(const OutcomeMatrix& a);

/// Most frequent label; ties go to the smallest label.
int majority_vote(const std::vector<int>& labels);
/// 1 - (1/S) sum_j [mv_j != y_j]
double mv_rob(const std::vector<int>& mv_labels, const std::vector<int>& truth);

}  // namespace dbp
