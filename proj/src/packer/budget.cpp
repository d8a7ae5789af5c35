#include <algorithm>
#include <string>
#include <vector>

#include "pcw/error.hpp"
#include "pcw/packer.hpp"

namespace pcw {

std::size_t trim_count(std::size_t n) {
  if (n <= 1) return 0;
  return std::min((n + 99) / 100, n - 1);
}

std::size_t nearest_rank_percentile(std::span<const std::size_t> sorted, unsigned pct) {
  if (sorted.empty()) throw BudgetError("percentile of an empty list");
  const std::size_t rank = std::max<std::size_t>(1, (pct * sorted.size() + 99) / 100);
  return sorted[rank - 1];
}

PackingBudget compute_n_max(std::span<const std::size_t> train_lengths, std::span<const std::size_t> test_lengths,
                            std::size_t capacity) {
  if (train_lengths.empty() || test_lengths.empty()) throw BudgetError("budget: train and test lengths must be non-empty");
  if (capacity == 0) throw BudgetError("budget: capacity must be positive");

  std::vector<std::size_t> train(train_lengths.begin(), train_lengths.end());
  std::vector<std::size_t> test(test_lengths.begin(), test_lengths.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());

  PackingBudget b;
  b.trimmed_train = trim_count(train.size());
  b.trimmed_test = trim_count(test.size());
  train.resize(train.size() - b.trimmed_train);
  test.resize(test.size() - b.trimmed_test);

  b.t_max = test.back();
  b.d_90 = nearest_rank_percentile(train, 90);
  if (b.d_90 == 0) throw BudgetError("budget: 90th-percentile train length is zero");
  if (capacity < b.t_max) {
    throw BudgetError("budget: longest test sample (" + std::to_string(b.t_max) + " tokens) exceeds capacity " +
                      std::to_string(capacity));
  }
  b.n_max = (capacity - b.t_max) / b.d_90;
  return b;
}

}  // namespace pcw
