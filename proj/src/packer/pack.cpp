#include <algorithm>
#include <limits>
#include <string>

#include "pcw/error.hpp"
#include "pcw/packer.hpp"
#include "pcw/rng.hpp"

namespace pcw {

namespace {

void recompute_totals(WindowAssignment& a, std::span<const std::size_t> lengths) {
  a.totals.assign(a.windows.size(), 0);
  for (std::size_t w = 0; w < a.windows.size(); ++w) {
    for (std::size_t idx : a.windows[w]) a.totals[w] += lengths[idx];
  }
}

// Repeatedly applies the single swap between the heaviest and lightest
// windows that lowers the spread the most; stops when no swap helps.
void balance(WindowAssignment& a, std::span<const std::size_t> lengths) {
  const std::size_t B = a.windows.size();
  while (B > 1) {
    const auto hi = static_cast<std::size_t>(std::max_element(a.totals.begin(), a.totals.end()) - a.totals.begin());
    const auto lo = static_cast<std::size_t>(std::min_element(a.totals.begin(), a.totals.end()) - a.totals.begin());
    const std::size_t spread = a.totals[hi] - a.totals[lo];
    if (spread == 0) return;

    std::size_t others_max = 0;
    std::size_t others_min = std::numeric_limits<std::size_t>::max();
    for (std::size_t w = 0; w < B; ++w) {
      if (w == hi || w == lo) continue;
      others_max = std::max(others_max, a.totals[w]);
      others_min = std::min(others_min, a.totals[w]);
    }

    std::size_t best_spread = spread;
    std::size_t best_i = 0, best_j = 0;
    for (std::size_t i = 0; i < a.windows[hi].size(); ++i) {
      for (std::size_t j = 0; j < a.windows[lo].size(); ++j) {
        const std::size_t la = lengths[a.windows[hi][i]];
        const std::size_t lb = lengths[a.windows[lo][j]];
        if (la <= lb) continue;
        const std::size_t new_hi = a.totals[hi] - (la - lb);
        const std::size_t new_lo = a.totals[lo] + (la - lb);
        const std::size_t mx = std::max({others_max, new_hi, new_lo});
        const std::size_t mn = std::min({others_min, new_hi, new_lo});
        if (mx - mn < best_spread) {
          best_spread = mx - mn;
          best_i = i;
          best_j = j;
        }
      }
    }
    if (best_spread >= spread) return;
    std::swap(a.windows[hi][best_i], a.windows[lo][best_j]);
    recompute_totals(a, lengths);
  }
}

}  // namespace

std::size_t WindowAssignment::spread() const {
  if (totals.empty()) return 0;
  const auto [mn, mx] = std::minmax_element(totals.begin(), totals.end());
  return *mx - *mn;
}

WindowAssignment chunk_in_order(std::span<const std::size_t> example_lengths, std::span<const std::size_t> order,
                                std::size_t windows, std::size_t n_max) {
  if (order.size() < windows * n_max) throw PackingError("pack: not enough examples to chunk");
  WindowAssignment a;
  a.sampled.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(windows * n_max));
  a.windows.resize(windows);
  for (std::size_t w = 0; w < windows; ++w) {
    a.windows[w].assign(a.sampled.begin() + static_cast<std::ptrdiff_t>(w * n_max),
                        a.sampled.begin() + static_cast<std::ptrdiff_t>((w + 1) * n_max));
  }
  recompute_totals(a, example_lengths);
  return a;
}

WindowAssignment pack(std::span<const std::size_t> example_lengths, std::size_t windows, std::size_t n_max,
                      std::uint64_t seed) {
  if (windows == 0) throw PackingError("pack: need at least one window");
  if (n_max == 0) throw PackingError("pack: n_max is 0, windows would be empty");
  const std::size_t need = windows * n_max;
  if (example_lengths.size() < need) {
    throw PackingError("pack: " + std::to_string(need) + " examples needed, " + std::to_string(example_lengths.size()) +
                       " available");
  }
  const auto sampled = sample_indices(example_lengths.size(), need, seed);

  // Start 1: longest first, dealt in snake order (0..B-1, B-1..0, ...).
  std::vector<std::size_t> by_length(need);
  for (std::size_t i = 0; i < need; ++i) by_length[i] = i;
  std::stable_sort(by_length.begin(), by_length.end(), [&](std::size_t x, std::size_t y) {
    return example_lengths[sampled[x]] > example_lengths[sampled[y]];
  });
  WindowAssignment snake;
  snake.sampled = sampled;
  snake.windows.resize(windows);
  for (std::size_t r = 0; r < n_max; ++r) {
    for (std::size_t k = 0; k < windows; ++k) {
      const std::size_t w = (r % 2 == 0) ? k : windows - 1 - k;
      snake.windows[w].push_back(sampled[by_length[r * windows + k]]);
    }
  }
  recompute_totals(snake, example_lengths);
  balance(snake, example_lengths);

  // Start 2: draw order chunks. Keeping the better of the two guarantees the
  // result is never worse than plain chunking.
  WindowAssignment chunked = chunk_in_order(example_lengths, sampled, windows, n_max);
  balance(chunked, example_lengths);

  WindowAssignment best = chunked.spread() < snake.spread() ? std::move(chunked) : std::move(snake);

  // Within a window, keep draw order.
  std::vector<std::size_t> draw_pos(example_lengths.size());
  for (std::size_t i = 0; i < need; ++i) draw_pos[sampled[i]] = i;
  for (auto& w : best.windows) {
    std::sort(w.begin(), w.end(), [&](std::size_t x, std::size_t y) { return draw_pos[x] < draw_pos[y]; });
  }
  return best;
}

}  // namespace pcw
