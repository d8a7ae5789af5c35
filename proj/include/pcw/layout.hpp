#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace pcw {

// Geometry of one parallel-context pass: B windows of c_b tokens, T task
// tokens, an optional shared BOS, and the position-table capacity N.
//
// Flattened token order is: [BOS] window_1 ... window_B task. Positions are
// 0-based. With p0 = 1 if a BOS is present (else 0), every window starts at
// p0 (left indentation) and the task tokens continue right after the longest
// window, so the usable context per window is C = N - T - bos.
class WindowLayout {
 public:
  const std::vector<std::size_t>& window_lengths() const { return window_lengths_; }
  std::size_t window_count() const { return window_lengths_.size(); }
  std::size_t task_length() const { return task_length_; }
  std::size_t capacity() const { return capacity_; }
  bool has_shared_bos() const { return has_shared_bos_; }

  std::size_t bos_count() const { return has_shared_bos_ ? 1 : 0; }
  std::size_t first_window_position() const { return bos_count(); }
  std::size_t longest_window() const;
  std::size_t context_tokens() const;  // sum of c_b
  std::size_t total_tokens() const;    // bos + sum c_b + T
  std::size_t context_bound() const { return capacity_ - task_length_ - bos_count(); }
  // Flattened index of window `b`'s first token / of the first task token.
  std::size_t window_offset(std::size_t b) const;
  std::size_t task_offset() const { return bos_count() + context_tokens(); }

  friend WindowLayout make_layout(std::vector<std::size_t> window_lengths, std::size_t task_length,
                                  std::size_t capacity, bool has_shared_bos);

 private:
  WindowLayout() = default;
  std::vector<std::size_t> window_lengths_;
  std::size_t task_length_ = 0;
  std::size_t capacity_ = 0;
  bool has_shared_bos_ = false;
};

// Throws LayoutError naming the violated bound.
WindowLayout make_layout(std::vector<std::size_t> window_lengths, std::size_t task_length, std::size_t capacity,
                         bool has_shared_bos);

struct PositionAssignment {
  std::vector<std::size_t> positions;  // one per flattened token
};

PositionAssignment assign_positions(const WindowLayout& layout);

// Task positions for `count` tokens starting at task offset `first`, i.e. the
// positions of task tokens first..first+count-1 under `layout`'s rule.
std::vector<std::size_t> task_positions(const WindowLayout& layout, std::size_t first, std::size_t count);

class BlockCausalMask {
 public:
  BlockCausalMask() = default;
  BlockCausalMask(std::size_t size, std::vector<std::uint8_t> allowed);

  static BlockCausalMask causal(std::size_t size);

  std::size_t size() const { return size_; }
  bool allowed(std::size_t query, std::size_t key) const { return cells_[query * size_ + key] != 0; }
  std::span<const std::uint8_t> row(std::size_t query) const { return {cells_.data() + query * size_, size_}; }
  std::span<const std::uint8_t> cells() const { return cells_; }
  std::uint64_t popcount() const;

  friend bool operator==(const BlockCausalMask&, const BlockCausalMask&) = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint8_t> cells_;
};

BlockCausalMask build_mask(const WindowLayout& layout);

// Number of true cells in build_mask(layout), computed in closed form:
// sum_b c_b(c_b+1)/2 + T*sum_b c_b + T(T+1)/2 + bos*(total tokens).
std::uint64_t allowed_pair_count(const WindowLayout& layout);

// Text dump used by `pcw mask-dump`:
//   positions <p_0> ... <p_{n-1}>
//   mask <n>
//   n rows of space-separated 0/1 (row = query token)
void write_mask_dump(std::ostream& out, const PositionAssignment& positions, const BlockCausalMask& mask);

}  // namespace pcw
