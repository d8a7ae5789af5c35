#include "pcw/layout.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <string>

#include "pcw/error.hpp"

namespace pcw {

std::size_t WindowLayout::longest_window() const {
  return *std::max_element(window_lengths_.begin(), window_lengths_.end());
}

std::size_t WindowLayout::context_tokens() const {
  return std::accumulate(window_lengths_.begin(), window_lengths_.end(), std::size_t{0});
}

std::size_t WindowLayout::total_tokens() const { return bos_count() + context_tokens() + task_length_; }

std::size_t WindowLayout::window_offset(std::size_t b) const {
  std::size_t off = bos_count();
  for (std::size_t i = 0; i < b; ++i) off += window_lengths_[i];
  return off;
}

WindowLayout make_layout(std::vector<std::size_t> window_lengths, std::size_t task_length, std::size_t capacity,
                         bool has_shared_bos) {
  if (window_lengths.empty()) throw LayoutError("layout: at least one window is required");
  for (std::size_t b = 0; b < window_lengths.size(); ++b) {
    if (window_lengths[b] == 0) throw LayoutError("layout: window " + std::to_string(b) + " is empty");
  }
  if (task_length == 0) throw LayoutError("layout: task length must be at least 1");
  const std::size_t longest = *std::max_element(window_lengths.begin(), window_lengths.end());
  const std::size_t bos = has_shared_bos ? 1 : 0;
  if (longest + task_length + bos > capacity) {
    throw LayoutError("layout: longest window " + std::to_string(longest) + " + task " + std::to_string(task_length) +
                      (bos ? " + bos 1" : "") + " exceeds capacity " + std::to_string(capacity));
  }
  WindowLayout layout;
  layout.window_lengths_ = std::move(window_lengths);
  layout.task_length_ = task_length;
  layout.capacity_ = capacity;
  layout.has_shared_bos_ = has_shared_bos;
  return layout;
}

PositionAssignment assign_positions(const WindowLayout& layout) {
  PositionAssignment out;
  out.positions.reserve(layout.total_tokens());
  const std::size_t p0 = layout.first_window_position();
  if (layout.has_shared_bos()) out.positions.push_back(0);
  for (std::size_t c : layout.window_lengths()) {
    for (std::size_t j = 0; j < c; ++j) out.positions.push_back(p0 + j);
  }
  const auto task = task_positions(layout, 0, layout.task_length());
  out.positions.insert(out.positions.end(), task.begin(), task.end());
  return out;
}

std::vector<std::size_t> task_positions(const WindowLayout& layout, std::size_t first, std::size_t count) {
  const std::size_t start = layout.first_window_position() + layout.longest_window() + first;
  if (start + count > layout.capacity()) {
    throw LayoutError("layout: task position " + std::to_string(start + count - 1) + " exceeds capacity " +
                      std::to_string(layout.capacity()));
  }
  std::vector<std::size_t> out(count);
  std::iota(out.begin(), out.end(), start);
  return out;
}

BlockCausalMask::BlockCausalMask(std::size_t size, std::vector<std::uint8_t> allowed)
    : size_(size), cells_(std::move(allowed)) {
  if (cells_.size() != size_ * size_) throw ShapeError("mask: cell count != size^2");
}

BlockCausalMask BlockCausalMask::causal(std::size_t size) {
  std::vector<std::uint8_t> cells(size * size, 0);
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j <= i; ++j) cells[i * size + j] = 1;
  }
  return BlockCausalMask(size, std::move(cells));
}

std::uint64_t BlockCausalMask::popcount() const {
  return static_cast<std::uint64_t>(std::count_if(cells_.begin(), cells_.end(), [](std::uint8_t v) { return v != 0; }));
}

BlockCausalMask build_mask(const WindowLayout& layout) {
  const std::size_t n = layout.total_tokens();
  std::vector<std::uint8_t> cells(n * n, 0);
  auto set = [&](std::size_t q, std::size_t k) { cells[q * n + k] = 1; };

  const std::size_t bos = layout.bos_count();
  if (bos) {
    for (std::size_t q = 0; q < n; ++q) set(q, 0);
  }
  for (std::size_t b = 0; b < layout.window_count(); ++b) {
    const std::size_t off = layout.window_offset(b);
    const std::size_t c = layout.window_lengths()[b];
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j <= i; ++j) set(off + i, off + j);
    }
  }
  const std::size_t task = layout.task_offset();
  for (std::size_t t = 0; t < layout.task_length(); ++t) {
    for (std::size_t k = bos; k <= task + t; ++k) set(task + t, k);
  }
  return BlockCausalMask(n, std::move(cells));
}

std::uint64_t allowed_pair_count(const WindowLayout& layout) {
  std::uint64_t windows = 0;
  for (std::size_t c : layout.window_lengths()) windows += static_cast<std::uint64_t>(c) * (c + 1) / 2;
  const std::uint64_t t = layout.task_length();
  const std::uint64_t context = layout.context_tokens();
  const std::uint64_t bos = layout.has_shared_bos() ? layout.total_tokens() : 0;
  return windows + t * context + t * (t + 1) / 2 + bos;
}

void write_mask_dump(std::ostream& out, const PositionAssignment& positions, const BlockCausalMask& mask) {
  out << "positions";
  for (std::size_t p : positions.positions) out << ' ' << p;
  out << "\nmask " << mask.size() << '\n';
  for (std::size_t q = 0; q < mask.size(); ++q) {
    for (std::size_t k = 0; k < mask.size(); ++k) out << (k ? " " : "") << (mask.allowed(q, k) ? '1' : '0');
    out << '\n';
  }
}

}  // namespace pcw
