#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pcw/layout.hpp"
#include "pcw/model.hpp"
#include "pcw/tensor.hpp"

namespace pcw::testing {

inline ModelConfig tiny_config(PositionalKind kind = PositionalKind::learned_absolute, std::size_t vocab = 100,
                               std::size_t n = 64) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_model = 32;
  c.d_ff = 128;
  c.vocab_size = vocab;
  c.max_positions = n;
  c.positional_kind = kind;
  return c;
}

inline double max_abs(std::span<const float> v) {
  double m = 0.0;
  for (float x : v) m = std::max(m, static_cast<double>(std::fabs(x)));
  return m;
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(static_cast<double>(a[i]) - b[i]));
  return m;
}

// Largest elementwise difference relative to the reference's magnitude.
inline double rel_diff(const Matrix& got, const Matrix& want) {
  if (got.rows() != want.rows() || got.cols() != want.cols()) return INFINITY;
  return max_abs_diff(got.values(), want.values()) / std::max(1e-30, max_abs(want.values()));
}

inline std::vector<TokenId> random_tokens(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::uniform_int_distribution<TokenId> dist(0, static_cast<TokenId>(vocab - 1));
  std::vector<TokenId> out(n);
  for (auto& t : out) t = dist(rng);
  return out;
}

// Task-token logits of one masked pass over the flattened layout.
inline Matrix joint_task_logits(const WindowLayout& layout, std::span<const TokenId> flat, const Weights& w) {
  const Matrix full = forward_full(flat, assign_positions(layout), build_mask(layout), w);
  return full.slice_rows(layout.task_offset(), layout.task_length());
}

// Same logits from per-window caches, with the windows handed to the decoder
// in `order` (identity when empty).
inline Matrix composed_task_logits(const WindowLayout& layout, std::span<const TokenId> flat, const Weights& w,
                                   std::vector<std::size_t> order = {}) {
  const auto pos = assign_positions(layout).positions;
  std::vector<CacheSegment> segs;
  std::vector<CacheSegment> windows;
  if (layout.has_shared_bos()) segs.push_back(encode_window(flat.subspan(0, 1), std::span(pos).subspan(0, 1), w));
  const CacheSegment* prefix = layout.has_shared_bos() ? &segs.front() : nullptr;
  for (std::size_t b = 0; b < layout.window_count(); ++b) {
    const std::size_t off = layout.window_offset(b), c = layout.window_lengths()[b];
    windows.push_back(encode_window(flat.subspan(off, c), std::span(pos).subspan(off, c), w, prefix));
  }
  if (order.empty()) {
    order.resize(windows.size());
    for (std::size_t b = 0; b < order.size(); ++b) order[b] = b;
  }
  for (std::size_t b : order) segs.push_back(windows[b]);
  const std::size_t t0 = layout.task_offset(), t = layout.task_length();
  return decode_with_caches(segs, flat.subspan(t0, t), std::span(pos).subspan(t0, t), w);
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// Random valid UTF-8 mixing English-like words, digits, punctuation,
// whitespace runs, contractions and non-Latin scripts.
inline std::string random_utf8(std::mt19937_64& rng, std::size_t bytes) {
  static const char* const kWords[] = {"the", "cat", "Hello", "world", "don't", "I'll", "it's", "we've", "PCW",
                                       "x86", "2024", "3.14", "e-mail", "naïve", "über", "façade"};
  static const char32_t kRanges[][2] = {{0x20, 0x7E},   {0xA0, 0xFF},     {0x370, 0x3FF},  {0x400, 0x4FF},
                                        {0x300, 0x36F}, {0x4E00, 0x4FFF}, {0x3040, 0x30FF}, {0x1F300, 0x1F64F},
                                        {0x0600, 0x06FF}, {0x2000, 0x206F}};
  std::string out;
  while (out.size() < bytes) {
    switch (rng() % 6) {
      case 0:
      case 1:
        out += kWords[rng() % std::size(kWords)];
        break;
      case 2: {
        static const char* const kSpace[] = {" ", "  ", "\n", "\t", " \n ", "\r\n", "   "};
        out += kSpace[rng() % std::size(kSpace)];
        break;
      }
      default: {
        const auto& r = kRanges[rng() % std::size(kRanges)];
        const std::size_t n = 1 + rng() % 5;
        for (std::size_t i = 0; i < n; ++i) append_utf8(out, r[0] + static_cast<char32_t>(rng() % (r[1] - r[0] + 1)));
      }
    }
  }
  return out;
}

// Budget computed from first principles: drop the ceil(1%) longest samples
// (keeping one), D_90 is the smallest retained length that at least 90% of
// retained train lengths do not exceed. Empty when the task does not fit.
inline std::optional<std::size_t> oracle_n_max(std::vector<std::size_t> train, std::vector<std::size_t> test,
                                               std::size_t capacity) {
  auto retain = [](std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end(), std::greater<>());
    std::size_t drop = v.size() / 100 + (v.size() % 100 != 0 ? 1 : 0);
    if (drop >= v.size()) drop = v.size() - 1;
    v.erase(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(drop));
  };
  retain(train);
  retain(test);
  const std::size_t t_max = *std::max_element(test.begin(), test.end());
  std::size_t d_90 = 0;
  for (std::size_t v : train) {
    const auto below = static_cast<std::size_t>(std::count_if(train.begin(), train.end(), [&](std::size_t x) { return x <= v; }));
    if (below * 100 >= 90 * train.size() && (d_90 == 0 || v < d_90)) d_90 = v;
  }
  if (capacity < t_max) return std::nullopt;
  return (capacity - t_max) / d_90;
}

// Smallest spread over every split of `lengths` into `windows` groups of
// exactly `per` items.
inline std::size_t oracle_min_spread(const std::vector<std::size_t>& lengths, std::size_t windows, std::size_t per) {
  std::vector<std::size_t> totals(windows, 0), counts(windows, 0);
  std::size_t best = static_cast<std::size_t>(-1);
  std::function<void(std::size_t)> go = [&](std::size_t i) {
    if (i == lengths.size()) {
      const auto [mn, mx] = std::minmax_element(totals.begin(), totals.end());
      best = std::min(best, *mx - *mn);
      return;
    }
    for (std::size_t w = 0; w < windows; ++w) {
      if (counts[w] == per) continue;
      ++counts[w];
      totals[w] += lengths[i];
      go(i + 1);
      --counts[w];
      totals[w] -= lengths[i];
      if (counts[w] == 0) break;  // empty windows are interchangeable
    }
  };
  go(0);
  return best;
}

// JSONL classification task: the label is "pos" when the input's first word
// is from the first half of the word list.
inline std::string synthetic_jsonl(std::size_t n, std::uint64_t seed) {
  static const char* const kWords[] = {"good", "fine", "great", "nice", "bad", "poor", "awful", "dull"};
  std::mt19937_64 rng(seed);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = rng() % 8, b = rng() % 8;
    out += std::string("{\"input\": \"") + kWords[a] + " " + kWords[b] + "\", \"output\": \"" +
           (a < 4 ? "pos" : "neg") + "\"}\n";
  }
  return out;
}

inline std::filesystem::path data_dir() { return PCW_TEST_DATA; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("pcw-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace pcw::testing
