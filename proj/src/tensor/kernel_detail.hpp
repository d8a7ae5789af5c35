#pragma once

// Per-element building blocks shared by the serial and parallel kernels. The
// parallel kernels only change which thread runs a unit of work, never the
// arithmetic inside it.

#include <cmath>
#include <cstddef>
#include <vector>

#include "pcw/error.hpp"
#include "pcw/tensor.hpp"

namespace pcw::kernels::detail {

inline void check_matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " @ " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

inline void check_matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_bt: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " @ (" +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")^T");
  }
}

inline void check_bias(const Matrix& w, std::span<const float> bias) {
  if (!bias.empty() && bias.size() != w.cols()) throw ShapeError("linear: bias length mismatch");
}

// c[i, j0:j1] = sum_k a[i, k] * b[k, j0:j1], k ascending.
inline void matmul_row_block(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i, std::size_t j0,
                             std::size_t j1) {
  const std::size_t n = b.cols();
  const float* arow = a.row(i).data();
  const float* bdata = b.values().data();
  float* crow = c.row(i).data();
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const float aik = arow[k];
    const float* brow = bdata + k * n;
    for (std::size_t j = j0; j < j1; ++j) crow[j] += aik * brow[j];
  }
}

inline float dot(const float* x, const float* y, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t k = 0; k < n; ++k) acc += x[k] * y[k];
  return acc;
}

inline void add_bias(Matrix& c, std::size_t i, std::span<const float> bias) {
  if (bias.empty()) return;
  auto row = c.row(i);
  for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
}

struct AttentionShape {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t head_dim = 0;
  std::size_t context_rows = 0;
};

inline AttentionShape check_attention(const AttentionArgs& args) {
  if (!args.queries || !args.self_keys || !args.self_values) throw ShapeError("attention: null input");
  AttentionShape s;
  s.n = args.queries->rows();
  s.d = args.queries->cols();
  if (args.n_heads == 0 || s.d % args.n_heads != 0) throw ShapeError("attention: d_model not divisible by heads");
  s.head_dim = s.d / args.n_heads;
  if (args.self_keys->rows() != s.n || args.self_values->rows() != s.n || args.self_keys->cols() != s.d ||
      args.self_values->cols() != s.d) {
    throw ShapeError("attention: self keys/values shape mismatch");
  }
  for (const auto& kv : args.context) {
    if (!kv.keys || !kv.values || kv.keys->rows() != kv.values->rows() || kv.keys->cols() != s.d ||
        kv.values->cols() != s.d) {
      throw ShapeError("attention: context block shape mismatch");
    }
    s.context_rows += kv.keys->rows();
  }
  if (!args.self_mask.empty() && args.self_mask.size() != s.n * s.n) throw ShapeError("attention: mask size mismatch");
  if (s.context_rows == 0 && !args.self_mask.empty()) {
    for (std::size_t i = 0; i < s.n; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < s.n && !any; ++j) any = args.self_mask[i * s.n + j] != 0;
      if (!any) throw AttentionError("attention: query " + std::to_string(i) + " has no visible key");
    }
  }
  return s;
}

inline bool self_visible(const AttentionArgs& args, std::size_t n, std::size_t i, std::size_t j) {
  return args.self_mask.empty() ? j <= i : args.self_mask[i * n + j] != 0;
}

// Output of query row `i`, head `h`. `scores` is per-thread scratch.
inline void attention_unit(const AttentionArgs& args, const AttentionShape& s, std::size_t i, std::size_t h,
                           std::vector<float>& scores, Matrix& out) {
  const std::size_t off = h * s.head_dim;
  const float scale = 1.0f / std::sqrt(static_cast<float>(s.head_dim));
  const float* q = args.queries->row(i).data() + off;

  scores.clear();
  for (const auto& kv : args.context) {
    for (std::size_t r = 0; r < kv.keys->rows(); ++r) {
      scores.push_back(dot(q, kv.keys->row(r).data() + off, s.head_dim) * scale);
    }
  }
  for (std::size_t j = 0; j < s.n; ++j) {
    if (self_visible(args, s.n, i, j)) scores.push_back(dot(q, args.self_keys->row(j).data() + off, s.head_dim) * scale);
  }
  softmax_inplace(scores);

  float* o = out.row(i).data() + off;
  std::size_t w = 0;
  auto accumulate = [&](const float* v) {
    const float p = scores[w++];
    for (std::size_t e = 0; e < s.head_dim; ++e) o[e] += p * v[e];
  };
  for (const auto& kv : args.context) {
    for (std::size_t r = 0; r < kv.values->rows(); ++r) accumulate(kv.values->row(r).data() + off);
  }
  for (std::size_t j = 0; j < s.n; ++j) {
    if (self_visible(args, s.n, i, j)) accumulate(args.self_values->row(j).data() + off);
  }
}

}  // namespace pcw::kernels::detail
