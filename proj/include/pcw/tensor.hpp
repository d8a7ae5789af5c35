#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace pcw {

// Dense row-major float32 matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<float>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  // Rows [begin, begin + count) as a new matrix.
  Matrix slice_rows(std::size_t begin, std::size_t count) const;
  void append_rows(const Matrix& other);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

bool all_finite(std::span<const float> values);

enum class GeluKind { tanh, erf };

// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
float gelu(float x);
float gelu_erf(float x);
float gelu(float x, GeluKind kind);

// Softmax over entries with allowed[i] != 0; disallowed entries are exactly 0.
// Throws AttentionError if nothing is allowed.
std::vector<float> masked_softmax(std::span<const float> logits, std::span<const std::uint8_t> allowed);

// In-place softmax of a fully visible row. Shared by masked_softmax and the
// attention kernels so both normalize with identical arithmetic.
void softmax_inplace(std::span<float> row);

// Population-variance layer normalization.
std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gamma,
                              std::span<const float> beta, float eps);
void layer_norm_into(std::span<const float> x, std::span<const float> gamma,
                     std::span<const float> beta, float eps, std::span<float> out);

// Keys/values of tokens that every query in an attention call may see.
struct KvView {
  const Matrix* keys = nullptr;
  const Matrix* values = nullptr;
};

// Multi-head scaled dot-product attention. Keys are ordered as the context
// blocks (in the given order) followed by the self keys; one softmax runs over
// the whole visible key set in that order.
struct AttentionArgs {
  const Matrix* queries = nullptr;      // [n x d_model]
  std::span<const KvView> context;      // visible to every query
  const Matrix* self_keys = nullptr;    // [n x d_model]
  const Matrix* self_values = nullptr;  // [n x d_model]
  // n x n row-major (row = query) over the self keys; empty means causal.
  std::span<const std::uint8_t> self_mask;
  std::size_t n_heads = 1;
};

// Kernels. The default namespace runs OpenMP-parallel loops; `serial` holds the
// single-threaded reference. Both accumulate every output element in the same
// left-to-right order, so their results are bit-identical.
namespace kernels {

Matrix matmul(const Matrix& a, const Matrix& b);
// a @ b^T, for row-major weight tables such as the token embedding.
Matrix matmul_bt(const Matrix& a, const Matrix& b);
// x @ w + bias (bias added after accumulation).
Matrix linear(const Matrix& x, const Matrix& w, std::span<const float> bias);
Matrix attention(const AttentionArgs& args);

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_bt(const Matrix& a, const Matrix& b);
Matrix linear(const Matrix& x, const Matrix& w, std::span<const float> bias);
Matrix attention(const AttentionArgs& args);
}  // namespace serial

}  // namespace kernels

}  // namespace pcw
