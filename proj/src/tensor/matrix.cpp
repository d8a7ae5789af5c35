#include "pcw/error.hpp"
#include "pcw/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pcw {

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.begin()->size();
  std::vector<float> data;
  data.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw ShapeError("ragged rows in Matrix::from_rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(n, m, std::move(data));
}

Matrix Matrix::slice_rows(std::size_t begin, std::size_t count) const {
  if (begin + count > rows_) throw ShapeError("row slice out of range");
  std::vector<float> data(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                          data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols_));
  return Matrix(count, cols_, std::move(data));
}

void Matrix::append_rows(const Matrix& other) {
  if (other.rows_ == 0) return;
  if (rows_ == 0 && cols_ == 0) cols_ = other.cols_;
  if (other.cols_ != cols_) throw ShapeError("append_rows: column mismatch");
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  rows_ += other.rows_;
}

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace pcw
