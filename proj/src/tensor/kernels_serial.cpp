#include "tensor/kernel_detail.hpp"

namespace pcw::kernels::serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  detail::check_matmul(a, b);
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) detail::matmul_row_block(a, b, c, i, 0, b.cols());
  return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  detail::check_matmul_bt(a, b);
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = detail::dot(a.row(i).data(), b.row(j).data(), a.cols());
  }
  return c;
}

Matrix linear(const Matrix& x, const Matrix& w, std::span<const float> bias) {
  detail::check_bias(w, bias);
  Matrix c = matmul(x, w);
  for (std::size_t i = 0; i < c.rows(); ++i) detail::add_bias(c, i, bias);
  return c;
}

Matrix attention(const AttentionArgs& args) {
  const auto shape = detail::check_attention(args);
  Matrix out(shape.n, shape.d);
  std::vector<float> scores;
  for (std::size_t i = 0; i < shape.n; ++i) {
    for (std::size_t h = 0; h < args.n_heads; ++h) detail::attention_unit(args, shape, i, h, scores, out);
  }
  return out;
}

}  // namespace pcw::kernels::serial
