#include <omp.h>

#include <algorithm>

#include "tensor/kernel_detail.hpp"

namespace pcw::kernels {

namespace {

constexpr std::size_t kColumnBlock = 256;

// Work is split over (row, column block) tiles so single-row calls (decode
// steps) still spread across threads.
template <typename Tile>
void for_each_tile(std::size_t rows, std::size_t cols, Tile&& tile) {
  const std::size_t blocks = std::max<std::size_t>(1, (cols + kColumnBlock - 1) / kColumnBlock);
  const auto units = static_cast<std::int64_t>(rows * blocks);
#pragma omp parallel for schedule(static)
  for (std::int64_t u = 0; u < units; ++u) {
    const std::size_t i = static_cast<std::size_t>(u) / blocks;
    const std::size_t j0 = (static_cast<std::size_t>(u) % blocks) * kColumnBlock;
    tile(i, j0, std::min(cols, j0 + kColumnBlock));
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  detail::check_matmul(a, b);
  Matrix c(a.rows(), b.cols());
  for_each_tile(a.rows(), b.cols(),
                [&](std::size_t i, std::size_t j0, std::size_t j1) { detail::matmul_row_block(a, b, c, i, j0, j1); });
  return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  detail::check_matmul_bt(a, b);
  Matrix c(a.rows(), b.rows());
  for_each_tile(a.rows(), b.rows(), [&](std::size_t i, std::size_t j0, std::size_t j1) {
    for (std::size_t j = j0; j < j1; ++j) c(i, j) = detail::dot(a.row(i).data(), b.row(j).data(), a.cols());
  });
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
  const auto units = static_cast<std::int64_t>(shape.n * args.n_heads);
#pragma omp parallel
  {
    std::vector<float> scores;
#pragma omp for schedule(dynamic, 4)
    for (std::int64_t u = 0; u < units; ++u) {
      const std::size_t i = static_cast<std::size_t>(u) / args.n_heads;
      const std::size_t h = static_cast<std::size_t>(u) % args.n_heads;
      detail::attention_unit(args, shape, i, h, scores, out);
    }
  }
  return out;
}

}  // namespace pcw::kernels
