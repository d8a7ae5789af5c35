#include <cmath>

#include "pcw/error.hpp"
#include "pcw/model.hpp"

namespace pcw {

void apply_rotary_inplace(std::span<float> head, std::size_t position, float base) {
  const std::size_t dim = head.size();
  if (dim % 2 != 0) throw ConfigError("rotary: head dimension " + std::to_string(dim) + " is odd");
  for (std::size_t k = 0; k < dim / 2; ++k) {
    const double inv_freq = std::pow(static_cast<double>(base), -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    const double angle = static_cast<double>(position) * inv_freq;
    const auto c = static_cast<float>(std::cos(angle));
    const auto s = static_cast<float>(std::sin(angle));
    const float x = head[2 * k];
    const float y = head[2 * k + 1];
    head[2 * k] = x * c - y * s;
    head[2 * k + 1] = x * s + y * c;
  }
}

std::vector<float> apply_rotary(std::span<const float> head, std::size_t position, std::size_t head_dim, float base) {
  if (head.size() != head_dim) throw ShapeError("rotary: vector length != head_dim");
  std::vector<float> out(head.begin(), head.end());
  apply_rotary_inplace(out, position, base);
  return out;
}

}  // namespace pcw
