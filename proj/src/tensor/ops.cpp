#include <cmath>
#include <numbers>

#include "pcw/error.hpp"
#include "pcw/tensor.hpp"

namespace pcw {

float gelu(float x) {
  const float k = std::sqrt(2.0f / std::numbers::pi_v<float>);
  return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

float gelu_erf(float x) { return 0.5f * x * (1.0f + std::erf(x / std::numbers::sqrt2_v<float>)); }

float gelu(float x, GeluKind kind) { return kind == GeluKind::tanh ? gelu(x) : gelu_erf(x); }

void softmax_inplace(std::span<float> row) {
  if (row.empty()) throw AttentionError("softmax over an empty row");
  float max = row[0];
  for (float v : row) max = v > max ? v : max;
  float sum = 0.0f;
  for (float& v : row) {
    v = std::exp(v - max);
    sum += v;
  }
  const float inv = 1.0f / sum;
  for (float& v : row) v *= inv;
}

std::vector<float> masked_softmax(std::span<const float> logits, std::span<const std::uint8_t> allowed) {
  if (logits.size() != allowed.size()) throw ShapeError("masked_softmax: logits/mask length mismatch");
  std::vector<float> compact;
  compact.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (allowed[i]) compact.push_back(logits[i]);
  }
  if (compact.empty()) throw AttentionError("masked_softmax: every entry is masked out");
  softmax_inplace(compact);
  std::vector<float> out(logits.size(), 0.0f);
  std::size_t k = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (allowed[i]) out[i] = compact[k++];
  }
  return out;
}

void layer_norm_into(std::span<const float> x, std::span<const float> gamma, std::span<const float> beta,
                     float eps, std::span<float> out) {
  const std::size_t n = x.size();
  if (n == 0 || gamma.size() != n || beta.size() != n || out.size() != n) {
    throw ShapeError("layer_norm: length mismatch");
  }
  float mean = 0.0f;
  for (float v : x) mean += v;
  mean /= static_cast<float>(n);
  float var = 0.0f;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<float>(n);
  const float inv = 1.0f / std::sqrt(var + eps);
  for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
}

std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gamma, std::span<const float> beta,
                              float eps) {
  if (!(eps > 0.0f)) throw ShapeError("layer_norm: eps must be positive");
  std::vector<float> out(x.size());
  layer_norm_into(x, gamma, beta, eps, out);
  return out;
}

}  // namespace pcw
