#pragma once

#include <span>
#include <vector>

#include "pcw/model.hpp"

namespace pcw::detail {

struct StackResult {
  Matrix hidden;          // final residual stream, before ln_f
  CacheSegment produced;  // keys/values of the new tokens
};

// One pass of the transformer over new `tokens`. Every new token sees all
// `context` keys (in order) and the new keys allowed by `self_mask` (n x n,
// empty = causal).
StackResult run_stack(const Weights& w, std::span<const TokenId> tokens, std::span<const std::size_t> positions,
                      std::span<const CacheSegment* const> context, std::span<const std::uint8_t> self_mask);

// ln_f followed by the output projection.
Matrix logits(const Weights& w, const Matrix& hidden);

}  // namespace pcw::detail
