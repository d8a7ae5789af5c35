#include <string>

#include "model/stack.hpp"
#include "pcw/error.hpp"

namespace pcw {

namespace detail {

namespace {

void check_inputs(const Weights& w, std::span<const TokenId> tokens, std::span<const std::size_t> positions) {
  if (tokens.size() != positions.size()) {
    throw ShapeError("forward: " + std::to_string(tokens.size()) + " tokens but " + std::to_string(positions.size()) +
                     " positions");
  }
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= w.config.vocab_size) {
      throw ShapeError("forward: token id " + std::to_string(t) + " outside vocabulary");
    }
  }
  for (std::size_t p : positions) {
    if (p >= w.config.max_positions) {
      throw PositionError("forward: position " + std::to_string(p) + " >= capacity " +
                          std::to_string(w.config.max_positions));
    }
  }
}

Matrix layer_norm_rows(const Matrix& x, const std::vector<float>& gamma, const std::vector<float>& beta, float eps) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) layer_norm_into(x.row(i), gamma, beta, eps, out.row(i));
  return out;
}

void add_into(Matrix& x, const Matrix& y) {
  auto xs = x.values();
  auto ys = y.values();
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] += ys[i];
}

}  // namespace

StackResult run_stack(const Weights& w, std::span<const TokenId> tokens, std::span<const std::size_t> positions,
                      std::span<const CacheSegment* const> context, std::span<const std::uint8_t> self_mask) {
  check_inputs(w, tokens, positions);
  const auto& cfg = w.config;
  const std::size_t n = tokens.size();
  const std::size_t d = cfg.d_model;
  const std::size_t hd = cfg.head_dim();
  const bool rotary = cfg.positional_kind == PositionalKind::rotary;
  for (const CacheSegment* seg : context) {
    if (seg->keys.size() != cfg.n_layers || seg->values.size() != cfg.n_layers) {
      throw ShapeError("forward: cache segment layer count does not match the model");
    }
  }

  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = x.row(i);
    auto emb = w.token_embedding.row(static_cast<std::size_t>(tokens[i]));
    for (std::size_t e = 0; e < d; ++e) dst[e] = emb[e];
    if (!rotary) {
      auto pos = w.positional_table.row(positions[i]);
      for (std::size_t e = 0; e < d; ++e) dst[e] += pos[e];
    }
  }

  StackResult out;
  out.produced.position_ids.assign(positions.begin(), positions.end());
  std::vector<KvView> views;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const auto& L = w.layers[l];
    const Matrix h = layer_norm_rows(x, L.ln1_gamma, L.ln1_beta, cfg.ln_eps);
    const Matrix qkv = kernels::linear(h, L.attn_qkv, L.attn_qkv_bias);
    Matrix q(n, d), k(n, d), v(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      auto src = qkv.row(i);
      std::copy(src.begin(), src.begin() + d, q.row(i).begin());
      std::copy(src.begin() + d, src.begin() + 2 * d, k.row(i).begin());
      std::copy(src.begin() + 2 * d, src.end(), v.row(i).begin());
      if (rotary) {
        for (std::size_t head = 0; head < cfg.n_heads; ++head) {
          apply_rotary_inplace(q.row(i).subspan(head * hd, hd), positions[i], cfg.rotary_base);
          apply_rotary_inplace(k.row(i).subspan(head * hd, hd), positions[i], cfg.rotary_base);
        }
      }
    }

    views.clear();
    for (const CacheSegment* seg : context) views.push_back({&seg->keys[l], &seg->values[l]});
    AttentionArgs args;
    args.queries = &q;
    args.context = views;
    args.self_keys = &k;
    args.self_values = &v;
    args.self_mask = self_mask;
    args.n_heads = cfg.n_heads;
    const Matrix attn = kernels::attention(args);
    add_into(x, kernels::linear(attn, L.attn_proj, L.attn_proj_bias));

    const Matrix h2 = layer_norm_rows(x, L.ln2_gamma, L.ln2_beta, cfg.ln_eps);
    Matrix f = kernels::linear(h2, L.mlp_fc, L.mlp_fc_bias);
    for (float& e : f.values()) e = gelu(e, cfg.gelu);
    add_into(x, kernels::linear(f, L.mlp_proj, L.mlp_proj_bias));

    out.produced.keys.push_back(std::move(k));
    out.produced.values.push_back(std::move(v));
  }
  out.hidden = std::move(x);
  return out;
}

Matrix logits(const Weights& w, const Matrix& hidden) {
  const Matrix h = layer_norm_rows(hidden, w.ln_f_gamma, w.ln_f_beta, w.config.ln_eps);
  return kernels::matmul_bt(h, w.output_embedding());
}

}  // namespace detail

Matrix forward_full(std::span<const TokenId> tokens, const PositionAssignment& positions, const BlockCausalMask& mask,
                    const Weights& weights) {
  if (mask.size() != tokens.size()) throw ShapeError("forward_full: mask size does not match token count");
  auto r = detail::run_stack(weights, tokens, positions.positions, {}, mask.cells());
  return detail::logits(weights, r.hidden);
}

Matrix forward_causal(std::span<const TokenId> tokens, std::span<const std::size_t> positions, const Weights& weights) {
  auto r = detail::run_stack(weights, tokens, positions, {}, {});
  return detail::logits(weights, r.hidden);
}

CacheSegment encode_window(std::span<const TokenId> tokens, std::span<const std::size_t> positions,
                           const Weights& weights, const CacheSegment* prefix) {
  if (tokens.empty()) throw ShapeError("encode_window: empty window");
  std::vector<const CacheSegment*> context;
  if (prefix) context.push_back(prefix);
  return detail::run_stack(weights, tokens, positions, context, {}).produced;
}

Matrix decode_with_caches(std::span<const CacheSegment> segments, std::span<const TokenId> tokens,
                          std::span<const std::size_t> positions, const Weights& weights) {
  if (segments.empty()) throw ShapeError("decode_with_caches: no cache segments");
  if (tokens.empty()) throw ShapeError("decode_with_caches: no task tokens");
  std::vector<const CacheSegment*> context;
  for (const auto& s : segments) context.push_back(&s);
  auto r = detail::run_stack(weights, tokens, positions, context, {});
  return detail::logits(weights, r.hidden);
}

}  // namespace pcw
