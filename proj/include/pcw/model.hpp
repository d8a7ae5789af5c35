#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pcw/layout.hpp"
#include "pcw/tensor.hpp"
#include "pcw/types.hpp"

namespace pcw {

enum class PositionalKind { learned_absolute, rotary };

struct ModelConfig {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t d_model = 0;
  std::size_t d_ff = 0;
  std::size_t vocab_size = 0;
  std::size_t max_positions = 0;  // N
  PositionalKind positional_kind = PositionalKind::learned_absolute;
  float ln_eps = 1e-5f;
  bool tie_lm_head = true;
  GeluKind gelu = GeluKind::tanh;
  float rotary_base = 10000.0f;

  std::size_t head_dim() const { return d_model / n_heads; }
  // Throws ConfigError.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Companion config file (JSON object with the fields above; positional_kind is
// "learned_absolute" or "rotary", gelu is "tanh" or "erf").
ModelConfig parse_config(const std::string& json_text);
std::string config_to_json(const ModelConfig& config);
ModelConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ModelConfig& config);

// Linear weights are stored [in, out] and applied as x @ W + b.
struct LayerWeights {
  std::vector<float> ln1_gamma, ln1_beta;
  Matrix attn_qkv;  // [d, 3d]: q | k | v
  std::vector<float> attn_qkv_bias;
  Matrix attn_proj;  // [d, d]
  std::vector<float> attn_proj_bias;
  std::vector<float> ln2_gamma, ln2_beta;
  Matrix mlp_fc;  // [d, d_ff]
  std::vector<float> mlp_fc_bias;
  Matrix mlp_proj;  // [d_ff, d]
  std::vector<float> mlp_proj_bias;
};

struct Weights {
  ModelConfig config;
  Matrix token_embedding;   // [vocab, d]
  Matrix positional_table;  // [N, d]; empty for rotary models
  std::vector<LayerWeights> layers;
  std::vector<float> ln_f_gamma, ln_f_beta;
  Matrix lm_head;  // [vocab, d]; empty when tied to token_embedding

  const Matrix& output_embedding() const { return config.tie_lm_head ? token_embedding : lm_head; }
};

// Reads a PCWT1 container and checks every tensor against `config`. Throws
// LoadError naming the offending tensor.
Weights load_weights(const std::filesystem::path& container, const ModelConfig& config);
void save_weights(const std::filesystem::path& container, const Weights& weights);
// Gaussian-initialized weights, deterministic in `seed`.
Weights random_weights(const ModelConfig& config, std::uint64_t seed, float scale = 0.02f);

// Keys/values of independently encoded tokens, one matrix per layer. Keys of
// rotary models are stored already rotated by their own positions.
struct CacheSegment {
  std::vector<Matrix> keys;    // n_layers x [tokens x d_model]
  std::vector<Matrix> values;  // n_layers x [tokens x d_model]
  std::vector<std::size_t> position_ids;

  std::size_t token_count() const { return position_ids.size(); }
};

// Rotates consecutive pairs (2k, 2k+1) of one head vector by
// position * base^(-2k / head_dim). Throws ConfigError for odd head_dim.
std::vector<float> apply_rotary(std::span<const float> head, std::size_t position, std::size_t head_dim,
                                float base = 10000.0f);
void apply_rotary_inplace(std::span<float> head, std::size_t position, float base = 10000.0f);

// Logits [tokens x vocab] of one pass over `tokens` under an arbitrary mask.
Matrix forward_full(std::span<const TokenId> tokens, const PositionAssignment& positions, const BlockCausalMask& mask,
                    const Weights& weights);

// Plain causal pass with no mask matrix; the vanilla reference path.
Matrix forward_causal(std::span<const TokenId> tokens, std::span<const std::size_t> positions, const Weights& weights);

// Causal encoding of one window. When `prefix` is given (the shared BOS), the
// window also attends to it; the returned segment holds only window tokens.
CacheSegment encode_window(std::span<const TokenId> tokens, std::span<const std::size_t> positions,
                           const Weights& weights, const CacheSegment* prefix = nullptr);

// Task tokens attending to every segment (in the given order) plus causal
// self-attention. Returns logits [tokens x vocab].
Matrix decode_with_caches(std::span<const CacheSegment> segments, std::span<const TokenId> tokens,
                          std::span<const std::size_t> positions, const Weights& weights);

// Feeds tokens one chunk at a time on top of fixed segments, keeping the
// growing task cache. Results match decode_with_caches over the same tokens.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const Weights& weights, std::span<const CacheSegment> segments);

  // Logits of the last token in `tokens`.
  std::vector<float> feed(std::span<const TokenId> tokens, std::span<const std::size_t> positions);
  std::size_t fed_tokens() const { return task_.token_count(); }

 private:
  const Weights& weights_;
  std::span<const CacheSegment> segments_;
  CacheSegment task_;
};

// Restricts greedy choices. An empty allowed set ends generation.
class TokenFilter {
 public:
  virtual ~TokenFilter() = default;
  virtual std::vector<TokenId> allowed(std::span<const TokenId> generated) const = 0;
};

struct GenerateOptions {
  std::size_t max_new = 1;
  const TokenFilter* filter = nullptr;
  // Generation stops before emitting any of these (only when unfiltered).
  std::vector<TokenId> stop_tokens;
};

// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const float> values);

std::vector<TokenId> greedy_generate(std::span<const CacheSegment> segments, std::span<const TokenId> prompt_tokens,
                                     std::span<const std::size_t> task_positions, const GenerateOptions& options,
                                     const Weights& weights);

}  // namespace pcw
