#include <algorithm>
#include <string>

#include "model/stack.hpp"
#include "pcw/error.hpp"

namespace pcw {

IncrementalDecoder::IncrementalDecoder(const Weights& weights, std::span<const CacheSegment> segments)
    : weights_(weights), segments_(segments) {
  if (segments_.empty()) throw ShapeError("decoder: no cache segments");
  task_.keys.resize(weights.config.n_layers);
  task_.values.resize(weights.config.n_layers);
}

std::vector<float> IncrementalDecoder::feed(std::span<const TokenId> tokens, std::span<const std::size_t> positions) {
  if (tokens.empty()) throw ShapeError("decoder: nothing to feed");
  std::vector<const CacheSegment*> context;
  for (const auto& s : segments_) context.push_back(&s);
  if (task_.token_count() > 0) context.push_back(&task_);
  auto r = detail::run_stack(weights_, tokens, positions, context, {});

  for (std::size_t l = 0; l < task_.keys.size(); ++l) {
    task_.keys[l].append_rows(r.produced.keys[l]);
    task_.values[l].append_rows(r.produced.values[l]);
  }
  task_.position_ids.insert(task_.position_ids.end(), positions.begin(), positions.end());

  const Matrix last = r.hidden.slice_rows(r.hidden.rows() - 1, 1);
  const Matrix out = detail::logits(weights_, last);
  return {out.values().begin(), out.values().end()};
}

std::size_t argmax(std::span<const float> values) {
  if (values.empty()) throw ShapeError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<TokenId> greedy_generate(std::span<const CacheSegment> segments, std::span<const TokenId> prompt_tokens,
                                     std::span<const std::size_t> task_positions, const GenerateOptions& options,
                                     const Weights& weights) {
  if (options.max_new == 0) throw GenerationError("generate: max_new must be at least 1");
  if (prompt_tokens.empty()) throw GenerationError("generate: empty task prompt");
  if (prompt_tokens.size() != task_positions.size()) throw ShapeError("generate: tokens/positions length mismatch");
  // Every generated token except the last is fed back at the next position.
  const std::size_t last_fed = task_positions.back() + options.max_new - 1;
  if (last_fed >= weights.config.max_positions) {
    throw GenerationError("generate: position budget exhausted (needs position " + std::to_string(last_fed) +
                          ", capacity " + std::to_string(weights.config.max_positions) + ")");
  }

  IncrementalDecoder decoder(weights, segments);
  std::vector<float> logits = decoder.feed(prompt_tokens, task_positions);
  std::vector<TokenId> generated;
  std::size_t next_position = task_positions.back() + 1;

  while (generated.size() < options.max_new) {
    TokenId choice;
    if (options.filter) {
      const auto allowed = options.filter->allowed(generated);
      if (allowed.empty()) break;
      choice = allowed.front();
      for (TokenId t : allowed) {
        const auto ti = static_cast<std::size_t>(t);
        const auto ci = static_cast<std::size_t>(choice);
        if (logits.at(ti) > logits[ci] || (logits[ti] == logits[ci] && t < choice)) choice = t;
      }
    } else {
      choice = static_cast<TokenId>(argmax(logits));
      if (std::find(options.stop_tokens.begin(), options.stop_tokens.end(), choice) != options.stop_tokens.end()) break;
    }
    generated.push_back(choice);
    if (generated.size() == options.max_new) break;
    if (options.filter && options.filter->allowed(generated).empty()) break;
    const TokenId fed[] = {choice};
    const std::size_t pos[] = {next_position++};
    logits = decoder.feed(fed, pos);
  }
  return generated;
}

}  // namespace pcw
