#include <algorithm>
#include <set>

#include "pcw/error.hpp"
#include "pcw/harness.hpp"

namespace pcw {

LabelTrie::LabelTrie(std::vector<std::string> labels, const std::vector<std::vector<TokenId>>& sequences)
    : labels_(std::move(labels)), sequences_(sequences) {
  if (labels_.empty()) throw TrieError("trie: empty label set");
  if (labels_.size() != sequences_.size()) throw TrieError("trie: one token sequence per label required");
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (!seen.insert(l).second) throw TrieError("trie: duplicate label '" + l + "'");
  }

  nodes_.emplace_back();
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const auto& seq = sequences_[i];
    if (seq.empty()) throw TrieError("trie: label '" + labels_[i] + "' has no tokens");
    auto collide = [&](std::size_t other) {
      throw TrieError("trie: labels '" + labels_[other] + "' and '" + labels_[i] +
                      "' collide (one token sequence is a prefix of the other)");
    };
    std::size_t n = 0;
    for (TokenId t : seq) {
      if (nodes_[n].label) collide(*nodes_[n].label);
      auto it = nodes_[n].children.find(t);
      if (it == nodes_[n].children.end()) {
        const std::size_t depth = nodes_[n].depth + 1;
        nodes_[n].children.emplace(t, nodes_.size());
        n = nodes_.size();
        nodes_.emplace_back();
        nodes_.back().depth = depth;
      } else {
        n = it->second;
      }
    }
    if (nodes_[n].label) collide(*nodes_[n].label);
    if (!nodes_[n].children.empty()) collide(nodes_[n].some_label);

    nodes_[n].label = i;
    std::size_t m = 0;
    for (std::size_t k = 0;; ++k) {
      if (nodes_[m].label_count++ == 0) nodes_[m].some_label = i;
      if (k == seq.size()) break;
      m = nodes_[m].children.at(seq[k]);
    }
  }
}

std::size_t LabelTrie::max_depth() const {
  std::size_t d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

std::size_t LabelTrie::walk(std::span<const TokenId> path) const {
  std::size_t n = 0;
  for (TokenId t : path) {
    auto it = nodes_[n].children.find(t);
    if (it == nodes_[n].children.end()) throw TrieError("trie: token " + std::to_string(t) + " leaves the trie");
    n = it->second;
  }
  return n;
}

std::vector<TokenId> LabelTrie::next_tokens(std::span<const TokenId> path) const {
  const Node& n = nodes_[walk(path)];
  std::vector<TokenId> out;
  if (n.label_count <= 1) return out;
  for (const auto& [tok, child] : n.children) out.push_back(tok);
  return out;
}

std::size_t LabelTrie::decision_depth() const {
  std::size_t d = 0;
  for (const auto& n : nodes_) {
    if (n.label_count > 1) d = std::max(d, n.depth + 1);
  }
  return d;
}

LabelTrie build_label_trie(const std::vector<std::string>& labels, const Tokenizer& tok,
                           std::span<const TokenId> separator, std::string_view lead) {
  std::vector<std::vector<TokenId>> seqs;
  for (const auto& l : labels) {
    auto s = tok.encode(std::string(lead) + l);
    s.insert(s.end(), separator.begin(), separator.end());
    seqs.push_back(std::move(s));
  }
  return LabelTrie(labels, seqs);
}

namespace {

class TrieFilter final : public TokenFilter {
 public:
  explicit TrieFilter(const LabelTrie& trie) : trie_(trie) {}
  std::vector<TokenId> allowed(std::span<const TokenId> generated) const override {
    return trie_.next_tokens(generated);
  }

 private:
  const LabelTrie& trie_;
};

}  // namespace

std::size_t constrained_decode(std::span<const CacheSegment> segments, std::span<const TokenId> task_tokens,
                               std::span<const std::size_t> task_positions, const LabelTrie& trie,
                               const Weights& weights) {
  const std::size_t steps = trie.decision_depth();
  if (steps == 0) return trie.node(0).some_label;
  TrieFilter filter(trie);
  GenerateOptions opt;
  opt.max_new = steps;
  opt.filter = &filter;
  const auto path = greedy_generate(segments, task_tokens, task_positions, opt, weights);
  const auto& node = trie.node(trie.walk(path));
  if (node.label_count != 1) throw GenerationError("decode: stopped before a single label remained");
  return node.some_label;
}

}  // namespace pcw
