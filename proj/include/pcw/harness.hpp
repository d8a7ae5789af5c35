#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcw/model.hpp"
#include "pcw/packer.hpp"
#include "pcw/tokenizer.hpp"

namespace pcw {

struct Dataset {
  std::string name;
  std::vector<Example> examples;
  std::optional<std::vector<std::string>> label_set;
};

// JSONL, one {"input", "output", "documents"?} object per line; blank lines
// are skipped. The label set comes from the template when it names one, else
// it is the distinct outputs (accuracy metric only). Throws DatasetError with
// the line number.
Dataset parse_dataset(std::string_view jsonl, const TaskTemplate& tpl, std::string name);
Dataset load_dataset(const std::filesystem::path& path, const TaskTemplate& tpl);

// Trie over the token sequences of a label set. Every sequence ends with the
// separator tokens, and no sequence may be a prefix of another.
class LabelTrie {
 public:
  struct Node {
    std::map<TokenId, std::size_t> children;
    std::optional<std::size_t> label;  // set on terminal nodes
    std::size_t label_count = 0;       // labels below (or at) this node
    std::size_t some_label = 0;        // any label below this node
    std::size_t depth = 0;
  };

  // Throws TrieError on empty or duplicate labels and prefix collisions.
  LabelTrie(std::vector<std::string> labels, const std::vector<std::vector<TokenId>>& sequences);

  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<TokenId>& sequence(std::size_t label) const { return sequences_[label]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t max_depth() const;

  // Node reached by following `path` from the root; throws TrieError when
  // the path leaves the trie.
  std::size_t walk(std::span<const TokenId> path) const;
  // Tokens that can follow `path`. Empty once a single label remains.
  std::vector<TokenId> next_tokens(std::span<const TokenId> path) const;
  // Steps needed until every branch has been narrowed to one label.
  std::size_t decision_depth() const;

 private:
  std::vector<std::string> labels_;
  std::vector<std::vector<TokenId>> sequences_;
  std::vector<Node> nodes_;
};

// Label sequences are encode(lead + label) followed by `separator`.
LabelTrie build_label_trie(const std::vector<std::string>& labels, const Tokenizer& tok,
                           std::span<const TokenId> separator, std::string_view lead = "");

// Greedy decoding restricted to the trie. Stops as soon as one label is left
// and returns that label's index.
std::size_t constrained_decode(std::span<const CacheSegment> segments, std::span<const TokenId> task_tokens,
                               std::span<const std::size_t> task_positions, const LabelTrie& trie,
                               const Weights& weights);

// Lowercase, drop punctuation and the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);
double exact_match(std::string_view pred, std::string_view gold);
double token_f1(std::string_view pred, std::string_view gold);

struct WelchResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
};

double mean_of(std::span<const double> xs);
// Population standard deviation (divides by n).
double population_std(std::span<const double> xs);
// Welch's unequal-variance t-test, two-sided. Throws StatsError when a list
// has fewer than 2 values or both variances are zero with different means.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

enum class HarnessMode { icl, docs };
enum class DocAssignment { round_robin, random };

struct ExperimentOptions {
  std::size_t windows = 3;  // B
  std::size_t n_sets = 5;
  std::size_t test_size = 100;
  std::uint64_t seed = 0;
  HarnessMode mode = HarnessMode::icl;
  std::string model_name;
  // Optional shared BOS token at position 0.
  std::optional<TokenId> bos_token;
  // Overrides the computed budget (icl mode).
  std::optional<std::size_t> n_max;
  // Document mode.
  std::size_t docs_per_window = 2;
  std::size_t prefix_examples = 2;
  DocAssignment doc_assignment = DocAssignment::round_robin;
  std::size_t max_answer_tokens = 16;
  // Evaluate test examples in parallel (scores do not depend on it).
  bool parallel = true;
};

struct ExperimentConfig {
  std::size_t windows = 0;
  std::size_t n_max = 0;
  std::size_t examples_per_prompt = 0;  // B * n_max (or documents in docs mode)
  std::string model;
  std::string dataset;
  std::string metric;
  std::string mode;
  std::size_t n_sets = 0;
  std::size_t test_size = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // training-sample seed per set
};

struct EpisodeReport {
  ExperimentConfig config;
  std::vector<double> scores;  // per seed, in [0, 100]
  double mean = 0.0;
  double std = 0.0;  // population
};

struct ExperimentResult {
  EpisodeReport baseline;  // B = 1
  EpisodeReport pcw;
  std::optional<double> p_value;  // Welch; empty when the test is undefined
};

// Runs the single-window baseline and the B-window variant over the same
// training seeds and the same test subsample. `test` may be the same dataset
// as `train`, in which case the test examples are excluded from sampling.
ExperimentResult run_experiment(const Weights& weights, const Tokenizer& tok, const Dataset& train,
                                const Dataset& test, const TaskTemplate& tpl, const ExperimentOptions& options);

struct SweepRow {
  std::size_t windows = 0;
  ExperimentResult result;
};

std::vector<SweepRow> sweep_b(const Weights& weights, const Tokenizer& tok, const Dataset& train,
                              const Dataset& test, const TaskTemplate& tpl, const ExperimentOptions& options,
                              std::span<const std::size_t> windows);

// {config, per_seed_scores, mean, std, p_value_vs_baseline}
std::string report_json(const EpisodeReport& report, std::optional<double> p_value_vs_baseline);
// {"baseline": ..., "pcw": ..., "test": "welch"}
std::string experiment_json(const ExperimentResult& result);
std::string sweep_json(std::span<const SweepRow> rows);

}  // namespace pcw
