#include <algorithm>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>

#include <json.hpp>

#include "pcw/error.hpp"
#include "pcw/harness.hpp"
#include "pcw/rng.hpp"

namespace pcw {

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kTestStream = 2;
constexpr std::uint64_t kDocStream = 3;

// Everything that does not depend on B or the training seed.
struct Prepared {
  const Weights* weights = nullptr;
  const Tokenizer* tok = nullptr;
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
  const TaskTemplate* tpl = nullptr;
  ExperimentOptions options;

  std::vector<std::size_t> train_pool;     // usable train example indices
  std::vector<std::size_t> train_lengths;  // token length per pool entry
  std::vector<std::size_t> test_idx;
  std::vector<std::vector<TokenId>> test_tasks;  // task tokens per test_idx entry
  std::vector<TokenId> separator;
  std::optional<LabelTrie> trie;
  std::size_t n_max = 0;
};

std::size_t bos_count(const ExperimentOptions& o) { return o.bos_token ? 1 : 0; }

Prepared prepare(const Weights& weights, const Tokenizer& tok, const Dataset& train, const Dataset& test,
                 const TaskTemplate& tpl, const ExperimentOptions& options) {
  if (options.windows == 0) throw PackingError("experiment: B must be at least 1");
  if (options.n_sets == 0) throw PackingError("experiment: n_sets must be at least 1");
  if (options.test_size == 0) throw DatasetError("experiment: test_size must be at least 1");
  Prepared p;
  p.weights = &weights;
  p.tok = &tok;
  p.train = &train;
  p.test = &test;
  p.tpl = &tpl;
  p.options = options;
  p.separator = tok.encode(tpl.example_separator);

  const std::size_t n_test = std::min(options.test_size, test.examples.size());
  p.test_idx = sample_indices(test.examples.size(), n_test, derive_seed(options.seed, kTestStream));
  std::sort(p.test_idx.begin(), p.test_idx.end());

  std::vector<bool> excluded(train.examples.size(), false);
  if (&train == &test) {
    for (std::size_t i : p.test_idx) excluded[i] = true;
  }
  for (std::size_t i = 0; i < train.examples.size(); ++i) {
    if (excluded[i]) continue;
    p.train_pool.push_back(i);
    // Each example in a window is preceded or followed by one separator.
    const std::string text = tpl.example_separator + render_example(tpl, train.examples[i]);
    p.train_lengths.push_back(tok.encode(text).size());
  }
  if (p.train_pool.empty()) throw DatasetError("experiment: no training examples left after the test split");

  std::vector<std::size_t> test_lengths;
  for (std::size_t i : p.test_idx) {
    const auto& ex = test.examples[i];
    p.test_tasks.push_back(tok.encode(tpl.example_separator + render_task(tpl, ex.input)));
    test_lengths.push_back(tok.encode(tpl.example_separator + render_example(tpl, ex)).size());
  }

  if (options.mode == HarnessMode::icl) {
    if (!test.label_set) throw DatasetError("experiment: icl mode needs a label set");
    p.trie.emplace(build_label_trie(*test.label_set, tok, p.separator, answer_lead(tpl)));
    const std::size_t capacity = weights.config.max_positions - bos_count(options);
    if (options.n_max) {
      p.n_max = *options.n_max;
    } else {
      p.n_max = compute_n_max(p.train_lengths, test_lengths, capacity).n_max;
    }
    if (p.n_max == 0) throw BudgetError("experiment: no room for in-context examples (n_max = 0)");
  }
  return p;
}

struct Encoded {
  std::vector<CacheSegment> segments;
  std::vector<std::size_t> window_lengths;
};

Encoded encode_windows(const Prepared& p, const std::vector<std::string>& texts) {
  const Weights& w = *p.weights;
  Encoded e;
  std::vector<std::vector<TokenId>> tokens;
  for (const auto& t : texts) {
    tokens.push_back(p.tok->encode(t));
    if (tokens.back().empty()) throw PackingError("experiment: a window rendered to zero tokens");
    e.window_lengths.push_back(tokens.back().size());
  }
  const CacheSegment* prefix = nullptr;
  if (p.options.bos_token) {
    const TokenId bos[] = {*p.options.bos_token};
    const std::size_t pos[] = {0};
    e.segments.push_back(encode_window(bos, pos, w));
    prefix = &e.segments.front();
  }
  const std::size_t p0 = bos_count(p.options);
  std::vector<CacheSegment> windows;
  for (const auto& t : tokens) {
    std::vector<std::size_t> pos(t.size());
    std::iota(pos.begin(), pos.end(), p0);
    if (pos.back() >= w.config.max_positions) {
      throw PackingError("experiment: window of " + std::to_string(t.size()) + " tokens exceeds capacity " +
                         std::to_string(w.config.max_positions));
    }
    windows.push_back(encode_window(t, pos, w, prefix));
  }
  for (auto& s : windows) e.segments.push_back(std::move(s));
  return e;
}

// Positions of the task tokens; checks that the task plus `extra` generated
// tokens fit after the longest window.
std::vector<std::size_t> task_positions_for(const Prepared& p, const Encoded& e, std::size_t task_len,
                                            std::size_t extra) {
  const std::size_t longest = *std::max_element(e.window_lengths.begin(), e.window_lengths.end());
  const std::size_t first = bos_count(p.options) + longest;
  const std::size_t need = first + task_len + extra;
  if (need > p.weights->config.max_positions) {
    throw PackingError("experiment: longest window (" + std::to_string(longest) + ") + task (" +
                       std::to_string(task_len) + ") + answer (" + std::to_string(extra) + ") tokens exceed capacity " +
                       std::to_string(p.weights->config.max_positions));
  }
  std::vector<std::size_t> pos(task_len);
  std::iota(pos.begin(), pos.end(), first);
  return pos;
}

// Runs fn(k) for every test example, in parallel when asked. The first
// exception is rethrown after the loop.
template <typename Fn>
void for_each_test(const Prepared& p, Fn&& fn) {
  const auto n = static_cast<std::ptrdiff_t>(p.test_idx.size());
  std::exception_ptr failure;
  std::mutex m;
#pragma omp parallel for schedule(dynamic) if (p.options.parallel)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    try {
      fn(static_cast<std::size_t>(k));
    } catch (...) {
      std::lock_guard<std::mutex> lock(m);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

double score_icl(const Prepared& p, std::size_t windows, std::uint64_t train_seed) {
  const auto assignment = pack(p.train_lengths, windows, p.n_max, train_seed);
  WindowAssignment mapped = assignment;
  for (auto& w : mapped.windows) {
    for (auto& i : w) i = p.train_pool[i];
  }
  const auto rendered = render_windows(mapped, p.train->examples, *p.tpl, "");
  const Encoded enc = encode_windows(p, rendered.windows);
  const std::size_t extra = p.trie->decision_depth() > 0 ? p.trie->decision_depth() - 1 : 0;

  std::vector<double> hit(p.test_idx.size(), 0.0);
  for_each_test(p, [&](std::size_t k) {
    const auto& task = p.test_tasks[k];
    const auto pos = task_positions_for(p, enc, task.size(), extra);
    const std::size_t label = constrained_decode(enc.segments, task, pos, *p.trie, *p.weights);
    hit[k] = p.trie->labels()[label] == p.test->examples[p.test_idx[k]].output ? 1.0 : 0.0;
  });
  return 100.0 * mean_of(hit);
}

std::vector<std::vector<std::string>> assign_documents(const Prepared& p, const Example& ex, std::size_t windows,
                                                       std::uint64_t doc_seed) {
  const std::size_t per = p.options.docs_per_window;
  const std::size_t k = std::min(windows * per, ex.documents.size());
  if (k < windows) {
    throw PackingError("experiment: " + std::to_string(ex.documents.size()) + " documents cannot fill " +
                       std::to_string(windows) + " windows");
  }
  std::vector<std::vector<std::string>> out(windows);
  if (p.options.doc_assignment == DocAssignment::round_robin) {
    // Rank r goes to window r % B; within a window the best-ranked comes last.
    for (std::size_t r = 0; r < k; ++r) out[r % windows].push_back(ex.documents[r]);
    for (auto& w : out) std::reverse(w.begin(), w.end());
  } else {
    const auto order = sample_indices(ex.documents.size(), k, doc_seed);
    for (std::size_t r = 0; r < k; ++r) out[r / per].push_back(ex.documents[order[r]]);
    for (const auto& w : out) {
      if (w.empty()) throw PackingError("experiment: a document window is empty");
    }
  }
  return out;
}

double score_docs(const Prepared& p, std::size_t windows, std::uint64_t train_seed) {
  const std::size_t n_prefix = std::min(p.options.prefix_examples, p.train_pool.size());
  const auto picks = sample_indices(p.train_pool.size(), n_prefix, train_seed);
  std::string prefix;
  for (std::size_t k = 0; k < picks.size(); ++k) {
    if (k > 0) prefix += p.tpl->example_separator;
    prefix += render_example(*p.tpl, p.train->examples[p.train_pool[picks[k]]]);
  }
  std::vector<TokenId> stop;
  if (!p.separator.empty()) stop.push_back(p.separator.front());

  std::vector<double> score(p.test_idx.size(), 0.0);
  for_each_test(p, [&](std::size_t k) {
    const auto& ex = p.test->examples[p.test_idx[k]];
    const auto docs = assign_documents(p, ex, windows, derive_seed(p.options.seed, kDocStream, p.test_idx[k]));
    std::vector<std::string> texts;
    for (const auto& d : docs) texts.push_back(render_document_window(prefix, d, p.tpl->example_separator));
    const Encoded enc = encode_windows(p, texts);
    const auto& task = p.test_tasks[k];
    const auto pos = task_positions_for(p, enc, task.size(), p.options.max_answer_tokens - 1);
    GenerateOptions opt;
    opt.max_new = p.options.max_answer_tokens;
    opt.stop_tokens = stop;
    const auto ids = greedy_generate(enc.segments, task, pos, opt, *p.weights);
    std::string answer = p.tok->decode(ids);
    const auto cut = answer.find(p.tpl->example_separator);
    if (!p.tpl->example_separator.empty() && cut != std::string::npos) answer.resize(cut);
    switch (p.tpl->metric) {
      case Metric::f1: score[k] = token_f1(answer, ex.output); break;
      case Metric::exact_match: score[k] = exact_match(answer, ex.output); break;
      case Metric::accuracy: {
        const auto a = answer.find_first_not_of(" \t");
        const auto b = answer.find_last_not_of(" \t\r\n");
        score[k] = (a == std::string::npos ? std::string() : answer.substr(a, b - a + 1)) == ex.output ? 1.0 : 0.0;
        break;
      }
    }
  });
  return 100.0 * mean_of(score);
}

EpisodeReport run_episode(const Prepared& p, std::size_t windows) {
  const auto& o = p.options;
  EpisodeReport r;
  r.config.windows = windows;
  r.config.n_max = p.n_max;
  r.config.examples_per_prompt = o.mode == HarnessMode::icl ? windows * p.n_max : windows * o.docs_per_window;
  r.config.model = o.model_name;
  r.config.dataset = p.test->name;
  r.config.metric = metric_name(p.tpl->metric);
  r.config.mode = o.mode == HarnessMode::icl ? "icl" : "docs";
  r.config.n_sets = o.n_sets;
  r.config.test_size = p.test_idx.size();
  r.config.seed = o.seed;
  for (std::size_t s = 0; s < o.n_sets; ++s) {
    const std::uint64_t train_seed = derive_seed(o.seed, kTrainStream, s);
    r.config.seeds.push_back(train_seed);
    r.scores.push_back(o.mode == HarnessMode::icl ? score_icl(p, windows, train_seed)
                                                  : score_docs(p, windows, train_seed));
  }
  r.mean = mean_of(r.scores);
  r.std = population_std(r.scores);
  return r;
}

std::optional<double> p_value(const EpisodeReport& a, const EpisodeReport& b) {
  if (a.scores.size() < 2 || b.scores.size() < 2) return std::nullopt;
  try {
    return welch_t_test(a.scores, b.scores).p;
  } catch (const StatsError&) {
    return std::nullopt;
  }
}

nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["B"] = c.windows;
  j["n_max"] = c.n_max;
  j["examples_per_prompt"] = c.examples_per_prompt;
  j["model"] = c.model;
  j["dataset"] = c.dataset;
  j["metric"] = c.metric;
  j["mode"] = c.mode;
  j["n_sets"] = c.n_sets;
  j["test_size"] = c.test_size;
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  return j;
}

nlohmann::json report_object(const EpisodeReport& r, std::optional<double> p) {
  nlohmann::json j;
  j["config"] = config_json(r.config);
  j["per_seed_scores"] = r.scores;
  j["mean"] = r.mean;
  j["std"] = r.std;
  j["std_kind"] = "population";
  j["p_value_vs_baseline"] = p ? nlohmann::json(*p) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json experiment_object(const ExperimentResult& r) {
  nlohmann::json j;
  j["baseline"] = report_object(r.baseline, std::nullopt);
  j["pcw"] = report_object(r.pcw, r.p_value);
  j["test"] = "welch";
  return j;
}

}  // namespace

ExperimentResult run_experiment(const Weights& weights, const Tokenizer& tok, const Dataset& train,
                                const Dataset& test, const TaskTemplate& tpl, const ExperimentOptions& options) {
  const Prepared p = prepare(weights, tok, train, test, tpl, options);
  ExperimentResult r;
  r.baseline = run_episode(p, 1);
  r.pcw = options.windows == 1 ? r.baseline : run_episode(p, options.windows);
  r.p_value = p_value(r.baseline, r.pcw);
  return r;
}

std::vector<SweepRow> sweep_b(const Weights& weights, const Tokenizer& tok, const Dataset& train,
                              const Dataset& test, const TaskTemplate& tpl, const ExperimentOptions& options,
                              std::span<const std::size_t> windows) {
  if (windows.empty()) throw PackingError("sweep: empty B range");
  const Prepared p = prepare(weights, tok, train, test, tpl, options);
  const EpisodeReport baseline = run_episode(p, 1);
  std::vector<SweepRow> rows;
  for (std::size_t b : windows) {
    if (b == 0) throw PackingError("sweep: B must be at least 1");
    SweepRow row;
    row.windows = b;
    row.result.baseline = baseline;
    row.result.pcw = b == 1 ? baseline : run_episode(p, b);
    row.result.p_value = p_value(baseline, row.result.pcw);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string report_json(const EpisodeReport& report, std::optional<double> p_value_vs_baseline) {
  return report_object(report, p_value_vs_baseline).dump(2) + "\n";
}

std::string experiment_json(const ExperimentResult& result) { return experiment_object(result).dump(2) + "\n"; }

std::string sweep_json(std::span<const SweepRow> rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json r = experiment_object(row.result);
    r["B"] = row.windows;
    j.push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

}  // namespace pcw
