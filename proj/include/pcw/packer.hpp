#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pcw {

// Per-window in-context example budget: n_max = floor((N - T_max) / D_90),
// after dropping the longest ceil(1%) of train and test samples. Percentiles
// use the nearest-rank definition.
struct PackingBudget {
  std::size_t n_max = 0;
  std::size_t t_max = 0;
  std::size_t d_90 = 0;
  std::size_t trimmed_train = 0;
  std::size_t trimmed_test = 0;
};

// ceil(n / 100), but always leaves at least one sample.
std::size_t trim_count(std::size_t n);
// Nearest-rank percentile of an ascending list: element ceil(pct/100 * n).
std::size_t nearest_rank_percentile(std::span<const std::size_t> sorted, unsigned pct);

// Throws BudgetError when the task alone exceeds the capacity (N < T_max).
PackingBudget compute_n_max(std::span<const std::size_t> train_lengths, std::span<const std::size_t> test_lengths,
                            std::size_t capacity);

struct WindowAssignment {
  std::vector<std::vector<std::size_t>> windows;  // example indices per window
  std::vector<std::size_t> totals;                // token total per window
  std::vector<std::size_t> sampled;               // the B * n_max draws, in draw order

  std::size_t spread() const;
};

// Draws B * n_max examples and splits them into B windows of exactly n_max,
// balancing total lengths by single-example swaps between the longest and
// shortest windows. Deterministic in `seed`. Throws PackingError.
WindowAssignment pack(std::span<const std::size_t> example_lengths, std::size_t windows, std::size_t n_max,
                      std::uint64_t seed);

// Consecutive chunks of `order`, n_max per window.
WindowAssignment chunk_in_order(std::span<const std::size_t> example_lengths, std::span<const std::size_t> order,
                                std::size_t windows, std::size_t n_max);

enum class Metric { accuracy, exact_match, f1 };

// `{x}` in input_template and `{y}` in output_template are the only
// placeholders. An example renders as input_template + output_template.
struct TaskTemplate {
  std::string input_template;
  std::string output_template;
  std::string example_separator = "\n";
  std::optional<std::vector<std::string>> label_names;
  Metric metric = Metric::accuracy;
};

TaskTemplate parse_template(std::string_view json_text);
TaskTemplate load_template(const std::filesystem::path& path);
std::string metric_name(Metric m);

struct Example {
  std::string input;
  std::string output;
  std::vector<std::string> documents;  // document mode only, retriever rank order
};

std::string render_example(const TaskTemplate& tpl, const Example& example);
// Test input with the output left empty and trailing whitespace cut.
std::string render_task(const TaskTemplate& tpl, std::string_view input);
// Whitespace cut from the end of render_task; answers are read as lead + answer.
std::string answer_lead(const TaskTemplate& tpl);

struct RenderedPrompt {
  std::vector<std::string> windows;
  std::string task;  // separator + render_task, so B=1 reads like one prompt
};

RenderedPrompt render_windows(const WindowAssignment& assignment, std::span<const Example> examples,
                              const TaskTemplate& tpl, std::string_view test_input);

// Document-mode window: the shared few-shot prefix, then each document
// between "==" lines.
std::string render_document_window(std::string_view prefix, std::span<const std::string> documents,
                                   std::string_view separator);

}  // namespace pcw
