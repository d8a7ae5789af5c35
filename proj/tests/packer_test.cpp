#include <doctest.h>

#include <fstream>
#include <numeric>
#include <set>

#include "pcw/error.hpp"
#include "pcw/packer.hpp"
#include "support.hpp"

using namespace pcw;
using namespace pcw::testing;

namespace {

TaskTemplate sentiment_template() {
  return parse_template(R"({"input_template": "Review: {x}\n", "output_template": "Sentiment: {y}",
                            "example_separator": "\n", "label_names": ["positive", "negative"]})");
}

}  // namespace

TEST_CASE("budget examples") {
  const std::vector<std::size_t> train(200, 10);
  std::vector<std::size_t> test(50, 12);
  test[7] = 20;
  test[8] = 20;
  const auto b = compute_n_max(train, test, 100);
  CHECK(b.n_max == 8);
  CHECK(b.t_max == 20);
  CHECK(b.d_90 == 10);
  CHECK(b.trimmed_train == 2);
  CHECK(b.trimmed_test == 1);

  CHECK(compute_n_max(train, test, 20).n_max == 0);
  CHECK_THROWS_AS(compute_n_max(train, test, 19), BudgetError);
  CHECK_THROWS_AS(compute_n_max({}, test, 100), BudgetError);
  CHECK_THROWS_AS(compute_n_max(train, test, 0), BudgetError);
  const std::vector<std::size_t> zeros(10, 0);
  CHECK_THROWS_AS(compute_n_max(zeros, test, 100), BudgetError);
}

TEST_CASE("budget with lengths 1..100") {
  std::vector<std::size_t> train(100);
  std::iota(train.begin(), train.end(), 1);
  const std::vector<std::size_t> test{24, 3, 11};
  const auto b = compute_n_max(train, test, 1024);
  // One train sample trimmed (100), nearest rank ceil(0.9 * 99) = 90.
  CHECK(b.d_90 == 90);
  CHECK(b.t_max == 11);  // the single trim removes 24
  CHECK(b.n_max == (1024 - 11) / 90);
  CHECK(oracle_n_max(train, test, 1024) == b.n_max);
}

TEST_CASE("trimming and percentiles") {
  CHECK(trim_count(0) == 0);
  CHECK(trim_count(1) == 0);
  CHECK(trim_count(2) == 1);
  CHECK(trim_count(100) == 1);
  CHECK(trim_count(101) == 2);
  const std::vector<std::size_t> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(nearest_rank_percentile(v, 90) == 9);
  CHECK(nearest_rank_percentile(v, 91) == 10);
  CHECK(nearest_rank_percentile(v, 0) == 1);
  CHECK_THROWS_AS(nearest_rank_percentile(std::span<const std::size_t>{}, 90), BudgetError);
}

TEST_CASE("budget matches the brute-force oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> train(1 + rng() % 300), test(1 + rng() % 150);
    for (auto& x : train) x = 1 + rng() % 60;
    for (auto& x : test) x = 1 + rng() % 80;
    const std::size_t capacity = 1 + rng() % 400;
    const auto want = oracle_n_max(train, test, capacity);
    if (want) CHECK(compute_n_max(train, test, capacity).n_max == *want);
    else CHECK_THROWS_AS(compute_n_max(train, test, capacity), BudgetError);
  }
}

TEST_CASE("pack examples") {
  SUBCASE("four lengths into two windows") {
    const std::vector<std::size_t> lengths{9, 7, 2, 1};
    const auto a = pack(lengths, 2, 2, 3);
    std::multiset<std::size_t> totals(a.totals.begin(), a.totals.end());
    CHECK(totals == std::multiset<std::size_t>{9, 10});
    CHECK(a.spread() == 1);
    CHECK(oracle_min_spread(lengths, 2, 2) == 1);
  }
  SUBCASE("equal lengths") {
    const std::vector<std::size_t> lengths(30, 5);
    const auto a = pack(lengths, 3, 4, 11);
    CHECK(a.spread() == 0);
    for (auto t : a.totals) CHECK(t == 20);
  }
  SUBCASE("single window") {
    const std::vector<std::size_t> lengths{4, 8, 1, 3, 9};
    const auto a = pack(lengths, 1, 3, 5);
    REQUIRE(a.windows.size() == 1);
    CHECK(a.windows[0].size() == 3);
    CHECK(a.windows[0] == std::vector<std::size_t>(a.sampled.begin(), a.sampled.end()));
  }
  SUBCASE("errors") {
    const std::vector<std::size_t> lengths{1, 2, 3};
    CHECK_THROWS_AS(pack(lengths, 2, 2, 0), PackingError);
    CHECK_THROWS_AS(pack(lengths, 0, 1, 0), PackingError);
    CHECK_THROWS_AS(pack(lengths, 1, 0, 0), PackingError);
  }
}

TEST_CASE("pack invariants and determinism") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t B = 1 + rng() % 5, n = 1 + rng() % 6;
    std::vector<std::size_t> lengths(B * n + rng() % 20);
    for (auto& x : lengths) x = 1 + rng() % 50;
    const std::uint64_t seed = rng();
    const auto a = pack(lengths, B, n, seed);
    REQUIRE(a.windows.size() == B);
    std::set<std::size_t> seen;
    for (std::size_t w = 0; w < B; ++w) {
      CHECK(a.windows[w].size() == n);
      std::size_t total = 0;
      for (auto i : a.windows[w]) {
        seen.insert(i);
        total += lengths[i];
      }
      CHECK(a.totals[w] == total);
    }
    CHECK(seen.size() == B * n);
    CHECK(seen == std::set<std::size_t>(a.sampled.begin(), a.sampled.end()));
    CHECK(a.spread() <= chunk_in_order(lengths, a.sampled, B, n).spread());
    const auto again = pack(lengths, B, n, seed);
    CHECK(again.windows == a.windows);
  }
}

TEST_CASE("pack is close to the exhaustive optimum on small instances") {
  std::mt19937_64 rng(21);
  std::size_t optimal = 0, trials = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t B = 2 + rng() % 2, n = 1 + rng() % 3;
    std::vector<std::size_t> lengths(B * n);
    for (auto& x : lengths) x = 1 + rng() % 30;
    const auto a = pack(lengths, B, n, rng());
    const auto best = oracle_min_spread(lengths, B, n);
    CHECK(a.spread() >= best);
    ++trials;
    if (a.spread() == best) ++optimal;
  }
  // Greedy swaps are a heuristic; they should reach the optimum most of the time.
  CHECK(optimal * 10 >= trials * 8);
}

TEST_CASE("templates") {
  const auto tpl = sentiment_template();
  CHECK(render_example(tpl, {"good", "positive", {}}) == "Review: good\nSentiment: positive");
  CHECK(render_task(tpl, "bad") == "Review: bad\nSentiment:");
  CHECK(answer_lead(tpl) == " ");
  CHECK(tpl.label_names == std::vector<std::string>{"positive", "negative"});
  CHECK(tpl.metric == Metric::accuracy);

  SUBCASE("literal braces are kept") {
    const auto t = parse_template(R"({"input_template": "{ {x} }", "output_template": "{y}{}"})");
    CHECK(render_example(t, {"a", "b", {}}) == "{ a }b{}");
  }
  SUBCASE("bad placeholders") {
    CHECK_THROWS_AS(parse_template(R"({"input_template": "{z} {x}", "output_template": "{y}"})"), TemplateError);
    CHECK_THROWS_AS(parse_template(R"({"input_template": "{x}", "output_template": "{x}{y}"})"), TemplateError);
    CHECK_THROWS_AS(parse_template(R"({"input_template": "{x}", "output_template": "{y}{y}"})"), TemplateError);
    CHECK_THROWS_AS(parse_template(R"({"input_template": "x", "output_template": "{y}"})"), TemplateError);
    CHECK_THROWS_AS(parse_template(R"({"input_template": "{x}"})"), TemplateError);
    CHECK_THROWS_AS(parse_template(R"({"input_template": "{x}", "output_template": "{y}", "metric": "bleu"})"),
                    TemplateError);
    CHECK_THROWS_AS(parse_template("not json"), TemplateError);
    TaskTemplate raw;
    raw.input_template = "{x} {name}";
    raw.output_template = "{y}";
    CHECK_THROWS_AS(render_example(raw, {"a", "b", {}}), TemplateError);
  }
  SUBCASE("metric names") {
    CHECK(parse_template(R"({"input_template": "{x}", "output_template": "{y}", "metric": "em"})").metric ==
          Metric::exact_match);
    CHECK(metric_name(Metric::f1) == "f1");
  }
  SUBCASE("load from file") {
    TempDir dir;
    const auto path = dir.path() / "t.json";
    std::ofstream(path) << R"({"input_template": "Q: {x}\n", "output_template": "A: {y}"})";
    CHECK(load_template(path).input_template == "Q: {x}\n");
    CHECK_THROWS_AS(load_template(dir.path() / "missing.json"), TemplateError);
  }
}

TEST_CASE("rendering windows") {
  const auto tpl = sentiment_template();
  const std::vector<Example> examples{{"good", "positive", {}}, {"bad", "negative", {}}, {"fine", "positive", {}}};
  WindowAssignment a;
  a.windows = {{0, 1}, {2}};
  const auto prompt = render_windows(a, examples, tpl, "meh");
  REQUIRE(prompt.windows.size() == 2);
  CHECK(prompt.windows[0] == "Review: good\nSentiment: positive\nReview: bad\nSentiment: negative");
  CHECK(prompt.windows[1] == "Review: fine\nSentiment: positive");
  CHECK(prompt.task == "\nReview: meh\nSentiment:");

  a.windows = {{0}, {}};
  CHECK_THROWS_AS(render_windows(a, examples, tpl, "meh"), TemplateError);
  a.windows = {{5}};
  CHECK_THROWS_AS(render_windows(a, examples, tpl, "meh"), TemplateError);
}

TEST_CASE("document windows") {
  const std::vector<std::string> docs{"first doc", "second doc"};
  CHECK(render_document_window("", docs, "\n") == "==\nfirst doc\n==\nsecond doc\n==");
  CHECK(render_document_window("Q: a\nA: b", docs, "\n\n") == "Q: a\nA: b\n\n==\nfirst doc\n==\nsecond doc\n==");
  CHECK(render_document_window("", {}, "\n") == "==");
}
