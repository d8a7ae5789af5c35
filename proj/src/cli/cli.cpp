#include "pcw/cli.hpp"

#include <chrono>
#include <iomanip>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcw/container.hpp"
#include "pcw/error.hpp"
#include "pcw/harness.hpp"
#include "pcw/layout.hpp"
#include "pcw/model.hpp"
#include "pcw/packer.hpp"
#include "pcw/rng.hpp"
#include "pcw/tokenizer.hpp"

namespace pcw {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t parse_count(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    throw UsageError(what + ": '" + s + "' is not a count");
  }
  if (used != s.size() || s.empty() || s[0] == '-') throw UsageError(what + ": '" + s + "' is not a count");
  return static_cast<std::size_t>(v);
}

// "2,3,5" or "BxC" (B windows of C tokens).
std::vector<std::size_t> parse_windows(const std::string& s) {
  std::vector<std::size_t> out;
  const auto x = s.find('x');
  if (x != std::string::npos) {
    const std::size_t b = parse_count(s.substr(0, x), "--windows");
    const std::size_t c = parse_count(s.substr(x + 1), "--windows");
    out.assign(b, c);
  } else {
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(parse_count(part, "--windows"));
  }
  if (out.empty()) throw UsageError("--windows: no windows given");
  return out;
}

// "1..8" or "1,2,3".
std::vector<std::size_t> parse_range(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  const auto dots = s.find("..");
  if (dots != std::string::npos) {
    const std::size_t lo = parse_count(s.substr(0, dots), what);
    const std::size_t hi = parse_count(s.substr(dots + 2), what);
    if (lo > hi) throw UsageError(what + ": empty range '" + s + "'");
    for (std::size_t v = lo; v <= hi; ++v) out.push_back(v);
  } else {
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(parse_count(part, what));
  }
  if (out.empty()) throw UsageError(what + ": empty range");
  return out;
}

void emit(const std::string& out_path, const std::string& text, std::ostream& out) {
  if (out_path.empty() || out_path == "-") {
    out << text;
  } else {
    write_file_atomic(out_path, text);
  }
}

struct ModelArgs {
  std::string model;
  std::string config;
  std::string vocab;
  std::string merges;
  std::uint64_t weight_seed = 0;
};

void add_model_flags(CLI::App* cmd, ModelArgs& m, bool model_required) {
  auto* opt = cmd->add_option("--model", m.model, "PCWT1 weight container");
  if (model_required) opt->required();
  cmd->add_option("--config", m.config, "model config JSON")->required();
  cmd->add_option("--vocab", m.vocab, "GPT-2 vocab.json (byte tokenizer when omitted)");
  cmd->add_option("--merges", m.merges, "GPT-2 merges.txt");
}

Weights load_model(const ModelArgs& m) {
  const ModelConfig cfg = load_config(m.config);
  if (m.model.empty()) return random_weights(cfg, m.weight_seed);
  return load_weights(m.model, cfg);
}

std::unique_ptr<Tokenizer> load_tokenizer(const ModelArgs& m) {
  if (m.vocab.empty() != m.merges.empty()) throw UsageError("--vocab and --merges go together");
  if (m.vocab.empty()) return std::make_unique<ByteTokenizer>();
  return std::make_unique<BpeTokenizer>(load_bpe(m.vocab, m.merges));
}

void check_vocab(const Tokenizer& tok, const Weights& w) {
  if (tok.vocab_size() > w.config.vocab_size) {
    throw ConfigError("tokenizer vocabulary (" + std::to_string(tok.vocab_size()) + ") is larger than the model's (" +
                      std::to_string(w.config.vocab_size) + ")");
  }
}

struct ExperimentArgs {
  ModelArgs model;
  std::string dataset;
  std::string test_dataset;
  std::string template_path;
  std::string mode = "icl";
  std::string out = "-";
  std::size_t b = 3;
  std::size_t n_sets = 5;
  std::size_t test_size = 100;
  std::uint64_t seed = 0;
  std::size_t n_max = 0;
  std::optional<TokenId> bos;
  std::size_t docs_per_window = 2;
  std::size_t prefix_examples = 2;
  std::string doc_assignment = "round-robin";
  std::size_t max_answer_tokens = 16;
  std::string sweep;
};

void add_experiment_flags(CLI::App* cmd, ExperimentArgs& a) {
  add_model_flags(cmd, a.model, true);
  cmd->add_option("--dataset", a.dataset, "training (and test) JSONL")->required();
  cmd->add_option("--test-dataset", a.test_dataset, "separate test JSONL");
  cmd->add_option("--template", a.template_path, "task template JSON")->required();
  cmd->add_option("--mode", a.mode, "icl or docs")->check(CLI::IsMember({"icl", "docs"}));
  cmd->add_option("--n-sets", a.n_sets, "training sample sets (seeds)");
  cmd->add_option("--test-size", a.test_size, "test examples per set");
  cmd->add_option("--seed", a.seed, "base seed");
  cmd->add_option("--n-max", a.n_max, "examples per window (computed when 0)");
  cmd->add_option("--bos", a.bos, "shared BOS token id at position 0");
  cmd->add_option("--docs-per-window", a.docs_per_window, "documents per window (docs mode)");
  cmd->add_option("--prefix-examples", a.prefix_examples, "shared few-shot examples (docs mode)");
  cmd->add_option("--doc-assignment", a.doc_assignment, "round-robin or random")
      ->check(CLI::IsMember({"round-robin", "random"}));
  cmd->add_option("--max-answer-tokens", a.max_answer_tokens, "generation limit (docs mode)");
  cmd->add_option("--out", a.out, "output path, - for stdout");
}

ExperimentOptions experiment_options(const ExperimentArgs& a, std::size_t b) {
  ExperimentOptions o;
  o.windows = b;
  o.n_sets = a.n_sets;
  o.test_size = a.test_size;
  o.seed = a.seed;
  o.mode = a.mode == "docs" ? HarnessMode::docs : HarnessMode::icl;
  o.model_name = a.model.model;
  o.bos_token = a.bos;
  if (a.n_max > 0) o.n_max = a.n_max;
  o.docs_per_window = a.docs_per_window;
  o.prefix_examples = a.prefix_examples;
  o.doc_assignment = a.doc_assignment == "random" ? DocAssignment::random : DocAssignment::round_robin;
  o.max_answer_tokens = a.max_answer_tokens;
  return o;
}

void print_row(std::ostream& err, std::size_t b, const ExperimentResult& r) {
  err << "B=" << std::setw(2) << b << "  baseline " << std::fixed << std::setprecision(2) << r.baseline.mean << " ± "
      << r.baseline.std << "  pcw " << r.pcw.mean << " ± " << r.pcw.std << "  p="
      << (r.p_value ? std::to_string(*r.p_value) : std::string("n/a")) << "\n";
}

int run_experiment_cmd(const ExperimentArgs& a, bool sweep, std::ostream& out, std::ostream& err) {
  const Weights w = load_model(a.model);
  const auto tok = load_tokenizer(a.model);
  check_vocab(*tok, w);
  const TaskTemplate tpl = load_template(a.template_path);
  const Dataset train = load_dataset(a.dataset, tpl);
  std::optional<Dataset> test_holder;
  if (!a.test_dataset.empty()) test_holder = load_dataset(a.test_dataset, tpl);
  const Dataset& test = test_holder ? *test_holder : train;

  if (!sweep) {
    const auto r = run_experiment(w, *tok, train, test, tpl, experiment_options(a, a.b));
    print_row(err, a.b, r);
    emit(a.out, experiment_json(r), out);
    return 0;
  }
  const auto range = parse_range(a.sweep, "--sweep-b");
  const auto rows = sweep_b(w, *tok, train, test, tpl, experiment_options(a, range.front()), range);
  for (const auto& row : rows) print_row(err, row.windows, row.result);
  emit(a.out, sweep_json(rows), out);
  return 0;
}

int mask_dump_cmd(const std::string& windows, std::size_t task, bool bos, std::size_t capacity,
                  const std::string& format, const std::string& out_path, std::ostream& out) {
  auto lengths = parse_windows(windows);
  const std::size_t longest = *std::max_element(lengths.begin(), lengths.end());
  if (capacity == 0) capacity = longest + task + (bos ? 1 : 0);
  const auto layout = make_layout(lengths, task, capacity, bos);
  const auto positions = assign_positions(layout);
  const auto mask = build_mask(layout);
  std::ostringstream text;
  if (format == "text") {
    write_mask_dump(text, positions, mask);
  } else {
    nlohmann::json j;
    j["positions"] = positions.positions;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t q = 0; q < mask.size(); ++q) {
      const auto r = mask.row(q);
      rows.push_back(std::vector<int>(r.begin(), r.end()));
    }
    j["mask"] = std::move(rows);
    j["allowed_pairs"] = allowed_pair_count(layout);
    text << j.dump() << "\n";
  }
  emit(out_path, text.str(), out);
  return 0;
}

struct PackArgs {
  ModelArgs model;
  std::string dataset;
  std::string template_path;
  std::size_t b = 3;
  std::size_t capacity = 0;
  std::size_t n_max = 0;
  std::uint64_t seed = 0;
  std::string out = "-";
};

int pack_cmd(const PackArgs& a, std::ostream& out, std::ostream& err) {
  const auto tok = load_tokenizer(a.model);
  std::size_t capacity = a.capacity;
  if (capacity == 0) {
    if (a.model.config.empty()) throw UsageError("pack: give --capacity or --config");
    capacity = load_config(a.model.config).max_positions;
  }
  const TaskTemplate tpl = load_template(a.template_path);
  const Dataset ds = load_dataset(a.dataset, tpl);
  std::vector<std::size_t> train_lengths, test_lengths;
  for (const auto& ex : ds.examples) {
    train_lengths.push_back(tok->encode(tpl.example_separator + render_example(tpl, ex)).size());
    test_lengths.push_back(train_lengths.back());
  }
  const PackingBudget budget = compute_n_max(train_lengths, test_lengths, capacity);
  const std::size_t n_max = a.n_max > 0 ? a.n_max : budget.n_max;
  const auto assignment = pack(train_lengths, a.b, n_max, a.seed);
  const auto naive = chunk_in_order(train_lengths, assignment.sampled, a.b, n_max);

  nlohmann::json j;
  j["budget"] = {{"n_max", budget.n_max},
                 {"t_max", budget.t_max},
                 {"d_90", budget.d_90},
                 {"trimmed_train", budget.trimmed_train},
                 {"trimmed_test", budget.trimmed_test},
                 {"capacity", capacity}};
  j["B"] = a.b;
  j["n_max"] = n_max;
  j["seed"] = a.seed;
  j["windows"] = assignment.windows;
  j["totals"] = assignment.totals;
  j["spread"] = assignment.spread();
  j["naive_spread"] = naive.spread();
  err << "n_max " << n_max << "  totals";
  for (auto t : assignment.totals) err << " " << t;
  err << "  spread " << assignment.spread() << " (in-order " << naive.spread() << ")\n";
  emit(a.out, j.dump(2) + "\n", out);
  return 0;
}

struct BenchArgs {
  ModelArgs model;
  std::string windows = "32,32";
  std::size_t task = 16;
  std::string sweep;
  bool bos = false;
  bool time = false;
  std::uint64_t seed = 0;
  std::string out = "-";
};

int bench_cmd(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  const auto base = parse_windows(a.windows);
  std::vector<std::size_t> bs;
  if (a.sweep.empty()) {
    bs.push_back(base.size());
  } else {
    bs = parse_range(a.sweep, "--sweep-b");
  }
  std::optional<Weights> weights;
  if (a.time) {
    if (a.model.config.empty()) throw UsageError("bench --time needs --config");
    weights = load_model(a.model);
  }

  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t b : bs) {
    if (b == 0) throw UsageError("--sweep-b: B must be at least 1");
    // A sweep repeats the given window lengths cyclically up to B windows.
    std::vector<std::size_t> lengths(b);
    for (std::size_t i = 0; i < b; ++i) lengths[i] = base[i % base.size()];
    const std::size_t longest = *std::max_element(lengths.begin(), lengths.end());
    const std::size_t capacity = weights ? weights->config.max_positions : longest + a.task + (a.bos ? 1 : 0);
    const auto layout = make_layout(lengths, a.task, capacity, a.bos);
    const std::uint64_t n = layout.total_tokens();

    nlohmann::json row;
    row["B"] = b;
    row["tokens"] = n;
    row["allowed_pairs"] = allowed_pair_count(layout);
    row["dense_causal_pairs"] = n * (n + 1) / 2;
    if (weights) {
      std::mt19937_64 rng(derive_seed(a.seed, b));
      auto draw = [&](std::size_t count) {
        std::vector<TokenId> t(count);
        for (auto& id : t) id = static_cast<TokenId>(uniform_below(rng, weights->config.vocab_size));
        return t;
      };
      const auto start = std::chrono::steady_clock::now();
      std::vector<CacheSegment> segs;
      for (std::size_t c : lengths) {
        std::vector<std::size_t> pos(c);
        std::iota(pos.begin(), pos.end(), layout.first_window_position());
        segs.push_back(encode_window(draw(c), pos, *weights));
      }
      const auto task = draw(a.task);
      const auto tpos = task_positions(layout, 0, a.task);
      decode_with_caches(segs, task, tpos, *weights);
      row["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    err << "B=" << std::setw(2) << b << "  tokens " << std::setw(6) << n << "  allowed pairs " << std::setw(9)
        << allowed_pair_count(layout) << "\n";
    rows.push_back(std::move(row));
  }
  emit(a.out, rows.dump(2) + "\n", out);
  return 0;
}

struct GenerateArgs {
  ModelArgs model;
  std::vector<std::string> contexts;
  std::string prompt;
  std::size_t max_new = 16;
  std::optional<TokenId> bos;
  std::vector<TokenId> stop;
  std::string out = "-";
};

int generate_cmd(const GenerateArgs& a, std::ostream& out) {
  const Weights w = load_model(a.model);
  const auto tok = load_tokenizer(a.model);
  check_vocab(*tok, w);
  const auto prompt = tok->encode(a.prompt);
  if (prompt.empty()) throw GenerationError("generate: the prompt encodes to no tokens");

  std::vector<std::vector<TokenId>> windows;
  std::vector<std::size_t> lengths;
  for (const auto& c : a.contexts) {
    windows.push_back(tok->encode(c));
    if (windows.back().empty()) throw GenerationError("generate: a context encodes to no tokens");
    lengths.push_back(windows.back().size());
  }
  std::vector<CacheSegment> segs;
  const CacheSegment* prefix = nullptr;
  if (a.bos) {
    const TokenId bos[] = {*a.bos};
    const std::size_t pos[] = {0};
    segs.push_back(encode_window(bos, pos, w));
    prefix = &segs.front();
  }
  std::vector<std::size_t> tpos;
  if (windows.empty()) {
    tpos.resize(prompt.size());
    std::iota(tpos.begin(), tpos.end(), a.bos ? 1 : 0);
    if (tpos.back() >= w.config.max_positions) throw PositionError("generate: prompt exceeds capacity");
  } else {
    const auto layout = make_layout(lengths, prompt.size(), w.config.max_positions, a.bos.has_value());
    std::vector<CacheSegment> encoded;
    for (const auto& t : windows) {
      std::vector<std::size_t> pos(t.size());
      std::iota(pos.begin(), pos.end(), layout.first_window_position());
      encoded.push_back(encode_window(t, pos, w, prefix));
    }
    for (auto& s : encoded) segs.push_back(std::move(s));
    tpos = task_positions(layout, 0, prompt.size());
  }
  std::vector<TokenId> task(prompt.begin(), prompt.end());
  if (segs.empty()) {
    // Plain causal generation: the first prompt token becomes the context.
    if (prompt.size() < 2) throw GenerationError("generate: needs a context or a prompt of at least 2 tokens");
    const TokenId first[] = {prompt.front()};
    const std::size_t pos[] = {tpos.front()};
    segs.push_back(encode_window(first, pos, w));
    task.erase(task.begin());
    tpos.erase(tpos.begin());
  }
  GenerateOptions opt;
  opt.max_new = a.max_new;
  opt.stop_tokens = a.stop;
  const auto ids = greedy_generate(segs, task, tpos, opt, w);
  nlohmann::json j{{"prompt_tokens", prompt.size()}, {"windows", lengths}, {"generated_ids", ids},
                   {"text", tok->decode(ids)}};
  // Generated bytes may stop mid code point.
  emit(a.out, j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n", out);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parallel context window inference"};
  app.name("pcw");
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "greedy generation over parallel context windows");
  add_model_flags(generate, gen.model, false);
  generate->add_option("--context", gen.contexts, "context window text (repeat for more windows)");
  generate->add_option("--prompt", gen.prompt, "task text")->required();
  generate->add_option("--max-new", gen.max_new, "tokens to generate");
  generate->add_option("--bos", gen.bos, "shared BOS token id");
  generate->add_option("--stop", gen.stop, "stop token ids");
  generate->add_option("--seed", gen.model.weight_seed, "seed for random weights when --model is omitted");
  generate->add_option("--out", gen.out, "output path, - for stdout");

  ExperimentArgs icl_args;
  auto* icl = app.add_subcommand("icl", "baseline vs parallel-window in-context learning");
  add_experiment_flags(icl, icl_args);
  icl->add_option("--b", icl_args.b, "parallel windows");

  ExperimentArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep-b", "run the experiment for a range of B");
  add_experiment_flags(sweep, sweep_args);
  sweep->add_option("--sweep-b,--b", sweep_args.sweep, "B range: 1..8 or 1,2,4")->required();

  std::string md_windows, md_format = "json", md_out = "-";
  std::size_t md_task = 1, md_capacity = 0;
  bool md_bos = false;
  auto* mask_dump = app.add_subcommand("mask-dump", "print positions and the attention mask of a layout");
  mask_dump->add_option("--windows", md_windows, "window lengths: 2,3 or BxC")->required();
  mask_dump->add_option("--task", md_task, "task tokens");
  mask_dump->add_flag("--bos", md_bos, "shared BOS token");
  mask_dump->add_option("--capacity", md_capacity, "position capacity N (default: tightest)");
  mask_dump->add_option("--format", md_format, "json or text")->check(CLI::IsMember({"json", "text"}));
  mask_dump->add_option("--out", md_out, "output path, - for stdout");

  PackArgs pk;
  auto* pack_cmd_app = app.add_subcommand("pack", "budget and window balancing dry run");
  pack_cmd_app->add_option("--config", pk.model.config, "model config JSON (for N)");
  pack_cmd_app->add_option("--vocab", pk.model.vocab, "GPT-2 vocab.json");
  pack_cmd_app->add_option("--merges", pk.model.merges, "GPT-2 merges.txt");
  pack_cmd_app->add_option("--dataset", pk.dataset, "JSONL examples")->required();
  pack_cmd_app->add_option("--template", pk.template_path, "task template JSON")->required();
  pack_cmd_app->add_option("--b", pk.b, "parallel windows");
  pack_cmd_app->add_option("--capacity", pk.capacity, "position capacity N");
  pack_cmd_app->add_option("--n-max", pk.n_max, "examples per window (computed when 0)");
  pack_cmd_app->add_option("--seed", pk.seed, "sampling seed");
  pack_cmd_app->add_option("--out", pk.out, "output path, - for stdout");

  BenchArgs bn;
  auto* bench = app.add_subcommand("bench", "attention cost of parallel layouts");
  bench->add_option("--windows", bn.windows, "window lengths: c,c or BxC");
  bench->add_option("--task", bn.task, "task tokens");
  bench->add_option("--sweep-b", bn.sweep, "B range: 1..8");
  bench->add_flag("--bos", bn.bos, "shared BOS token");
  bench->add_flag("--time", bn.time, "also time encode + decode (needs --config)");
  bench->add_option("--config", bn.model.config, "model config JSON");
  bench->add_option("--model", bn.model.model, "PCWT1 weights (random when omitted)");
  bench->add_option("--seed", bn.seed, "token and weight seed");
  bench->add_option("--out", bn.out, "output path, - for stdout");

  std::string ir_config, ir_out;
  std::uint64_t ir_seed = 0;
  float ir_scale = 0.02f;
  auto* init_random = app.add_subcommand("init-random", "write a random-weight container for a config");
  init_random->add_option("--config", ir_config, "model config JSON")->required();
  init_random->add_option("--out", ir_out, "container path")->required();
  init_random->add_option("--seed", ir_seed, "weight seed");
  init_random->add_option("--scale", ir_scale, "initialization std");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*generate) return generate_cmd(gen, out);
    if (*icl) return run_experiment_cmd(icl_args, false, out, err);
    if (*sweep) return run_experiment_cmd(sweep_args, true, out, err);
    if (*mask_dump) return mask_dump_cmd(md_windows, md_task, md_bos, md_capacity, md_format, md_out, out);
    if (*pack_cmd_app) return pack_cmd(pk, out, err);
    if (*bench) {
      bn.model.weight_seed = bn.seed;
      return bench_cmd(bn, out, err);
    }
    if (*init_random) {
      const ModelConfig cfg = load_config(ir_config);
      save_weights(ir_out, random_weights(cfg, ir_seed, ir_scale));
      return 0;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace pcw
