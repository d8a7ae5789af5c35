#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pcw/error.hpp"
#include "pcw/packer.hpp"

namespace pcw {

namespace {

bool is_ident(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Calls on_text(literal) and on_slot(name) in order. A slot is "{name}" with
// an identifier name; any other brace is literal text.
template <typename Text, typename Slot>
void scan(std::string_view tpl, Text&& on_text, Slot&& on_slot) {
  std::size_t lit = 0;
  for (std::size_t i = 0; i < tpl.size(); ++i) {
    if (tpl[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < tpl.size() && is_ident(tpl[j])) ++j;
    if (j == i + 1 || j >= tpl.size() || tpl[j] != '}') continue;
    on_text(tpl.substr(lit, i - lit));
    on_slot(tpl.substr(i + 1, j - i - 1));
    lit = j + 1;
    i = j;
  }
  on_text(tpl.substr(lit));
}

std::size_t count_slot(std::string_view tpl, std::string_view want, std::string_view field) {
  std::size_t n = 0;
  scan(
      tpl, [](std::string_view) {},
      [&](std::string_view name) {
        if (name != want) {
          throw TemplateError("template: unresolved placeholder {" + std::string(name) + "} in " + std::string(field));
        }
        ++n;
      });
  return n;
}

void validate(const TaskTemplate& tpl) {
  if (count_slot(tpl.input_template, "x", "input_template") == 0) {
    throw TemplateError("template: input_template has no {x}");
  }
  if (count_slot(tpl.output_template, "y", "output_template") != 1) {
    throw TemplateError("template: output_template needs exactly one {y}");
  }
}

std::string fill(std::string_view tpl, std::string_view name, std::string_view value) {
  std::string out;
  scan(
      tpl, [&](std::string_view text) { out += text; },
      [&](std::string_view slot) {
        if (slot != name) throw TemplateError("template: unresolved placeholder {" + std::string(slot) + "}");
        out += value;
      });
  return out;
}

// Everything before {y}, without trailing whitespace; `cut` gets the whitespace.
std::string task_prefix(const TaskTemplate& tpl, std::string_view input, std::string* cut) {
  validate(tpl);
  std::string out = fill(tpl.input_template, "x", input);
  bool done = false;
  scan(
      tpl.output_template,
      [&](std::string_view text) {
        if (!done) out += text;
      },
      [&](std::string_view) { done = true; });
  std::size_t end = out.size();
  while (end > 0 && (out[end - 1] == ' ' || out[end - 1] == '\t' || out[end - 1] == '\n' || out[end - 1] == '\r')) {
    --end;
  }
  if (cut) *cut = out.substr(end);
  out.resize(end);
  return out;
}

}  // namespace

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::exact_match: return "exact_match";
    case Metric::f1: return "f1";
  }
  return "?";
}

TaskTemplate parse_template(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw TemplateError(std::string("template: parse failure: ") + e.what());
  }
  if (!j.is_object()) throw TemplateError("template: expected a JSON object");
  auto str = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string()) throw TemplateError(std::string("template: missing string field ") + key);
    return j[key].get<std::string>();
  };
  TaskTemplate t;
  t.input_template = str("input_template");
  t.output_template = str("output_template");
  if (j.contains("example_separator")) t.example_separator = str("example_separator");
  if (j.contains("label_names") && !j["label_names"].is_null()) {
    if (!j["label_names"].is_array()) throw TemplateError("template: label_names must be a list of strings");
    std::vector<std::string> labels;
    for (const auto& l : j["label_names"]) {
      if (!l.is_string()) throw TemplateError("template: label_names must be a list of strings");
      labels.push_back(l.get<std::string>());
    }
    if (labels.empty()) throw TemplateError("template: label_names is empty");
    t.label_names = std::move(labels);
  }
  if (j.contains("metric")) {
    const std::string m = str("metric");
    if (m == "accuracy") t.metric = Metric::accuracy;
    else if (m == "exact_match" || m == "em") t.metric = Metric::exact_match;
    else if (m == "f1") t.metric = Metric::f1;
    else throw TemplateError("template: unknown metric '" + m + "'");
  }
  validate(t);
  return t;
}

TaskTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TemplateError("template: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_template(ss.str());
}

std::string render_example(const TaskTemplate& tpl, const Example& example) {
  validate(tpl);
  return fill(tpl.input_template, "x", example.input) + fill(tpl.output_template, "y", example.output);
}

std::string render_task(const TaskTemplate& tpl, std::string_view input) {
  return task_prefix(tpl, input, nullptr);
}

std::string answer_lead(const TaskTemplate& tpl) {
  std::string cut;
  task_prefix(tpl, "", &cut);
  return cut;
}

RenderedPrompt render_windows(const WindowAssignment& assignment, std::span<const Example> examples,
                              const TaskTemplate& tpl, std::string_view test_input) {
  RenderedPrompt out;
  for (std::size_t w = 0; w < assignment.windows.size(); ++w) {
    const auto& idx = assignment.windows[w];
    if (idx.empty()) throw TemplateError("render: window " + std::to_string(w) + " has no examples");
    std::string text;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] >= examples.size()) throw TemplateError("render: example index out of range");
      if (k > 0) text += tpl.example_separator;
      text += render_example(tpl, examples[idx[k]]);
    }
    out.windows.push_back(std::move(text));
  }
  out.task = tpl.example_separator + render_task(tpl, test_input);
  return out;
}

std::string render_document_window(std::string_view prefix, std::span<const std::string> documents,
                                   std::string_view separator) {
  std::string out(prefix);
  if (!out.empty()) out += separator;
  for (const auto& doc : documents) {
    out += "==\n";
    out += doc;
    out += "\n";
  }
  out += "==";
  return out;
}

}  // namespace pcw
