#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pcw/error.hpp"
#include "pcw/harness.hpp"

namespace pcw {

Dataset parse_dataset(std::string_view jsonl, const TaskTemplate& tpl, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  std::istringstream lines{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw DatasetError("dataset " + ds.name + ": line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      fail("not valid JSON");
    }
    if (!j.is_object()) fail("expected an object");
    Example ex;
    for (const char* key : {"input", "output"}) {
      if (!j.contains(key)) fail(std::string("missing \"") + key + "\"");
      if (!j[key].is_string()) fail(std::string("\"") + key + "\" is not a string");
    }
    ex.input = j["input"].get<std::string>();
    ex.output = j["output"].get<std::string>();
    if (j.contains("documents")) {
      if (!j["documents"].is_array()) fail("\"documents\" is not a list");
      for (const auto& d : j["documents"]) {
        if (!d.is_string()) fail("\"documents\" entries must be strings");
        ex.documents.push_back(d.get<std::string>());
      }
    }
    if (tpl.label_names) {
      const auto& names = *tpl.label_names;
      if (std::find(names.begin(), names.end(), ex.output) == names.end()) {
        fail("output '" + ex.output + "' is not a declared label");
      }
    }
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) throw DatasetError("dataset " + ds.name + ": no examples");

  if (tpl.label_names) {
    ds.label_set = tpl.label_names;
  } else if (tpl.metric == Metric::accuracy) {
    std::vector<std::string> labels;
    for (const auto& ex : ds.examples) {
      if (std::find(labels.begin(), labels.end(), ex.output) == labels.end()) labels.push_back(ex.output);
    }
    ds.label_set = std::move(labels);
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, const TaskTemplate& tpl) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("dataset: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), tpl, path.stem().string());
}

}  // namespace pcw
