#include <cctype>
#include <map>
#include <sstream>

#include "pcw/harness.hpp"

namespace pcw {

namespace {

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string s;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) continue;
    s += (u < 0x80) ? static_cast<char>(std::tolower(u)) : c;
  }
  std::string out;
  for (const auto& w : words(s)) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

double exact_match(std::string_view pred, std::string_view gold) {
  return normalize_answer(pred) == normalize_answer(gold) ? 1.0 : 0.0;
}

double token_f1(std::string_view pred, std::string_view gold) {
  const auto p = words(normalize_answer(pred));
  const auto g = words(normalize_answer(gold));
  if (p.empty() || g.empty()) return p.empty() && g.empty() ? 1.0 : 0.0;
  std::map<std::string, std::size_t> counts;
  for (const auto& w : g) ++counts[w];
  std::size_t common = 0;
  for (const auto& w : p) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace pcw
