#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "pcw/error.hpp"
#include "pcw/tokenizer.hpp"

namespace pcw {

namespace {

std::string utf8(char32_t cp) {
  std::string s;
  if (cp < 0x80) {
    s += static_cast<char>(cp);
  } else if (cp < 0x800) {
    s += static_cast<char>(0xC0 | (cp >> 6));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    s += static_cast<char>(0xE0 | (cp >> 12));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TokenizerError("tokenizer: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Splits a byte-encoded token into its single-code-point symbols.
std::vector<std::string> symbols_of(std::string_view token) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < token.size();) {
    const auto b = static_cast<unsigned char>(token[i]);
    const std::size_t len = b < 0x80 ? 1 : (b & 0xE0) == 0xC0 ? 2 : (b & 0xF0) == 0xE0 ? 3 : 4;
    out.emplace_back(token.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

std::array<char32_t, 256> gpt2_byte_table() {
  std::array<char32_t, 256> table{};
  std::array<bool, 256> printable{};
  for (int b = '!'; b <= '~'; ++b) printable[b] = true;
  for (int b = 0xA1; b <= 0xAC; ++b) printable[b] = true;
  for (int b = 0xAE; b <= 0xFF; ++b) printable[b] = true;
  char32_t next = 256;
  for (int b = 0; b < 256; ++b) table[b] = printable[b] ? static_cast<char32_t>(b) : next++;
  return table;
}

BpeVocab parse_bpe(std::string_view vocab_json, std::string_view merges_text) {
  BpeVocab v;
  const auto table = gpt2_byte_table();
  for (int b = 0; b < 256; ++b) {
    v.byte_encoder[b] = utf8(table[b]);
    v.byte_decoder[v.byte_encoder[b]] = static_cast<unsigned char>(b);
  }

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(vocab_json);
  } catch (const nlohmann::json::exception& e) {
    throw TokenizerError(std::string("vocab: parse failure: ") + e.what());
  }
  if (!j.is_object()) throw TokenizerError("vocab: expected a JSON object of token -> id");
  v.id_to_token.assign(j.size(), {});
  std::vector<bool> seen(j.size(), false);
  for (const auto& [token, id_json] : j.items()) {
    if (!id_json.is_number_integer()) throw TokenizerError("vocab: id of '" + token + "' is not an integer");
    const auto id = id_json.get<std::int64_t>();
    if (id < 0 || static_cast<std::size_t>(id) >= seen.size()) {
      throw TokenizerError("vocab: id " + std::to_string(id) + " of '" + token + "' is outside [0, " +
                           std::to_string(seen.size()) + ")");
    }
    if (seen[static_cast<std::size_t>(id)]) throw TokenizerError("vocab: duplicate id " + std::to_string(id));
    seen[static_cast<std::size_t>(id)] = true;
    v.id_to_token[static_cast<std::size_t>(id)] = token;
    v.token_to_id.emplace(token, static_cast<TokenId>(id));
  }
  for (const auto& sym : v.byte_encoder) {
    if (!v.token_to_id.contains(sym)) throw TokenizerError("vocab: missing base byte token '" + sym + "'");
  }

  std::istringstream lines{std::string(merges_text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line[0] == '#')) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 == line.size() ||
        line.find(' ', space + 1) != std::string::npos) {
      throw TokenizerError("merges: line " + std::to_string(line_no) + " is not 'left right'");
    }
    const std::string left = line.substr(0, space);
    const std::string right = line.substr(space + 1);
    for (const std::string& sym : {left, right, left + right}) {
      if (!v.token_to_id.contains(sym)) {
        throw TokenizerError("merges: line " + std::to_string(line_no) + " references unknown symbol '" + sym + "'");
      }
    }
    v.merge_ranks.emplace(line, v.merge_ranks.size());
  }
  return v;
}

BpeVocab load_bpe(const std::filesystem::path& vocab_file, const std::filesystem::path& merges_file) {
  return parse_bpe(read_file(vocab_file), read_file(merges_file));
}

void BpeTokenizer::encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const {
  std::vector<std::string> word;
  word.reserve(chunk.size());
  for (char c : chunk) word.push_back(vocab_.byte_encoder[static_cast<unsigned char>(c)]);

  std::string key;
  while (word.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < word.size(); ++i) {
      key.assign(word[i]).append(" ").append(word[i + 1]);
      auto it = vocab_.merge_ranks.find(key);
      if (it != vocab_.merge_ranks.end() && it->second < best_rank) {
        best_rank = it->second;
        best_at = i;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const std::string first = word[best_at];
    const std::string second = word[best_at + 1];
    std::vector<std::string> merged;
    merged.reserve(word.size());
    for (std::size_t i = 0; i < word.size();) {
      if (i + 1 < word.size() && word[i] == first && word[i + 1] == second) {
        merged.push_back(first + second);
        i += 2;
      } else {
        merged.push_back(std::move(word[i]));
        i += 1;
      }
    }
    word = std::move(merged);
  }
  for (const auto& sym : word) {
    auto it = vocab_.token_to_id.find(sym);
    if (it == vocab_.token_to_id.end()) throw TokenizerError("tokenizer: symbol '" + sym + "' has no id");
    out.push_back(it->second);
  }
}

std::vector<TokenId> BpeTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (std::string_view chunk : pretokenize(text)) encode_chunk(chunk, out);
  return out;
}

std::string BpeTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
      throw TokenizerError("tokenizer: id " + std::to_string(id) + " out of range");
    }
    for (const auto& sym : symbols_of(vocab_.id_to_token[static_cast<std::size_t>(id)])) {
      auto it = vocab_.byte_decoder.find(sym);
      if (it == vocab_.byte_decoder.end()) throw TokenizerError("tokenizer: symbol '" + sym + "' is not a byte");
      out += static_cast<char>(it->second);
    }
  }
  return out;
}

}  // namespace pcw
