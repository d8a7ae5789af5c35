#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pcw/types.hpp"

namespace pcw {

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  // Throws TokenizerError on out-of-range ids.
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
  virtual std::size_t vocab_size() const = 0;
};

// id == byte value, vocabulary of 256. Used wherever real text is not needed.
class ByteTokenizer final : public Tokenizer {
 public:
  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  std::size_t vocab_size() const override { return 256; }
};

// GPT-2 pretokenization: contractions, optionally space-prefixed letter /
// number / symbol runs, and whitespace runs that leave their last character
// to the following word. Returns byte ranges into `text`.
std::vector<std::string_view> pretokenize(std::string_view text);

struct BpeVocab {
  std::unordered_map<std::string, TokenId> token_to_id;
  std::vector<std::string> id_to_token;
  // "left right" -> merge rank (lower merges first).
  std::unordered_map<std::string, std::size_t> merge_ranks;
  // Byte -> printable code point (UTF-8), GPT-2 convention, and its inverse.
  std::array<std::string, 256> byte_encoder;
  std::unordered_map<std::string, unsigned char> byte_decoder;

  std::size_t size() const { return id_to_token.size(); }
};

// GPT-2 byte -> printable code point table.
std::array<char32_t, 256> gpt2_byte_table();

// vocab: JSON object token -> id; merges: optional "#..." header line then
// "left right" per line. Throws TokenizerError.
BpeVocab load_bpe(const std::filesystem::path& vocab_file, const std::filesystem::path& merges_file);
BpeVocab parse_bpe(std::string_view vocab_json, std::string_view merges_text);

class BpeTokenizer final : public Tokenizer {
 public:
  explicit BpeTokenizer(BpeVocab vocab) : vocab_(std::move(vocab)) {}

  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  std::size_t vocab_size() const override { return vocab_.size(); }

  const BpeVocab& vocab() const { return vocab_; }

 private:
  void encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const;

  BpeVocab vocab_;
};

}  // namespace pcw
