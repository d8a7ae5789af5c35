#include "pcw/error.hpp"
#include "pcw/tokenizer.hpp"

namespace pcw {

std::vector<TokenId> ByteTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)));
  return out;
}

std::string ByteTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id < 0 || id > 255) throw TokenizerError("byte tokenizer: id " + std::to_string(id) + " out of range");
    out += static_cast<char>(id);
  }
  return out;
}

}  // namespace pcw
