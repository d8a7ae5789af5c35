#include <algorithm>
#include <cstdint>

#include "pcw/tokenizer.hpp"

namespace pcw {

namespace {

struct CodepointRange {
  char32_t first;
  char32_t last;
};

#include "tokenizer/unicode_tables.inc"

template <std::size_t N>
bool in_ranges(const CodepointRange (&table)[N], char32_t cp) {
  auto it = std::upper_bound(std::begin(table), std::end(table), cp,
                             [](char32_t v, const CodepointRange& r) { return v < r.first; });
  return it != std::begin(table) && cp <= std::prev(it)->last;
}

// Unicode White_Space.
bool is_space(char32_t cp) {
  return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F || cp == 0x205F ||
         cp == 0x3000;
}

enum class Kind : std::uint8_t { letter, number, space, other };

struct Cp {
  Kind kind;
  char32_t value;
  std::size_t offset;  // byte offset in the text
};

// Decodes UTF-8; an invalid byte becomes a one-byte "other" code point so the
// text is always covered.
std::size_t decode_utf8(std::string_view s, std::size_t i, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) {
    return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
  };
  auto byte = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3F); };
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  if ((b0 & 0xE0) == 0xC0 && b0 >= 0xC2 && cont(1)) {
    cp = (static_cast<char32_t>(b0 & 0x1F) << 6) | byte(1);
    return 2;
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    cp = (static_cast<char32_t>(b0 & 0x0F) << 12) | (byte(1) << 6) | byte(2);
    if (cp >= 0x800 && (cp < 0xD800 || cp > 0xDFFF)) return 3;
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    cp = (static_cast<char32_t>(b0 & 0x07) << 18) | (byte(1) << 12) | (byte(2) << 6) | byte(3);
    if (cp >= 0x10000 && cp <= 0x10FFFF) return 4;
  }
  cp = 0xFFFFFFFF;
  return 1;
}

Kind classify(char32_t cp) {
  if (cp == 0xFFFFFFFF) return Kind::other;
  if (is_space(cp)) return Kind::space;
  if (in_ranges(kLetterRanges, cp)) return Kind::letter;
  if (in_ranges(kNumberRanges, cp)) return Kind::number;
  return Kind::other;
}

}  // namespace

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<Cp> cps;
  for (std::size_t i = 0; i < text.size();) {
    char32_t cp;
    const std::size_t len = decode_utf8(text, i, cp);
    cps.push_back({classify(cp), cp, i});
    i += len;
  }
  const std::size_t n = cps.size();
  auto byte_at = [&](std::size_t k) { return k < n ? cps[k].offset : text.size(); };
  auto is = [&](std::size_t k, char32_t c) { return k < n && cps[k].value == c; };

  std::vector<std::string_view> out;
  auto emit = [&](std::size_t from, std::size_t to) { out.push_back(text.substr(byte_at(from), byte_at(to) - byte_at(from))); };

  std::size_t p = 0;
  while (p < n) {
    // 's 't 're 've 'm 'll 'd
    if (is(p, '\'')) {
      if (is(p + 1, 's') || is(p + 1, 't') || is(p + 1, 'm') || is(p + 1, 'd')) {
        emit(p, p + 2);
        p += 2;
        continue;
      }
      if ((is(p + 1, 'r') && is(p + 2, 'e')) || (is(p + 1, 'v') && is(p + 2, 'e')) ||
          (is(p + 1, 'l') && is(p + 2, 'l'))) {
        emit(p, p + 3);
        p += 3;
        continue;
      }
    }
    // ?\p{L}+ | ?\p{N}+ | ?[^\s\p{L}\p{N}]+
    const std::size_t q = is(p, ' ') ? p + 1 : p;
    if (q < n && cps[q].kind != Kind::space) {
      const Kind run = cps[q].kind;
      std::size_t e = q + 1;
      while (e < n && cps[e].kind == run) ++e;
      emit(p, e);
      p = e;
      continue;
    }
    // \s+(?!\S) | \s+
    std::size_t e = p + 1;
    while (e < n && cps[e].kind == Kind::space) ++e;
    if (e < n && e - p >= 2) --e;  // leave the last space for the next word
    emit(p, e);
    p = e;
  }
  return out;
}

}  // namespace pcw
