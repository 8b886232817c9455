#pragma once

// Tokenization and n-gram counting shared by the metrics, ranking, fusion and
// pipeline modules.
//
// A token is a maximal run of word characters (letters, combining marks and,
// unless disabled, digits). Everything else separates tokens. Input is UTF-8;
// non-ASCII letters are recognised from a fixed table of Unicode blocks, so
// Greek symbols in captions ("α-helix") survive as tokens.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "figcap/errors.hpp"

namespace figcap {

struct TokenizerConfig {
  bool lowercase = true;
  bool keep_digits = true;
};

struct TokenSequence {
  std::vector<std::string> tokens;
  std::string source_text;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
};

using Ngram = std::vector<std::string>;

struct NgramMultiset {
  std::size_t order = 1;
  std::map<Ngram, std::size_t> counts;

  std::size_t total() const noexcept {
    std::size_t sum = 0;
    for (const auto& [gram, count] : counts) sum += count;
    return sum;
  }
};

// Half-open byte range [begin, end) of one token in the source text.
struct TokenSpan {
  std::size_t begin;
  std::size_t end;
};

namespace unicode {

inline constexpr char32_t kReplacement = 0xFFFD;

// Decodes one code point starting at text[pos]; advances pos. Malformed
// sequences consume one byte and yield kReplacement.
inline char32_t decode(std::string_view text, std::size_t& pos) noexcept {
  const auto lead = static_cast<unsigned char>(text[pos]);
  if (lead < 0x80) {
    ++pos;
    return lead;
  }
  std::size_t len = 0;
  char32_t cp = 0;
  if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
  } else {
    ++pos;
    return kReplacement;
  }
  if (pos + len > text.size()) {
    ++pos;
    return kReplacement;
  }
  for (std::size_t k = 1; k < len; ++k) {
    const auto byte = static_cast<unsigned char>(text[pos + k]);
    if ((byte & 0xC0) != 0x80) {
      ++pos;
      return kReplacement;
    }
    cp = (cp << 6) | (byte & 0x3F);
  }
  static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    ++pos;
    return kReplacement;
  }
  pos += len;
  return cp;
}

inline void encode(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline bool is_digit(char32_t cp) noexcept {
  return (cp >= U'0' && cp <= U'9') || (cp >= 0x0660 && cp <= 0x0669) ||
         (cp >= 0x06F0 && cp <= 0x06F9) || (cp >= 0x0966 && cp <= 0x096F) ||
         (cp >= 0xFF10 && cp <= 0xFF19);
}

// Letters and combining marks. Block-level approximation of the Unicode L and
// M categories covering Latin, Greek, Cyrillic, Armenian, Hebrew, Arabic,
// Devanagari, Thai, Georgian, Hangul, kana, CJK and the mathematical
// alphanumeric symbols.
inline bool is_letter(char32_t cp) noexcept {
  if (cp < 0x80) {
    return (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z');
  }
  struct Range {
    char32_t lo, hi;
  };
  static constexpr Range kRanges[] = {
      {0x00AA, 0x00AA}, {0x00B5, 0x00B5}, {0x00BA, 0x00BA}, {0x00C0, 0x00D6},
      {0x00D8, 0x00F6}, {0x00F8, 0x02C1}, {0x02C6, 0x02D1}, {0x02E0, 0x02E4},
      {0x0300, 0x036F}, {0x0370, 0x0374}, {0x0376, 0x0377}, {0x037A, 0x037D},
      {0x037F, 0x037F}, {0x0386, 0x0386}, {0x0388, 0x03F5}, {0x03F7, 0x0481},
      {0x0483, 0x052F}, {0x0531, 0x0556}, {0x0561, 0x0587}, {0x05D0, 0x05EA},
      {0x0620, 0x064A}, {0x066E, 0x06D3}, {0x06FA, 0x06FC}, {0x0900, 0x0963},
      {0x0971, 0x097F}, {0x0E01, 0x0E3A}, {0x0E40, 0x0E4E}, {0x10A0, 0x10FF},
      {0x1100, 0x11FF}, {0x1E00, 0x1FBC}, {0x1FC2, 0x1FCC}, {0x1FD0, 0x1FDB},
      {0x1FE0, 0x1FEC}, {0x1FF2, 0x1FFC}, {0x2071, 0x2071}, {0x207F, 0x207F},
      {0x2090, 0x209C}, {0x2102, 0x2102}, {0x2107, 0x2107}, {0x210A, 0x2113},
      {0x2115, 0x2115}, {0x2119, 0x211D}, {0x2124, 0x2124}, {0x2126, 0x2126},
      {0x2128, 0x2128}, {0x212A, 0x212D}, {0x212F, 0x2139}, {0x3041, 0x3096},
      {0x30A1, 0x30FA}, {0x3105, 0x312F}, {0x3131, 0x318E}, {0x3400, 0x4DBF},
      {0x4E00, 0x9FFF}, {0xAC00, 0xD7A3}, {0xF900, 0xFAFF}, {0xFF21, 0xFF3A},
      {0xFF41, 0xFF5A}, {0xFF66, 0xFFDC}, {0x1D400, 0x1D6C0}, {0x1D6C2, 0x1D6DA},
      {0x1D6DC, 0x1D6FA}, {0x1D6FC, 0x1D714}, {0x1D716, 0x1D734},
      {0x1D736, 0x1D74E}, {0x1D750, 0x1D76E}, {0x1D770, 0x1D788},
      {0x1D78A, 0x1D7A8}, {0x1D7AA, 0x1D7C2}, {0x1D7C4, 0x1D7CB},
      {0x20000, 0x2FA1F},
  };
  for (const auto& r : kRanges) {
    if (cp < r.lo) return false;
    if (cp <= r.hi) return true;
  }
  return false;
}

// Simple case folding for ASCII, Latin-1, Latin Extended-A, Greek, Cyrillic
// and fullwidth Latin. Maps to lowercase; idempotent.
inline char32_t to_lower(char32_t cp) noexcept {
  if (cp < 0x80) return (cp >= U'A' && cp <= U'Z') ? cp + 32 : cp;
  if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return cp + 32;
  if (cp >= 0x0100 && cp <= 0x0137) return cp | 1;
  if (cp >= 0x0139 && cp <= 0x0148) return (cp & 1) ? cp + 1 : cp;
  if (cp >= 0x014A && cp <= 0x0177) return cp | 1;
  if (cp == 0x0178) return 0x00FF;
  if (cp >= 0x0179 && cp <= 0x017E) return (cp & 1) ? cp + 1 : cp;
  if (cp >= 0x0391 && cp <= 0x03A9 && cp != 0x03A2) return cp + 32;
  if (cp == 0x0386) return 0x03AC;
  if (cp >= 0x0388 && cp <= 0x038A) return cp + 37;
  if (cp == 0x038C) return 0x03CC;
  if (cp == 0x038E || cp == 0x038F) return cp + 63;
  if (cp >= 0x0410 && cp <= 0x042F) return cp + 32;
  if (cp >= 0x0400 && cp <= 0x040F) return cp + 80;
  if (cp >= 0xFF21 && cp <= 0xFF3A) return cp + 32;
  return cp;
}

}  // namespace unicode

inline bool is_word_char(char32_t cp, const TokenizerConfig& config) noexcept {
  return unicode::is_letter(cp) || (config.keep_digits && unicode::is_digit(cp));
}

// Number of code points in a UTF-8 string (malformed bytes count as one each).
inline std::size_t utf8_length(std::string_view text) noexcept {
  std::size_t n = 0;
  for (std::size_t pos = 0; pos < text.size(); ++n) unicode::decode(text, pos);
  return n;
}

// Longest prefix of text holding at most max_chars code points.
inline std::string_view utf8_prefix(std::string_view text, std::size_t max_chars) noexcept {
  std::size_t pos = 0;
  for (std::size_t n = 0; n < max_chars && pos < text.size(); ++n) unicode::decode(text, pos);
  return text.substr(0, pos);
}

inline std::vector<TokenSpan> token_spans(std::string_view text,
                                          const TokenizerConfig& config = {}) {
  std::vector<TokenSpan> spans;
  bool in_token = false;
  std::size_t begin = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t at = pos;
    const char32_t cp = unicode::decode(text, pos);
    const bool word = is_word_char(cp, config);
    if (word && !in_token) {
      begin = at;
      in_token = true;
    } else if (!word && in_token) {
      spans.push_back({begin, at});
      in_token = false;
    }
  }
  if (in_token) spans.push_back({begin, text.size()});
  return spans;
}

inline TokenSequence tokenize(std::string_view text, const TokenizerConfig& config = {}) {
  TokenSequence seq;
  seq.source_text = std::string(text);
  for (const auto& span : token_spans(text, config)) {
    const auto piece = text.substr(span.begin, span.end - span.begin);
    if (!config.lowercase) {
      seq.tokens.emplace_back(piece);
      continue;
    }
    std::string token;
    token.reserve(piece.size());
    for (std::size_t pos = 0; pos < piece.size();) {
      unicode::encode(unicode::to_lower(unicode::decode(piece, pos)), token);
    }
    seq.tokens.push_back(std::move(token));
  }
  return seq;
}

inline std::string detokenize(const TokenSequence& seq) {
  std::string out;
  for (const auto& token : seq.tokens) {
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

inline NgramMultiset ngrams(const TokenSequence& seq, std::size_t n) {
  if (n == 0) throw InvalidArgument("ngram order must be >= 1");
  NgramMultiset result;
  result.order = n;
  if (seq.size() < n) return result;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    Ngram gram(seq.tokens.begin() + static_cast<std::ptrdiff_t>(i),
               seq.tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++result.counts[std::move(gram)];
  }
  return result;
}

}  // namespace figcap
