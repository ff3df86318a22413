#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace dcl {

using TokenSequence = std::vector<std::string>;

namespace detail {
inline bool is_space(unsigned char c) { return std::isspace(c) != 0; }
// Bytes >= 0x80 belong to UTF-8 sequences and are passed through as word characters.
inline bool is_word(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0; }
inline char lower(unsigned char c) { return static_cast<char>(c < 0x80 ? std::tolower(c) : c); }
}  // namespace detail

/// Lowercases, splits on whitespace and detaches punctuation. An apostrophe
/// followed by a word character opens a clitic token ("cat's" -> cat 's).
inline TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (detail::is_space(c)) {
      flush();
    } else if (detail::is_word(c)) {
      cur.push_back(detail::lower(c));
    } else if (c == '\'' && i + 1 < text.size() &&
               detail::is_word(static_cast<unsigned char>(text[i + 1]))) {
      flush();
      cur.push_back('\'');
    } else {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

inline std::string join(const TokenSequence& tokens, std::string_view sep = " ") {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += sep;
    s += tokens[i];
  }
  return s;
}

/// Lowercase plus whitespace collapse; the equality used for "differs from gold".
inline std::string normalize(std::string_view text) {
  std::string s;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (detail::is_space(c)) {
      pending_space = !s.empty();
      continue;
    }
    if (pending_space) s.push_back(' ');
    pending_space = false;
    s.push_back(detail::lower(c));
  }
  return s;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && detail::is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && detail::is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace dcl
