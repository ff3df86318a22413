#pragma once

// Porter (1980) suffix-stripping stemmer, original published rule set.

#include <array>
#include <string>
#include <string_view>
#include <utility>

namespace dcl {

namespace porter_detail {

struct Rule {
  std::string_view suffix;
  std::string_view replacement;
};

class Word {
public:
  explicit Word(std::string w) : w_(std::move(w)) {}

  const std::string& str() const { return w_; }
  std::string release() { return std::move(w_); }

  bool consonant(std::size_t i) const {
    switch (w_[i]) {
      case 'a': case 'e': case 'i': case 'o': case 'u': return false;
      case 'y': return i == 0 ? true : !consonant(i - 1);
      default: return true;
    }
  }

  // m in [C](VC)^m[V], evaluated on the first len characters.
  int measure(std::size_t len) const {
    int m = 0;
    std::size_t i = 0;
    while (i < len && consonant(i)) ++i;
    while (i < len) {
      while (i < len && !consonant(i)) ++i;
      if (i >= len) break;
      while (i < len && consonant(i)) ++i;
      ++m;
    }
    return m;
  }

  bool has_vowel(std::size_t len) const {
    for (std::size_t i = 0; i < len; ++i)
      if (!consonant(i)) return true;
    return false;
  }

  bool double_consonant(std::size_t len) const {
    return len >= 2 && w_[len - 1] == w_[len - 2] && consonant(len - 1);
  }

  bool cvc(std::size_t len) const {
    if (len < 3) return false;
    if (!consonant(len - 3) || consonant(len - 2) || !consonant(len - 1)) return false;
    const char c = w_[len - 1];
    return c != 'w' && c != 'x' && c != 'y';
  }

  bool ends(std::string_view s) const {
    return w_.size() >= s.size() && std::string_view(w_).substr(w_.size() - s.size()) == s;
  }

  std::size_t stem_len(std::string_view suffix) const { return w_.size() - suffix.size(); }

  void replace_suffix(std::string_view suffix, std::string_view repl) {
    w_.resize(w_.size() - suffix.size());
    w_ += repl;
  }

  void chop(std::size_t n) { w_.resize(w_.size() - n); }
  void append(std::string_view s) { w_ += s; }
  std::size_t size() const { return w_.size(); }
  char back() const { return w_.back(); }

  // First rule whose suffix matches decides; it fires only if the measure
  // of the remaining stem exceeds min_measure.
  template <std::size_t N>
  void apply_first(const std::array<Rule, N>& rules, int min_measure) {
    for (const auto& r : rules) {
      if (!ends(r.suffix)) continue;
      if (measure(stem_len(r.suffix)) > min_measure) replace_suffix(r.suffix, r.replacement);
      return;
    }
  }

private:
  std::string w_;
};

inline void step1a(Word& w) {
  if (w.ends("sses")) w.replace_suffix("sses", "ss");
  else if (w.ends("ies")) w.replace_suffix("ies", "i");
  else if (w.ends("ss")) return;
  else if (w.ends("s")) w.chop(1);
}

inline void step1b(Word& w) {
  if (w.ends("eed")) {
    if (w.measure(w.stem_len("eed")) > 0) w.chop(1);
    return;
  }
  std::string_view removed;
  if (w.ends("ed") && w.has_vowel(w.stem_len("ed"))) removed = "ed";
  else if (w.ends("ing") && w.has_vowel(w.stem_len("ing"))) removed = "ing";
  if (removed.empty()) return;
  w.chop(removed.size());

  if (w.ends("at") || w.ends("bl") || w.ends("iz")) {
    w.append("e");
  } else if (w.double_consonant(w.size())) {
    const char c = w.back();
    if (c != 'l' && c != 's' && c != 'z') w.chop(1);
  } else if (w.measure(w.size()) == 1 && w.cvc(w.size())) {
    w.append("e");
  }
}

inline void step1c(Word& w) {
  if (w.ends("y") && w.has_vowel(w.stem_len("y"))) w.replace_suffix("y", "i");
}

inline void step2(Word& w) {
  static constexpr std::array<Rule, 20> rules{{
      {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
      {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
      {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
      {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
      {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
  }};
  w.apply_first(rules, 0);
}

inline void step3(Word& w) {
  static constexpr std::array<Rule, 7> rules{{
      {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
      {"ical", "ic"},  {"ful", ""},   {"ness", ""},
  }};
  w.apply_first(rules, 0);
}

inline void step4(Word& w) {
  static constexpr std::array<std::string_view, 19> suffixes{
      "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
      "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize"};
  for (auto s : suffixes) {
    if (!w.ends(s)) continue;
    const std::size_t len = w.stem_len(s);
    if (w.measure(len) <= 1) return;
    if (s == "ion" && !(len > 0 && (w.str()[len - 1] == 's' || w.str()[len - 1] == 't'))) return;
    w.chop(s.size());
    return;
  }
}

inline void step5(Word& w) {
  if (w.ends("e")) {
    const std::size_t len = w.stem_len("e");
    const int m = w.measure(len);
    if (m > 1 || (m == 1 && !w.cvc(len))) w.chop(1);
  }
  if (w.measure(w.size()) > 1 && w.double_consonant(w.size()) && w.back() == 'l') w.chop(1);
}

}  // namespace porter_detail

/// Porter stem of a lowercase token. Empty input is returned unchanged.
inline std::string stem(std::string_view token) {
  if (token.empty()) return std::string(token);
  porter_detail::Word w{std::string(token)};
  porter_detail::step1a(w);
  if (w.size() == 0) return w.release();
  porter_detail::step1b(w);
  porter_detail::step1c(w);
  porter_detail::step2(w);
  porter_detail::step3(w);
  porter_detail::step4(w);
  if (w.size() == 0) return w.release();
  porter_detail::step5(w);
  return w.release();
}

}  // namespace dcl
