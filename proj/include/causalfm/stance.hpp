#pragma once

// Rule-based classification of free-text model answers.
//
// The classification cascade is ordered and the first matching rule wins:
//
//   1. no sentences, or the response echoes the prompt  -> no_answer_general
//   2. multiple-choice output: a declared pick ("Answer: D") is classified
//      from the picked option's text; without a pick     -> no_answer_general
//   3. verdict: a leading yes/no token or a bare causal assertion in the
//      first sentence ("A causes D.", "A does not cause A."), or an explicit
//      "the answer is yes/no" in any sentence, sets the polarity
//   4. qualifier (only with a verdict): hedging lexicon on the verdict
//      sentence (probably, indirectly, other_factors, in that order); a bare
//      verdict followed by more sentences is through_explanation
//   5. no verdict and an inconclusive phrase anywhere     -> inconclusive
//   6. otherwise                                          -> no_answer_general
//
// Degeneracy flags are computed separately and carried through unchanged.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "causalfm/error.hpp"
#include "causalfm/io.hpp"

namespace causalfm::stance {

enum class Polarity { yes, no, none };
enum class Qualifier { plain, probably, indirectly, other_factors, through_explanation };
enum class Special { none, inconclusive, no_answer_general };
enum class Degeneracy : std::uint8_t { loop_detected = 1, multiple_choice = 2, echo_of_prompt = 4, truncated = 8 };

inline constexpr std::array<Degeneracy, 4> kAllDegeneracies = {
    Degeneracy::loop_detected, Degeneracy::multiple_choice, Degeneracy::echo_of_prompt, Degeneracy::truncated};

inline std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::yes: return "yes";
    case Polarity::no: return "no";
    case Polarity::none: return "none";
  }
  return "none";
}

inline std::string_view to_string(Qualifier q) {
  switch (q) {
    case Qualifier::plain: return "plain";
    case Qualifier::probably: return "probably";
    case Qualifier::indirectly: return "indirectly";
    case Qualifier::other_factors: return "other_factors";
    case Qualifier::through_explanation: return "through_explanation";
  }
  return "plain";
}

inline std::string_view to_string(Special s) {
  switch (s) {
    case Special::none: return "none";
    case Special::inconclusive: return "inconclusive";
    case Special::no_answer_general: return "no_answer_general";
  }
  return "none";
}

inline std::string_view to_string(Degeneracy d) {
  switch (d) {
    case Degeneracy::loop_detected: return "loop_detected";
    case Degeneracy::multiple_choice: return "multiple_choice";
    case Degeneracy::echo_of_prompt: return "echo_of_prompt";
    case Degeneracy::truncated: return "truncated";
  }
  return "";
}

inline Polarity parse_polarity(std::string_view s) {
  if (s == "yes") return Polarity::yes;
  if (s == "no") return Polarity::no;
  if (s == "none") return Polarity::none;
  throw Error("unknown polarity '" + std::string(s) + "'");
}

inline Qualifier parse_qualifier(std::string_view s) {
  for (auto q : {Qualifier::plain, Qualifier::probably, Qualifier::indirectly, Qualifier::other_factors,
                 Qualifier::through_explanation}) {
    if (to_string(q) == s) return q;
  }
  throw Error("unknown qualifier '" + std::string(s) + "'");
}

inline Special parse_special(std::string_view s) {
  for (auto x : {Special::none, Special::inconclusive, Special::no_answer_general}) {
    if (to_string(x) == s) return x;
  }
  throw Error("unknown special '" + std::string(s) + "'");
}

inline Degeneracy parse_degeneracy(std::string_view s) {
  for (auto d : kAllDegeneracies) {
    if (to_string(d) == s) return d;
  }
  throw Error("unknown degeneracy '" + std::string(s) + "'");
}

class DegeneracySet {
 public:
  DegeneracySet() = default;
  DegeneracySet(std::initializer_list<Degeneracy> flags) {
    for (auto f : flags) insert(f);
  }

  void insert(Degeneracy d) { bits_ |= static_cast<std::uint8_t>(d); }
  bool contains(Degeneracy d) const { return (bits_ & static_cast<std::uint8_t>(d)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::uint8_t bits() const { return bits_; }

  std::vector<Degeneracy> items() const {
    std::vector<Degeneracy> out;
    for (auto d : kAllDegeneracies) {
      if (contains(d)) out.push_back(d);
    }
    return out;
  }

  bool operator==(const DegeneracySet&) const = default;

 private:
  std::uint8_t bits_ = 0;
};

struct AnswerLabel {
  Polarity polarity = Polarity::none;
  Qualifier qualifier = Qualifier::plain;
  Special special = Special::none;
  DegeneracySet degeneracies;

  bool operator==(const AnswerLabel&) const = default;

  static AnswerLabel no_answer(DegeneracySet d = {}) { return {Polarity::none, Qualifier::plain, Special::no_answer_general, d}; }
  static AnswerLabel inconclusive(DegeneracySet d = {}) { return {Polarity::none, Qualifier::plain, Special::inconclusive, d}; }
  static AnswerLabel verdict(Polarity p, Qualifier q = Qualifier::plain, DegeneracySet d = {}) {
    return {p, q, Special::none, d};
  }
};

inline nlohmann::json to_json(const AnswerLabel& l) {
  auto degs = nlohmann::json::array();
  for (auto d : l.degeneracies.items()) degs.push_back(to_string(d));
  return nlohmann::json{{"polarity", to_string(l.polarity)},
                        {"qualifier", to_string(l.qualifier)},
                        {"special", to_string(l.special)},
                        {"degeneracies", degs}};
}

inline AnswerLabel label_from_json(const nlohmann::json& j) {
  AnswerLabel l;
  l.polarity = parse_polarity(j.at("polarity").get<std::string>());
  l.qualifier = parse_qualifier(j.at("qualifier").get<std::string>());
  l.special = parse_special(j.at("special").get<std::string>());
  for (const auto& d : j.at("degeneracies")) l.degeneracies.insert(parse_degeneracy(d.get<std::string>()));
  return l;
}

inline std::string describe(const AnswerLabel& l) { return to_json(l).dump(); }

struct NormalizedText {
  std::vector<std::string> sentences;
  std::string raw;
};

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }
inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
inline bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline std::string collapse_spaces(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (is_space(c)) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

// "A.", "B:", "C)" at the start of a sentence.
inline bool starts_with_option_marker(std::string_view s) {
  return s.size() >= 2 && s[0] >= 'A' && s[0] <= 'Z' && (s[1] == '.' || s[1] == ':' || s[1] == ')') &&
         (s.size() == 2 || s[2] == ' ');
}

inline std::string_view strip_option_marker(std::string_view s) {
  if (!starts_with_option_marker(s)) return s;
  s.remove_prefix(2);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

inline bool istarts_with(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
  }
  return true;
}

// Removes option markers, "Answer:"/"Explanation:"/"Question:" labels and an
// "The answer is" lead-in.
inline std::string_view strip_lead(std::string_view s) {
  static constexpr std::array<std::string_view, 6> kPrefixes = {
      "answer:", "explanation:", "question:", "the answer is that ", "the answer is:", "the answer is "};
  bool changed = true;
  while (changed) {
    changed = false;
    auto before = s.size();
    s = strip_option_marker(s);
    for (auto p : kPrefixes) {
      if (istarts_with(s, p)) {
        s.remove_prefix(p.size());
        break;
      }
    }
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    changed = s.size() != before;
  }
  return s;
}

inline std::string_view trim_trailing_punct(std::string_view s) {
  while (!s.empty() && (is_terminal(s.back()) || s.back() == ' ' || s.back() == ',')) s.remove_suffix(1);
  return s;
}

// Comparison key: lowercase, terminal punctuation dropped.
inline std::string sentence_key(std::string_view s) { return lower(trim_trailing_punct(s)); }

}  // namespace detail

// Splits on line breaks and on terminal punctuation followed by whitespace.
// A lone option letter ("A.") does not end a sentence.
inline NormalizedText normalize(std::string_view raw) {
  NormalizedText out;
  out.raw = std::string(raw);
  std::string_view rest = raw;
  while (!rest.empty()) {
    auto nl = rest.find_first_of("\n");
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);

    const std::string collapsed = detail::collapse_spaces(line);
    std::string cur;
    for (std::size_t i = 0; i < collapsed.size(); ++i) {
      const char c = collapsed[i];
      if (cur.empty() && c == ' ') continue;
      cur.push_back(c);
      if (!detail::is_terminal(c)) continue;
      while (i + 1 < collapsed.size() && detail::is_terminal(collapsed[i + 1])) cur.push_back(collapsed[++i]);
      const bool boundary = i + 1 == collapsed.size() || collapsed[i + 1] == ' ';
      const bool option_marker = cur.size() == 2 && cur[0] >= 'A' && cur[0] <= 'Z' && cur[1] == '.';
      if (boundary && !option_marker) {
        out.sentences.push_back(cur);
        cur.clear();
      }
    }
    while (!cur.empty() && cur.back() == ' ') cur.pop_back();
    if (!cur.empty()) out.sentences.push_back(cur);
  }
  return out;
}

// Loop: K or more consecutive identical sentences (after option-marker
// stripping).
inline constexpr std::size_t kLoopThreshold = 3;

inline DegeneracySet detect_degeneracies(const NormalizedText& t, std::string_view prompt, bool truncated = false) {
  DegeneracySet out;
  if (truncated) out.insert(Degeneracy::truncated);

  std::size_t run = 0;
  std::string prev;
  for (const auto& s : t.sentences) {
    auto key = detail::sentence_key(detail::strip_lead(s));
    run = (run > 0 && key == prev) ? run + 1 : 1;
    prev = std::move(key);
    if (run >= kLoopThreshold) out.insert(Degeneracy::loop_detected);
  }

  const auto markers = std::count_if(t.sentences.begin(), t.sentences.end(),
                                     [](const std::string& s) { return detail::starts_with_option_marker(s); });
  if (markers >= 2) out.insert(Degeneracy::multiple_choice);

  if (!t.sentences.empty()) {
    const auto p = normalize(prompt);
    if (!p.sentences.empty()) {
      const auto first = detail::sentence_key(t.sentences.front());
      if (first == detail::sentence_key(p.sentences.front()) || first == detail::sentence_key(p.sentences.back())) {
        out.insert(Degeneracy::echo_of_prompt);
      }
    }
  }
  return out;
}

enum class HedgeCategory { probably, indirectly, other_factors, inconclusive };

inline std::string_view to_string(HedgeCategory c) {
  switch (c) {
    case HedgeCategory::probably: return "probably";
    case HedgeCategory::indirectly: return "indirectly";
    case HedgeCategory::other_factors: return "other_factors";
    case HedgeCategory::inconclusive: return "inconclusive";
  }
  return "";
}

// Phrase lists per hedge category. File format: "<category>\t<phrase>" per
// line, '#' comments.
class Lexicon {
 public:
  static Lexicon parse(std::string_view text, const std::string& source = "<memory>") {
    Lexicon lex;
    auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto line = lines[i];
      if (line.empty() || line.front() == '#') continue;
      auto tab = line.find('\t');
      if (tab == std::string_view::npos) {
        throw ParseError(ParseError::Kind::syntax, source, i + 1, "expected '<category>\\t<phrase>'");
      }
      auto cat = line.substr(0, tab);
      auto phrase = detail::lower(line.substr(tab + 1));
      if (phrase.empty()) throw ParseError(ParseError::Kind::syntax, source, i + 1, "empty phrase");
      bool known = false;
      for (auto c : {HedgeCategory::probably, HedgeCategory::indirectly, HedgeCategory::other_factors,
                     HedgeCategory::inconclusive}) {
        if (to_string(c) == cat) {
          lex.add(c, phrase);
          known = true;
        }
      }
      if (!known) {
        throw ParseError(ParseError::Kind::invalid_value, source, i + 1, "unknown category '" + std::string(cat) + "'");
      }
    }
    return lex;
  }

  static Lexicon load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

  static Lexicon load_bundled(const std::filesystem::path& data_dir) {
    return load(data_dir / "lexicon" / "hedges.tsv");
  }

  void add(HedgeCategory c, std::string phrase) { phrases_[index(c)].push_back(detail::lower(phrase)); }

  const std::vector<std::string>& phrases(HedgeCategory c) const { return phrases_[index(c)]; }

  // Whole-word, case-insensitive match of any phrase of category `c`.
  bool matches(HedgeCategory c, std::string_view text) const {
    const auto hay = detail::lower(text);
    for (const auto& p : phrases_[index(c)]) {
      for (auto pos = hay.find(p); pos != std::string::npos; pos = hay.find(p, pos + 1)) {
        const bool left = pos == 0 || !detail::is_alnum(hay[pos - 1]);
        const bool right = pos + p.size() == hay.size() || !detail::is_alnum(hay[pos + p.size()]);
        if (left && right) return true;
      }
    }
    return false;
  }

 private:
  static std::size_t index(HedgeCategory c) { return static_cast<std::size_t>(c); }
  std::array<std::vector<std::string>, 4> phrases_;
};

namespace detail {

struct Verdict {
  Polarity polarity = Polarity::none;
  bool forced_probable = false;
};

inline std::optional<Verdict> leading_token(std::string_view stripped) {
  const auto s = lower(stripped);
  auto word_end = [&](std::size_t n) { return s.size() == n || !is_alnum(s[n]); };
  if (s.starts_with("yes") && word_end(3)) return Verdict{Polarity::yes};
  if (s.starts_with("no") && word_end(2)) {
    static constexpr std::array<std::string_view, 5> kNotAnswers = {" one", " definitive", " answer", " clear", " matter"};
    for (auto w : kNotAnswers) {
      if (s.compare(2, w.size(), w) == 0) return std::nullopt;
    }
    return Verdict{Polarity::no};
  }
  return std::nullopt;
}

// "<subject> [negation] [adverb] [modal] cause(s)/influence(s)/affect(s) ..."
// optionally preceded by "It is possible/likely that".
inline std::optional<Verdict> causal_assertion(std::string_view stripped) {
  static const std::regex kAssertion(
      R"(^(it is (?:possible|likely|probable) that )?)"
      R"(([A-Za-z0-9'-]+(?: [A-Za-z0-9'-]+){0,3}?) )"
      R"((?:(does not|doesn't|do not|don't|did not|didn't|cannot|can not|can't|may not|might not|will not|won't|could not|couldn't) )?)"
      R"((?:(?:necessarily|directly|indirectly|always|really|actually|probably|likely|definitely|also) )?)"
      R"((?:(?:may|might|could|can|does|do|will) )?)"
      R"((?:cause|causes|caused|influence|influences|influenced|affect|affects|affected)(?![\w-])(?! of))",
      std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
  static constexpr std::array<std::string_view, 13> kBadLead = {
      "if", "there", "when", "whether", "what", "which", "how", "why", "in", "because", "so", "then", "while"};
  static constexpr std::array<std::string_view, 5> kDeterminers = {"the", "The", "a", "an", "An"};

  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(stripped.begin(), stripped.end(), m, kAssertion)) return std::nullopt;
  const std::string subject = m[2].str();
  const auto first_word = lower(subject.substr(0, subject.find(' ')));
  if (std::find(kBadLead.begin(), kBadLead.end(), first_word) != kBadLead.end()) return std::nullopt;
  if (std::find(kDeterminers.begin(), kDeterminers.end(), subject) != kDeterminers.end()) return std::nullopt;
  Verdict v;
  v.polarity = m[3].matched ? Polarity::no : Polarity::yes;
  v.forced_probable = m[1].matched;
  return v;
}

inline std::optional<Polarity> explicit_answer(std::string_view sentence) {
  static const std::regex kAnswer(R"(\bthe answer is:? (yes|no)\b)", std::regex::ECMAScript | std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  const auto s = strip_option_marker(sentence);
  if (!std::regex_search(s.begin(), s.end(), m, kAnswer)) return std::nullopt;
  return lower(m[1].str()) == "yes" ? Polarity::yes : Polarity::no;
}

inline bool is_bare_verdict(std::string_view sentence) {
  const auto core = lower(trim_trailing_punct(strip_lead(sentence)));
  return core == "yes" || core == "no";
}

inline AnswerLabel classify_sentences(const std::vector<std::string>& sentences, DegeneracySet degs,
                                      const Lexicon& lexicon) {
  std::optional<Verdict> verdict;
  std::size_t at = 0;
  const auto first = strip_lead(sentences.front());
  verdict = leading_token(first);
  if (!verdict) verdict = causal_assertion(first);
  if (!verdict) {
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      if (auto p = explicit_answer(sentences[i])) {
        verdict = Verdict{*p};
        at = i;
        break;
      }
    }
  }

  if (verdict) {
    const auto& s = sentences[at];
    Qualifier q = Qualifier::plain;
    if (verdict->forced_probable || lexicon.matches(HedgeCategory::probably, s)) {
      q = Qualifier::probably;
    } else if (lexicon.matches(HedgeCategory::indirectly, s)) {
      q = Qualifier::indirectly;
    } else if (lexicon.matches(HedgeCategory::other_factors, s)) {
      q = Qualifier::other_factors;
    } else if (is_bare_verdict(s) && at + 1 < sentences.size()) {
      q = Qualifier::through_explanation;
    }
    return AnswerLabel::verdict(verdict->polarity, q, degs);
  }

  for (const auto& s : sentences) {
    if (lexicon.matches(HedgeCategory::inconclusive, s)) return AnswerLabel::inconclusive(degs);
  }
  return AnswerLabel::no_answer(degs);
}

}  // namespace detail

inline AnswerLabel classify(const NormalizedText& t, DegeneracySet degeneracies, const Lexicon& lexicon) {
  if (t.sentences.empty() || degeneracies.contains(Degeneracy::echo_of_prompt)) {
    return AnswerLabel::no_answer(degeneracies);
  }

  if (degeneracies.contains(Degeneracy::multiple_choice)) {
    static const std::regex kPick(R"(^answer:\s*([A-Z])\.?$)", std::regex::ECMAScript | std::regex::icase);
    for (const auto& s : t.sentences) {
      std::smatch m;
      if (!std::regex_match(s, m, kPick)) continue;
      const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
      for (const auto& option : t.sentences) {
        if (detail::starts_with_option_marker(option) && option[0] == letter) {
          auto text = std::string(detail::strip_option_marker(option));
          if (text.empty()) break;
          auto picked = detail::classify_sentences({text}, degeneracies, lexicon);
          return picked;
        }
      }
      break;
    }
    return AnswerLabel::no_answer(degeneracies);
  }

  return detail::classify_sentences(t.sentences, degeneracies, lexicon);
}

// normalize -> detect_degeneracies -> classify.
inline AnswerLabel classify_response(std::string_view response, std::string_view prompt, bool truncated,
                                     const Lexicon& lexicon) {
  const auto t = normalize(response);
  return classify(t, detect_degeneracies(t, prompt, truncated), lexicon);
}

}  // namespace causalfm::stance
