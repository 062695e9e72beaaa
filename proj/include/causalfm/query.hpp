#pragma once

// Query wordings and their rendering over ordered variable pairs.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "causalfm/corpus.hpp"
#include "causalfm/error.hpp"
#include "causalfm/io.hpp"

namespace causalfm::query {

enum class Symmetry { symmetric, asymmetric };

inline std::string_view to_string(Symmetry s) { return s == Symmetry::symmetric ? "symmetric" : "asymmetric"; }

inline constexpr std::string_view kCauseSlot = "{X}";
inline constexpr std::string_view kEffectSlot = "{Y}";

struct QueryTemplate {
  std::string id;
  std::string pattern;  // contains {X} and {Y} exactly once each
  Symmetry symmetry = Symmetry::symmetric;
  bool causal_explicit = false;

  bool operator==(const QueryTemplate&) const = default;

  // Slot text is inserted verbatim; a slot that opens the sentence gets its
  // first letter upper-cased.
  std::string render(std::string_view cause, std::string_view effect) const {
    std::string out;
    std::size_t pos = 0;
    while (pos < pattern.size()) {
      std::string_view rest = std::string_view(pattern).substr(pos);
      std::string_view phrase;
      if (rest.starts_with(kCauseSlot)) {
        phrase = cause;
      } else if (rest.starts_with(kEffectSlot)) {
        phrase = effect;
      } else {
        out.push_back(pattern[pos++]);
        continue;
      }
      const bool sentence_start = out.empty() || out.ends_with(". ") || out.ends_with("? ");
      std::string piece(phrase);
      if (sentence_start && !piece.empty()) {
        piece[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(piece[0])));
      }
      out += piece;
      pos += kCauseSlot.size();
    }
    return out;
  }
};

inline bool has_causal_stem(std::string_view pattern) {
  std::string lower(pattern);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower.find("caus") != std::string::npos;
}

inline QueryTemplate make_template(std::string id, std::string pattern, Symmetry symmetry) {
  auto count = [&](std::string_view slot) {
    std::size_t n = 0;
    for (auto p = pattern.find(slot); p != std::string::npos; p = pattern.find(slot, p + slot.size())) ++n;
    return n;
  };
  if (count(kCauseSlot) != 1 || count(kEffectSlot) != 1) {
    throw std::invalid_argument("template '" + id + "' must contain {X} and {Y} exactly once");
  }
  QueryTemplate t;
  t.causal_explicit = has_causal_stem(pattern);
  t.id = std::move(id);
  t.pattern = std::move(pattern);
  t.symmetry = symmetry;
  return t;
}

// The five fixed wordings: three symmetric (association), two asymmetric
// (direction).
inline const std::vector<QueryTemplate>& bundled_templates() {
  static const std::vector<QueryTemplate> kTemplates = {
      make_template("causally-related", "Are {X} and {Y} causally related?", Symmetry::symmetric),
      make_template("causal-connection", "Is there a causal connection between {X} and {Y}?", Symmetry::symmetric),
      make_template("causality-between", "Is there a causality between {X} and {Y}?", Symmetry::symmetric),
      make_template("does-cause", "Does {X} cause {Y}?", Symmetry::asymmetric),
      make_template("does-influence", "Does {X} influence {Y}?", Symmetry::asymmetric),
  };
  return kTemplates;
}

inline const QueryTemplate& find_template(std::string_view id) {
  for (const auto& t : bundled_templates()) {
    if (t.id == id) return t;
  }
  throw ConfigError("unknown template id '" + std::string(id) + "'");
}

// Resolves a selection of template ids (empty = all five) in bundled order.
inline std::vector<QueryTemplate> select_templates(const std::vector<std::string>& ids) {
  if (ids.empty()) return bundled_templates();
  for (const auto& id : ids) find_template(id);
  std::vector<QueryTemplate> out;
  for (const auto& t : bundled_templates()) {
    if (std::find(ids.begin(), ids.end(), t.id) != ids.end()) out.push_back(t);
  }
  return out;
}

struct Substitution {
  std::string var_id;
  std::string phrase;
  bool operator==(const Substitution&) const = default;
};

struct Prompt {
  std::string id;
  std::string dataset_id;
  std::string template_id;
  std::optional<std::pair<std::string, std::string>> pair;  // (cause-position, effect-position)
  std::string text;
  std::string suffix;
  std::vector<Substitution> perturbation;

  bool operator==(const Prompt&) const = default;
};

struct RenderOptions {
  std::string suffix;
  std::map<std::string, std::string> perturbations;  // var id -> phrase
};

inline std::string perturbation_tag(const std::map<std::string, std::string>& perturbations) {
  std::string tag;
  for (const auto& [var, phrase] : perturbations) {
    if (!tag.empty()) tag += ",";
    tag += var + "=" + phrase;
  }
  return tag;
}

// One prompt per (ordered pair, template): pairs in lexicographic id order,
// templates in the given order.
inline std::vector<Prompt> render_all(const corpus::BenchmarkDataset& dataset,
                                      const std::vector<QueryTemplate>& templates,
                                      const RenderOptions& options = {}) {
  for (const auto& [var, phrase] : options.perturbations) {
    if (!dataset.find(var)) {
      throw ConfigError("perturbation references unknown variable '" + var + "' in dataset " + dataset.id);
    }
    if (phrase.empty()) throw ConfigError("empty perturbation phrase for '" + var + "'");
  }
  auto phrase_of = [&](const std::string& id) -> std::string {
    if (auto it = options.perturbations.find(id); it != options.perturbations.end()) return it->second;
    return dataset.find(id)->display_name;
  };

  std::vector<Substitution> subs;
  for (const auto& [var, phrase] : options.perturbations) subs.push_back({var, phrase});
  const auto tag = perturbation_tag(options.perturbations);

  std::vector<Prompt> prompts;
  const auto ids = dataset.sorted_ids();
  for (const auto& cause : ids) {
    for (const auto& effect : ids) {
      if (cause == effect) continue;
      for (const auto& t : templates) {
        Prompt p;
        p.dataset_id = dataset.id;
        p.template_id = t.id;
        p.pair = std::make_pair(cause, effect);
        p.text = t.render(phrase_of(cause), phrase_of(effect));
        if (!options.suffix.empty()) {
          p.suffix = options.suffix;
          p.text += " " + options.suffix;
        }
        p.perturbation = subs;
        p.id = dataset.id + "/" + t.id + "/" + cause + "->" + effect;
        if (!tag.empty()) p.id += "[" + tag + "]";
        prompts.push_back(std::move(p));
      }
    }
  }
  return prompts;
}

// ---------------------------------------------------------------------------
// Free-text suites. File format: one question per line, "<id>\t<text>".

struct SuiteQuestion {
  std::string id;
  std::string text;
  bool operator==(const SuiteQuestion&) const = default;
};

inline std::vector<SuiteQuestion> parse_suite(std::string_view text, const std::string& source = "<memory>") {
  std::vector<SuiteQuestion> out;
  std::set<std::string> ids;
  auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = lines[i];
    if (line.empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0 || tab + 1 == line.size()) {
      throw ParseError(ParseError::Kind::syntax, source, i + 1, "expected '<id>\\t<question>'");
    }
    SuiteQuestion q{std::string(line.substr(0, tab)), std::string(line.substr(tab + 1))};
    if (!ids.insert(q.id).second) {
      throw ParseError(ParseError::Kind::invalid_value, source, i + 1, "duplicate question id '" + q.id + "'");
    }
    out.push_back(std::move(q));
  }
  return out;
}

inline std::vector<SuiteQuestion> load_suite(const std::filesystem::path& path) {
  return parse_suite(read_file(path), path.string());
}

inline std::string format_suite(const std::vector<SuiteQuestion>& suite) {
  std::string out;
  for (const auto& q : suite) out += q.id + "\t" + q.text + "\n";
  return out;
}

inline std::vector<Prompt> render_suite(std::string_view suite_name, const std::vector<SuiteQuestion>& suite) {
  if (suite.empty()) throw std::invalid_argument("render_suite: empty suite");
  std::vector<Prompt> out;
  out.reserve(suite.size());
  for (const auto& q : suite) {
    Prompt p;
    p.id = std::string(suite_name) + "/" + q.id;
    p.dataset_id = std::string(suite_name);
    p.text = q.text;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace causalfm::query
