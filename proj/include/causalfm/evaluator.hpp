#pragma once

// Scoring predicted graphs against ground truth, stability across wordings
// and perturbations, and grading of the common-sense suites.

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalfm/corpus.hpp"
#include "causalfm/error.hpp"
#include "causalfm/graph.hpp"
#include "causalfm/io.hpp"
#include "causalfm/stance.hpp"

namespace causalfm::eval {

using graph::Mark;
using graph::PredictedGraph;

struct EdgeConfusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const EdgeConfusion&) const = default;
};

inline nlohmann::json to_json(const EdgeConfusion& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

struct Confusion {
  EdgeConfusion existence;                  // unordered pairs
  std::optional<EdgeConfusion> orientation;  // ordered pairs, directed graphs only
};

namespace detail {

inline void check_same_dataset(const PredictedGraph& g, const corpus::BenchmarkDataset& ds) {
  if (g.dataset_id != ds.id || g.variables != ds.sorted_ids()) {
    throw std::invalid_argument("graph for dataset " + g.dataset_id + " compared with dataset " + ds.id);
  }
}

inline void check_same_dataset(const PredictedGraph& a, const PredictedGraph& b) {
  if (a.dataset_id != b.dataset_id || a.variables != b.variables) {
    throw std::invalid_argument("graphs over different datasets: " + a.dataset_id + " and " + b.dataset_id);
  }
}

inline void tally(EdgeConfusion& c, bool truth, bool pred) {
  if (truth && pred) ++c.tp;
  else if (pred) ++c.fp;
  else if (truth) ++c.fn;
  else ++c.tn;
}

}  // namespace detail

inline EdgeConfusion existence_confusion(const PredictedGraph& pred, const corpus::BenchmarkDataset& truth) {
  detail::check_same_dataset(pred, truth);
  EdgeConfusion c;
  for (const auto& [p, m] : pred.marks) detail::tally(c, truth.adjacent(p.first, p.second), m != Mark::none);
  return c;
}

// Ordered pairs: (x, y) is predicted when the mark points from x to y, so
// x↔y against a true x→y yields one tp and one fp.
inline EdgeConfusion orientation_confusion(const PredictedGraph& pred, const corpus::BenchmarkDataset& truth) {
  detail::check_same_dataset(pred, truth);
  if (pred.symmetry != query::Symmetry::asymmetric) {
    throw std::invalid_argument("orientation confusion needs a directed graph, got " + pred.template_id);
  }
  EdgeConfusion c;
  for (const auto& [x, y] : graph::ordered_pairs(pred.variables)) {
    const auto m = pred.mark(x, y);
    detail::tally(c, truth.has_edge(x, y), m == Mark::forward || m == Mark::bidirected);
  }
  return c;
}

inline Confusion confusion(const PredictedGraph& pred, const corpus::BenchmarkDataset& truth) {
  Confusion c{existence_confusion(pred, truth), std::nullopt};
  if (pred.symmetry == query::Symmetry::asymmetric) c.orientation = orientation_confusion(pred, truth);
  return c;
}

// fp / (fp + tn); not applicable when there are no negatives.
inline std::optional<double> fpr(const EdgeConfusion& c) {
  if (c.fp + c.tn == 0) return std::nullopt;
  return static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
}

inline nlohmann::json optional_number(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

// Number of unordered pairs whose marks differ.
inline std::size_t shd(const PredictedGraph& a, const PredictedGraph& b) {
  detail::check_same_dataset(a, b);
  std::size_t d = 0;
  for (const auto& [p, m] : a.marks) d += b.marks.at(p) != m ? 1 : 0;
  return d;
}

inline std::optional<double> density_ratio(const PredictedGraph& g, const corpus::BenchmarkDataset& truth) {
  detail::check_same_dataset(g, truth);
  if (truth.truth_edges.empty()) return std::nullopt;
  return static_cast<double>(g.connection_count()) / static_cast<double>(truth.truth_edges.size());
}

// Signed change in connection count; negative means the perturbed graph is
// sparser.
inline long perturbation_delta(const PredictedGraph& base, const PredictedGraph& perturbed) {
  if (base.variables.size() != perturbed.variables.size()) {
    throw std::invalid_argument("perturbation delta over graphs of different arity");
  }
  return static_cast<long>(perturbed.connection_count()) - static_cast<long>(base.connection_count());
}

struct PerturbationDelta {
  std::string perturbation;
  std::string template_id;
  long delta = 0;
};

struct StabilityReport {
  std::vector<std::string> template_ids;
  std::vector<std::vector<std::size_t>> distances;
  std::size_t max_distance = 0;
  double mean_distance = 0.0;
  std::map<std::string, std::optional<double>> density_ratio;
  std::vector<PerturbationDelta> perturbation_deltas;
};

inline StabilityReport wording_sensitivity(const std::vector<PredictedGraph>& graphs) {
  if (graphs.size() < 2) throw std::invalid_argument("wording sensitivity needs at least two graphs");
  StabilityReport r;
  const auto n = graphs.size();
  r.distances.assign(n, std::vector<std::size_t>(n, 0));
  std::size_t sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    r.template_ids.push_back(graphs[i].template_id);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto d = shd(graphs[i], graphs[j]);
      r.distances[i][j] = r.distances[j][i] = d;
      r.max_distance = std::max(r.max_distance, d);
      sum += d;
    }
  }
  r.mean_distance = static_cast<double>(sum) / static_cast<double>(n * (n - 1) / 2);
  return r;
}

inline nlohmann::json to_json(const StabilityReport& r) {
  nlohmann::json density = nlohmann::json::object();
  for (const auto& [t, v] : r.density_ratio) density[t] = optional_number(v);
  auto deltas = nlohmann::json::array();
  for (const auto& d : r.perturbation_deltas) {
    deltas.push_back({{"perturbation", d.perturbation}, {"template_id", d.template_id}, {"delta", d.delta}});
  }
  return {{"templates", r.template_ids}, {"distances", r.distances},     {"max_distance", r.max_distance},
          {"mean_distance", r.mean_distance}, {"density_ratio", density}, {"perturbation_deltas", deltas}};
}

// ---------------------------------------------------------------------------
// Suite grading

enum class Verdict { correct, wrong, indecisive, unanswered };

inline constexpr std::array<Verdict, 4> kAllVerdicts = {Verdict::correct, Verdict::wrong, Verdict::indecisive,
                                                        Verdict::unanswered};

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::correct: return "correct";
    case Verdict::wrong: return "wrong";
    case Verdict::indecisive: return "indecisive";
    case Verdict::unanswered: return "unanswered";
  }
  return "?";
}

inline Verdict parse_verdict(std::string_view s) {
  for (auto v : kAllVerdicts) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown verdict '" + std::string(s) + "'");
}

enum class KeyKind { polarity, content, open };

struct KeyEntry {
  std::string id;
  KeyKind kind = KeyKind::open;
  stance::Polarity expect = stance::Polarity::none;  // polarity entries
  std::vector<std::string> accept;                   // content entries
  std::vector<std::string> reject;
  Verdict on_inconclusive = Verdict::indecisive;
  std::string rationale;
};

struct AnswerKey {
  std::string suite;
  std::map<std::string, KeyEntry> entries;
};

inline constexpr std::string_view kKeySchema = "causalfm.key/1";

// Key file: {"schema": "causalfm.key/1", "suite": "...", "entries": [
//   {"id", "kind": "polarity"|"content"|"open", "expect": "yes"|"no",
//    "accept": [...], "reject": [...], "on_inconclusive": verdict,
//    "rationale": "..."}]}
inline AnswerKey parse_key(std::string_view text, const std::string& source = "<memory>") {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError(source + ": answer key is not valid JSON");
  auto fail = [&](const std::string& msg) -> ConfigError { return ConfigError(source + ": " + msg); };
  if (j.value("schema", "") != kKeySchema) throw fail("expected schema " + std::string(kKeySchema));
  AnswerKey key;
  key.suite = j.value("suite", "");
  if (!j.contains("entries") || !j["entries"].is_array()) throw fail("missing entries array");
  for (const auto& e : j["entries"]) {
    KeyEntry k;
    k.id = e.value("id", "");
    if (k.id.empty()) throw fail("entry without id");
    const auto kind = e.value("kind", "");
    k.rationale = e.value("rationale", "");
    if (k.rationale.empty()) throw fail("entry " + k.id + " has no rationale");
    if (e.contains("on_inconclusive")) k.on_inconclusive = parse_verdict(e["on_inconclusive"].get<std::string>());
    if (kind == "polarity") {
      k.kind = KeyKind::polarity;
      k.expect = stance::parse_polarity(e.value("expect", ""));
      if (k.expect == stance::Polarity::none) throw fail("entry " + k.id + " must expect yes or no");
    } else if (kind == "content") {
      k.kind = KeyKind::content;
      k.accept = e.value("accept", std::vector<std::string>{});
      k.reject = e.value("reject", std::vector<std::string>{});
      if (k.accept.empty()) throw fail("entry " + k.id + " has no accepted phrases");
    } else if (kind == "open") {
      k.kind = KeyKind::open;
    } else {
      throw fail("entry " + k.id + " has unknown kind '" + kind + "'");
    }
    if (!key.entries.emplace(k.id, k).second) throw fail("duplicate entry " + k.id);
  }
  return key;
}

inline AnswerKey load_key(const std::filesystem::path& path) { return parse_key(read_file(path), path.string()); }

struct GradeInput {
  std::string question_id;
  stance::AnswerLabel label;
  std::string response_text;
};

struct QuestionGrade {
  std::string question_id;
  Verdict verdict = Verdict::unanswered;
  std::string reason;
};

struct SuiteGrade {
  std::string suite;
  std::vector<QuestionGrade> questions;
  std::map<Verdict, std::size_t> tallies;

  std::size_t count(Verdict v) const {
    auto it = tallies.find(v);
    return it == tallies.end() ? 0 : it->second;
  }
};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '\''; }

// Case-insensitive phrase match on word boundaries.
inline bool contains_phrase(std::string_view text, std::string_view phrase) {
  const auto t = lower(text);
  const auto p = lower(phrase);
  if (p.empty()) return false;
  for (auto pos = t.find(p); pos != std::string::npos; pos = t.find(p, pos + 1)) {
    const bool left = pos == 0 || !word_char(t[pos - 1]);
    const bool right = pos + p.size() == t.size() || !word_char(t[pos + p.size()]);
    if (left && right) return true;
  }
  return false;
}

inline const std::string* first_hit(std::string_view text, const std::vector<std::string>& phrases) {
  for (const auto& p : phrases) {
    if (contains_phrase(text, p)) return &p;
  }
  return nullptr;
}

}  // namespace detail

// True when the text asserts both "X causes Y" and "X does not cause Y" for
// the same X and Y.
inline bool hedged_both_ways(std::string_view text) {
  static const std::regex kClaim(
      R"(\b([A-Za-z]\w*) (does not |doesn't |did not |may not |might not |cannot |can't |can |may |might |could |does )?(cause|causes|influence|influences|affect|affects) ([A-Za-z]\w*))",
      std::regex::ECMAScript);
  std::set<std::pair<std::string, std::string>> pos, neg;
  std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kClaim); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const auto modal = m[2].str();
    const bool negated = modal.find("not") != std::string::npos || modal.find("n't") != std::string::npos;
    (negated ? neg : pos).insert({detail::lower(m[1].str()), detail::lower(m[4].str())});
  }
  return std::any_of(pos.begin(), pos.end(), [&](const auto& p) { return neg.count(p) > 0; });
}

inline QuestionGrade grade_one(const GradeInput& in, const KeyEntry& key) {
  using stance::Degeneracy;
  using stance::Special;
  const auto& l = in.label;
  auto grade = [&](Verdict v, std::string reason) { return QuestionGrade{in.question_id, v, std::move(reason)}; };

  if (l.degeneracies.contains(Degeneracy::echo_of_prompt)) return grade(Verdict::unanswered, "echo of prompt");
  if (stance::normalize(in.response_text).sentences.empty()) return grade(Verdict::unanswered, "empty response");
  if (l.degeneracies.contains(Degeneracy::loop_detected) && l.polarity == stance::Polarity::none) {
    return grade(Verdict::unanswered, "loop without a verdict");
  }
  if (key.kind == KeyKind::open) return grade(Verdict::indecisive, "open question: " + key.rationale);
  if (l.special == Special::inconclusive) return grade(key.on_inconclusive, "inconclusive answer");
  if (hedged_both_ways(in.response_text)) return grade(Verdict::indecisive, "hedged both ways");

  if (key.kind == KeyKind::polarity) {
    if (l.polarity == stance::Polarity::none) return grade(Verdict::unanswered, "no yes/no verdict");
    if (l.polarity == key.expect) return grade(Verdict::correct, "answered " + std::string(stance::to_string(l.polarity)));
    return grade(Verdict::wrong, "answered " + std::string(stance::to_string(l.polarity)) + ", expected " +
                                     std::string(stance::to_string(key.expect)));
  }
  if (const auto* hit = detail::first_hit(in.response_text, key.reject)) return grade(Verdict::wrong, "rejected phrase: " + *hit);
  if (const auto* hit = detail::first_hit(in.response_text, key.accept)) return grade(Verdict::correct, "accepted phrase: " + *hit);
  return grade(Verdict::wrong, "no accepted phrase");
}

inline SuiteGrade grade_suite(const std::vector<GradeInput>& labeled, const AnswerKey& key) {
  SuiteGrade g;
  g.suite = key.suite;
  for (auto v : kAllVerdicts) g.tallies[v] = 0;
  for (const auto& in : labeled) {
    auto it = key.entries.find(in.question_id);
    if (it == key.entries.end()) throw ConfigError("question " + in.question_id + " is missing from the answer key");
    g.questions.push_back(grade_one(in, it->second));
    ++g.tallies[g.questions.back().verdict];
  }
  return g;
}

inline nlohmann::json to_json(const SuiteGrade& g) {
  auto questions = nlohmann::json::array();
  for (const auto& q : g.questions) {
    questions.push_back({{"id", q.question_id}, {"verdict", to_string(q.verdict)}, {"reason", q.reason}});
  }
  nlohmann::json tallies;
  for (auto v : kAllVerdicts) tallies[std::string(to_string(v))] = g.count(v);
  return {{"suite", g.suite}, {"questions", questions}, {"tallies", tallies}};
}

}  // namespace causalfm::eval
