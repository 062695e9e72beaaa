#pragma once

// Edge-mark graphs built from classified answers, the cross-wording
// frequency graph, and their JSON/DOT forms.

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "causalfm/corpus.hpp"
#include "causalfm/error.hpp"
#include "causalfm/query.hpp"
#include "causalfm/stance.hpp"

namespace causalfm::graph {

using Pair = std::pair<std::string, std::string>;

// Mark on an unordered pair {a, b} stored with a < b: forward is a→b,
// backward is a←b.
enum class Mark { none, forward, backward, undirected, bidirected };

inline constexpr std::array<Mark, 5> kAllMarks = {Mark::none, Mark::forward, Mark::backward, Mark::undirected,
                                                  Mark::bidirected};

inline std::string_view to_string(Mark m) {
  switch (m) {
    case Mark::none: return "none";
    case Mark::forward: return "->";
    case Mark::backward: return "<-";
    case Mark::undirected: return "--";
    case Mark::bidirected: return "<->";
  }
  return "none";
}

inline Mark parse_mark(std::string_view s) {
  for (auto m : kAllMarks) {
    if (to_string(m) == s) return m;
  }
  throw Error("unknown edge mark '" + std::string(s) + "'");
}

inline Mark reversed(Mark m) {
  if (m == Mark::forward) return Mark::backward;
  if (m == Mark::backward) return Mark::forward;
  return m;
}

inline Pair ordered(const std::string& a, const std::string& b) { return a < b ? Pair{a, b} : Pair{b, a}; }

inline std::vector<Pair> unordered_pairs(const std::vector<std::string>& sorted_ids) {
  std::vector<Pair> out;
  for (std::size_t i = 0; i < sorted_ids.size(); ++i) {
    for (std::size_t j = i + 1; j < sorted_ids.size(); ++j) out.emplace_back(sorted_ids[i], sorted_ids[j]);
  }
  return out;
}

inline std::vector<Pair> ordered_pairs(const std::vector<std::string>& sorted_ids) {
  std::vector<Pair> out;
  for (const auto& a : sorted_ids) {
    for (const auto& b : sorted_ids) {
      if (a != b) out.emplace_back(a, b);
    }
  }
  return out;
}

struct PredictedGraph {
  std::string dataset_id;
  std::string template_id;
  query::Symmetry symmetry = query::Symmetry::asymmetric;
  std::vector<std::string> variables;  // sorted
  std::map<Pair, Mark> marks;          // every unordered pair, key.first < key.second
  std::set<Pair> abstentions;

  bool operator==(const PredictedGraph&) const = default;

  // Mark read in the direction (x, y).
  Mark mark(const std::string& x, const std::string& y) const {
    auto it = marks.find(ordered(x, y));
    if (it == marks.end()) throw std::out_of_range("no pair {" + x + ", " + y + "} in graph");
    return x < y ? it->second : reversed(it->second);
  }

  // True when the mark links x to y: x→y, x–y or x↔y.
  bool connects(const std::string& x, const std::string& y) const {
    auto m = mark(x, y);
    return m == Mark::forward || m == Mark::undirected || m == Mark::bidirected;
  }

  std::size_t connection_count() const {
    return static_cast<std::size_t>(
        std::count_if(marks.begin(), marks.end(), [](const auto& kv) { return kv.second != Mark::none; }));
  }
};

inline PredictedGraph empty_graph(const corpus::BenchmarkDataset& ds, std::string template_id,
                                  query::Symmetry symmetry = query::Symmetry::asymmetric) {
  PredictedGraph g;
  g.dataset_id = ds.id;
  g.template_id = std::move(template_id);
  g.symmetry = symmetry;
  g.variables = ds.sorted_ids();
  for (const auto& p : unordered_pairs(g.variables)) g.marks[p] = Mark::none;
  return g;
}

inline PredictedGraph truth_graph(const corpus::BenchmarkDataset& ds) {
  auto g = empty_graph(ds, "truth");
  for (const auto& e : ds.truth_edges) {
    auto& m = g.marks[ordered(e.cause, e.effect)];
    m = e.cause < e.effect ? Mark::forward : Mark::backward;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Belief policy

enum class Evidence { as_polarity, counts_as_yes, counts_as_no_edge, abstain };
enum class Vote { yes, no, abstain };

inline std::string_view to_string(Evidence e) {
  switch (e) {
    case Evidence::as_polarity: return "as_polarity";
    case Evidence::counts_as_yes: return "counts_as_yes";
    case Evidence::counts_as_no_edge: return "counts_as_no_edge";
    case Evidence::abstain: return "abstain";
  }
  return "abstain";
}

inline Evidence parse_evidence(std::string_view s) {
  for (auto e : {Evidence::as_polarity, Evidence::counts_as_yes, Evidence::counts_as_no_edge, Evidence::abstain}) {
    if (to_string(e) == s) return e;
  }
  throw ConfigError("unknown evidence action '" + std::string(s) + "'");
}

inline constexpr std::array<stance::Qualifier, 5> kAllQualifiers = {
    stance::Qualifier::plain, stance::Qualifier::probably, stance::Qualifier::indirectly,
    stance::Qualifier::other_factors, stance::Qualifier::through_explanation};

// How each qualifier turns into evidence, separately for symmetric and
// asymmetric wordings. Inconclusive and no-answer labels always abstain.
struct BeliefPolicy {
  std::map<stance::Qualifier, Evidence> symmetric;
  std::map<stance::Qualifier, Evidence> asymmetric;

  bool operator==(const BeliefPolicy&) const = default;

  static BeliefPolicy defaults() {
    using stance::Qualifier;
    BeliefPolicy p;
    for (auto q : kAllQualifiers) p.symmetric[q] = p.asymmetric[q] = Evidence::as_polarity;
    p.symmetric[Qualifier::indirectly] = Evidence::counts_as_yes;
    p.symmetric[Qualifier::other_factors] = Evidence::counts_as_yes;
    p.asymmetric[Qualifier::indirectly] = Evidence::abstain;
    p.asymmetric[Qualifier::other_factors] = Evidence::abstain;
    return p;
  }

  Evidence evidence(stance::Qualifier q, query::Symmetry s) const {
    const auto& table = s == query::Symmetry::symmetric ? symmetric : asymmetric;
    auto it = table.find(q);
    return it == table.end() ? Evidence::as_polarity : it->second;
  }

  Vote vote(const stance::AnswerLabel& label, query::Symmetry s) const {
    if (label.special != stance::Special::none || label.polarity == stance::Polarity::none) return Vote::abstain;
    switch (evidence(label.qualifier, s)) {
      case Evidence::as_polarity: return label.polarity == stance::Polarity::yes ? Vote::yes : Vote::no;
      case Evidence::counts_as_yes: return Vote::yes;
      case Evidence::counts_as_no_edge: return Vote::no;
      case Evidence::abstain: return Vote::abstain;
    }
    return Vote::abstain;
  }
};

inline void validate(const BeliefPolicy& p) {
  for (const auto* table : {&p.symmetric, &p.asymmetric}) {
    if (auto it = table->find(stance::Qualifier::plain); it != table->end() && it->second != Evidence::as_polarity) {
      throw ConfigError("policy: plain answers always count as their polarity");
    }
  }
}

inline nlohmann::json to_json(const BeliefPolicy& p) {
  nlohmann::json j;
  for (auto q : kAllQualifiers) {
    j["symmetric"][std::string(stance::to_string(q))] = to_string(p.evidence(q, query::Symmetry::symmetric));
    j["asymmetric"][std::string(stance::to_string(q))] = to_string(p.evidence(q, query::Symmetry::asymmetric));
  }
  return j;
}

// Overrides on top of the defaults: {"symmetric": {"probably": "abstain"}, ...}.
inline BeliefPolicy policy_from_json(const nlohmann::json& j) {
  auto p = BeliefPolicy::defaults();
  if (!j.is_object()) throw ConfigError("policy must be a JSON object");
  for (const auto& [side, table] : j.items()) {
    std::map<stance::Qualifier, Evidence>* target = nullptr;
    if (side == "symmetric") target = &p.symmetric;
    else if (side == "asymmetric") target = &p.asymmetric;
    else throw ConfigError("policy: unknown section '" + side + "'");
    for (const auto& [q, e] : table.items()) {
      try {
        (*target)[stance::parse_qualifier(q)] = parse_evidence(e.get<std::string>());
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& ex) {
        throw ConfigError(std::string("policy: ") + ex.what());
      }
    }
  }
  validate(p);
  return p;
}

// ---------------------------------------------------------------------------
// Building graphs

using LabeledAnswers = std::map<Pair, stance::AnswerLabel>;  // ordered (cause, effect) → label

inline void check_coverage(const corpus::BenchmarkDataset& ds, const LabeledAnswers& labeled) {
  const auto ids = ds.sorted_ids();
  for (const auto& p : ordered_pairs(ids)) {
    if (!labeled.count(p)) {
      throw std::invalid_argument("dataset " + ds.id + ": missing label for (" + p.first + ", " + p.second + ")");
    }
  }
  for (const auto& [p, l] : labeled) {
    if (!ds.find(p.first) || !ds.find(p.second) || p.first == p.second) {
      throw std::invalid_argument("dataset " + ds.id + ": label for unknown pair (" + p.first + ", " + p.second + ")");
    }
  }
}

// Symmetric wordings: a–b iff either ordering votes yes. Asymmetric: each
// ordering votes for its own direction; both give a↔b. Pairs where both
// orderings abstain are recorded as abstentions and never get an edge.
inline PredictedGraph build_graph(const corpus::BenchmarkDataset& ds, const query::QueryTemplate& tmpl,
                                  const LabeledAnswers& labeled, const BeliefPolicy& policy = BeliefPolicy::defaults()) {
  check_coverage(ds, labeled);
  auto g = empty_graph(ds, tmpl.id, tmpl.symmetry);
  for (auto& [p, mark] : g.marks) {
    const auto ab = policy.vote(labeled.at(p), tmpl.symmetry);
    const auto ba = policy.vote(labeled.at({p.second, p.first}), tmpl.symmetry);
    if (ab == Vote::abstain && ba == Vote::abstain) g.abstentions.insert(p);
    const bool fwd = ab == Vote::yes;
    const bool bwd = ba == Vote::yes;
    if (tmpl.symmetry == query::Symmetry::symmetric) {
      mark = fwd || bwd ? Mark::undirected : Mark::none;
    } else if (fwd && bwd) {
      mark = Mark::bidirected;
    } else if (fwd) {
      mark = Mark::forward;
    } else if (bwd) {
      mark = Mark::backward;
    }
  }
  return g;
}

// One directed graph from several asymmetric wordings: an ordering is
// positive when its yes votes outnumber its no votes.
inline PredictedGraph build_majority_graph(const corpus::BenchmarkDataset& ds,
                                           const std::vector<std::pair<query::QueryTemplate, LabeledAnswers>>& inputs,
                                           const BeliefPolicy& policy = BeliefPolicy::defaults()) {
  if (inputs.empty()) throw std::invalid_argument("majority graph needs at least one wording");
  for (const auto& [t, labeled] : inputs) {
    if (t.symmetry != query::Symmetry::asymmetric) {
      throw std::invalid_argument("majority graph takes asymmetric wordings only, got " + t.id);
    }
    check_coverage(ds, labeled);
  }
  auto positive = [&](const Pair& p, bool& all_abstain) {
    int yes = 0, no = 0;
    for (const auto& [t, labeled] : inputs) {
      auto v = policy.vote(labeled.at(p), t.symmetry);
      if (v == Vote::yes) ++yes;
      if (v == Vote::no) ++no;
    }
    all_abstain = all_abstain && yes == 0 && no == 0;
    return yes > no;
  };
  auto g = empty_graph(ds, "majority");
  for (auto& [p, mark] : g.marks) {
    bool all_abstain = true;
    const bool fwd = positive(p, all_abstain);
    const bool bwd = positive({p.second, p.first}, all_abstain);
    if (all_abstain) g.abstentions.insert(p);
    mark = fwd && bwd ? Mark::bidirected : fwd ? Mark::forward : bwd ? Mark::backward : Mark::none;
  }
  return g;
}

struct FrequencyGraph {
  std::string dataset_id;
  std::vector<std::string> variables;
  std::vector<std::string> template_ids;
  std::size_t graph_count = 0;
  std::map<Pair, double> weight;  // every ordered pair

  bool operator==(const FrequencyGraph&) const = default;
};

// weight(x→y) = share of graphs whose mark connects x to y.
inline FrequencyGraph build_frequency(const std::vector<PredictedGraph>& graphs) {
  if (graphs.empty()) throw std::invalid_argument("frequency graph needs at least one graph");
  FrequencyGraph f;
  f.dataset_id = graphs.front().dataset_id;
  f.variables = graphs.front().variables;
  f.graph_count = graphs.size();
  for (const auto& g : graphs) {
    if (g.dataset_id != f.dataset_id || g.variables != f.variables) {
      throw std::invalid_argument("frequency graph over mixed datasets: " + f.dataset_id + " and " + g.dataset_id);
    }
    f.template_ids.push_back(g.template_id);
  }
  std::sort(f.template_ids.begin(), f.template_ids.end());
  for (const auto& [x, y] : ordered_pairs(f.variables)) {
    std::size_t n = 0;
    for (const auto& g : graphs) n += g.connects(x, y) ? 1 : 0;
    f.weight[{x, y}] = static_cast<double>(n) / static_cast<double>(graphs.size());
  }
  return f;
}

// ---------------------------------------------------------------------------
// JSON

inline constexpr std::string_view kGraphSchema = "causalfm.graph/1";
inline constexpr std::string_view kFrequencySchema = "causalfm.frequency/1";

inline nlohmann::json to_json(const PredictedGraph& g) {
  auto marks = nlohmann::json::array();
  for (const auto& [p, m] : g.marks) marks.push_back({{"pair", {p.first, p.second}}, {"mark", to_string(m)}});
  auto abst = nlohmann::json::array();
  for (const auto& p : g.abstentions) abst.push_back({p.first, p.second});
  return {{"schema", kGraphSchema},  {"dataset_id", g.dataset_id}, {"template_id", g.template_id},
          {"symmetry", query::to_string(g.symmetry)}, {"variables", g.variables}, {"marks", marks},
          {"abstentions", abst},      {"connections", g.connection_count()}};
}

inline PredictedGraph graph_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema") != kGraphSchema) throw Error("unsupported graph schema " + j.at("schema").dump());
    PredictedGraph g;
    g.dataset_id = j.at("dataset_id").get<std::string>();
    g.template_id = j.at("template_id").get<std::string>();
    const auto sym = j.at("symmetry").get<std::string>();
    if (sym != "symmetric" && sym != "asymmetric") throw Error("unknown graph symmetry '" + sym + "'");
    g.symmetry = sym == "symmetric" ? query::Symmetry::symmetric : query::Symmetry::asymmetric;
    g.variables = j.at("variables").get<std::vector<std::string>>();
    if (!std::is_sorted(g.variables.begin(), g.variables.end())) throw Error("graph variables are not sorted");
    for (const auto& p : unordered_pairs(g.variables)) g.marks[p] = Mark::none;
    for (const auto& e : j.at("marks")) {
      Pair p{e.at("pair").at(0).get<std::string>(), e.at("pair").at(1).get<std::string>()};
      if (!g.marks.count(p)) throw Error("graph mark for unknown pair (" + p.first + ", " + p.second + ")");
      g.marks[p] = parse_mark(e.at("mark").get<std::string>());
    }
    for (const auto& a : j.at("abstentions")) {
      Pair p{a.at(0).get<std::string>(), a.at(1).get<std::string>()};
      if (!g.marks.count(p) || g.marks[p] != Mark::none) throw Error("invalid abstention (" + p.first + ", " + p.second + ")");
      g.abstentions.insert(p);
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed graph JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const FrequencyGraph& f) {
  auto weights = nlohmann::json::array();
  for (const auto& [p, w] : f.weight) weights.push_back({{"from", p.first}, {"to", p.second}, {"weight", w}});
  return {{"schema", kFrequencySchema}, {"dataset_id", f.dataset_id}, {"variables", f.variables},
          {"templates", f.template_ids}, {"graphs", f.graph_count},    {"weights", weights}};
}

// ---------------------------------------------------------------------------
// DOT

inline std::string dot_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

namespace detail {

inline std::string display(const corpus::BenchmarkDataset* ds, const std::string& id) {
  if (ds) {
    if (const auto* v = ds->find(id)) return v->display_name;
  }
  return id;
}

inline std::string edge_attrs(Mark m) {
  switch (m) {
    case Mark::undirected: return " [dir=none]";
    case Mark::bidirected: return " [dir=both]";
    default: return "";
  }
}

inline void write_graph_body(std::string& out, const PredictedGraph& g, const corpus::BenchmarkDataset* ds,
                             const std::string& prefix, const std::string& indent) {
  for (const auto& v : g.variables) {
    out += indent + dot_quote(prefix + v) + " [label=" + dot_quote(display(ds, v)) + "];\n";
  }
  for (const auto& [p, m] : g.marks) {
    if (m == Mark::none) continue;
    const auto& [a, b] = p;
    const bool flip = m == Mark::backward;
    const auto& from = flip ? b : a;
    const auto& to = flip ? a : b;
    out += indent + dot_quote(prefix + from) + " -> " + dot_quote(prefix + to) + edge_attrs(m) + ";\n";
  }
}

}  // namespace detail

inline std::string to_dot(const PredictedGraph& g, const corpus::BenchmarkDataset* ds = nullptr) {
  std::string out = "digraph " + dot_quote(g.dataset_id + "/" + g.template_id) + " {\n";
  out += "  label=" + dot_quote(g.dataset_id + " / " + g.template_id) + ";\n";
  detail::write_graph_body(out, g, ds, "", "  ");
  return out + "}\n";
}

// Several graphs side by side, one cluster per wording.
inline std::string to_dot_sheet(const std::vector<PredictedGraph>& graphs, const std::string& title,
                                const corpus::BenchmarkDataset* ds = nullptr,
                                const std::vector<std::string>& labels = {}) {
  std::string out = "digraph " + dot_quote(title) + " {\n";
  out += "  label=" + dot_quote(title) + ";\n";
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto& g = graphs[i];
    out += "  subgraph " + dot_quote("cluster_" + std::to_string(i)) + " {\n";
    const auto label = i < labels.size() ? labels[i] : g.dataset_id + " / " + g.template_id;
    out += "    label=" + dot_quote(label) + ";\n";
    detail::write_graph_body(out, g, ds, std::to_string(i) + ":", "    ");
    out += "  }\n";
  }
  return out + "}\n";
}

// Edge opacity and width grow with the share of wordings that predicted
// the connection.
inline std::string to_dot(const FrequencyGraph& f, const corpus::BenchmarkDataset* ds = nullptr) {
  std::string out = "digraph " + dot_quote(f.dataset_id + "/frequency") + " {\n";
  out += "  label=" + dot_quote(f.dataset_id + " / frequency over " + std::to_string(f.graph_count) + " wordings") + ";\n";
  for (const auto& v : f.variables) out += "  " + dot_quote(v) + " [label=" + dot_quote(detail::display(ds, v)) + "];\n";
  for (const auto& [p, w] : f.weight) {
    if (w <= 0.0) continue;
    char attrs[160];
    std::snprintf(attrs, sizeof attrs, " [color=\"#000000%02X\", penwidth=%.2f, label=\"%.2f\"]",
                  static_cast<unsigned>(w * 255.0 + 0.5), 1.0 + 2.0 * w, w);
    out += "  " + dot_quote(p.first) + " -> " + dot_quote(p.second) + attrs + ";\n";
  }
  return out + "}\n";
}

}  // namespace causalfm::graph
