#pragma once

// Benchmark datasets (variables + ground-truth DAG) and transcript fixtures.
//
// Dataset definition format, one entry per line:
//
//   # free comment (kept as a note; notes are written back at the top)
//   dataset <id>
//   name <rest of line>
//   citation <rest of line>
//   provenance published|citation|repository
//   variable <var-id> "<display name>"
//   alternate <var-id> synonym|contextual "<phrase>"
//   edge <cause-id> <effect-id>
//
// Strings use C-style escapes for `"` and `\`. Documents written by
// format_dataset() load back to the same bytes.
//
// Transcript format: JSON Lines, one object per record with the keys
// model_id, prompt_text, response_text, truncated.

#include <algorithm>
#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "causalfm/digest.hpp"
#include "causalfm/error.hpp"
#include "causalfm/io.hpp"

namespace causalfm::corpus {

enum class PerturbationKind { synonym, contextual };

inline std::string_view to_string(PerturbationKind k) {
  return k == PerturbationKind::synonym ? "synonym" : "contextual";
}

struct Alternate {
  PerturbationKind kind = PerturbationKind::synonym;
  std::string phrase;
  bool operator==(const Alternate&) const = default;
};

struct Variable {
  std::string id;
  std::string display_name;
  std::vector<Alternate> alternates;
  bool operator==(const Variable&) const = default;
};

struct Edge {
  std::string cause;
  std::string effect;
  auto operator<=>(const Edge&) const = default;
};

inline constexpr std::array<std::string_view, 6> kBundledIds = {"A", "H", "R", "D", "C", "E"};

struct BenchmarkDataset {
  std::string id;
  std::string name;
  std::string citation;
  std::string provenance;
  std::vector<std::string> notes;
  std::vector<Variable> variables;
  std::vector<Edge> truth_edges;

  bool operator==(const BenchmarkDataset&) const = default;

  std::optional<std::size_t> index_of(std::string_view var_id) const {
    for (std::size_t i = 0; i < variables.size(); ++i) {
      if (variables[i].id == var_id) return i;
    }
    return std::nullopt;
  }

  const Variable* find(std::string_view var_id) const {
    auto i = index_of(var_id);
    return i ? &variables[*i] : nullptr;
  }

  bool has_edge(std::string_view cause, std::string_view effect) const {
    return std::any_of(truth_edges.begin(), truth_edges.end(),
                       [&](const Edge& e) { return e.cause == cause && e.effect == effect; });
  }

  bool adjacent(std::string_view a, std::string_view b) const {
    return has_edge(a, b) || has_edge(b, a);
  }

  // Variable ids in lexicographic order; this is the pair order used
  // everywhere downstream.
  std::vector<std::string> sorted_ids() const {
    std::vector<std::string> ids;
    for (const auto& v : variables) ids.push_back(v.id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }
};

namespace detail {

inline bool is_ident(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-';
  });
}

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// Line tokenizer: bare words separated by single spaces, or quoted strings.
class LineReader {
 public:
  LineReader(std::string_view line, const std::string& source, std::size_t lineno)
      : line_(line), source_(source), lineno_(lineno) {}

  std::string word() {
    skip_space();
    auto start = pos_;
    while (pos_ < line_.size() && line_[pos_] != ' ') ++pos_;
    if (start == pos_) fail("expected a word");
    return std::string(line_.substr(start, pos_ - start));
  }

  std::string quoted() {
    skip_space();
    if (pos_ >= line_.size() || line_[pos_] != '"') fail("expected a quoted string");
    ++pos_;
    std::string out;
    while (true) {
      if (pos_ >= line_.size()) fail("unterminated string");
      char c = line_[pos_++];
      if (c == '"') break;
      if (c == '\\') {
        if (pos_ >= line_.size()) fail("dangling escape");
        c = line_[pos_++];
        if (c != '"' && c != '\\') fail("unknown escape");
      }
      out.push_back(c);
    }
    return out;
  }

  std::string rest() {
    skip_space();
    auto out = std::string(line_.substr(pos_));
    pos_ = line_.size();
    if (out.empty()) fail("expected a value");
    return out;
  }

  void end() {
    skip_space();
    if (pos_ != line_.size()) fail("unexpected trailing text");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(ParseError::Kind::syntax, source_, lineno_, msg);
  }

 private:
  void skip_space() {
    while (pos_ < line_.size() && line_[pos_] == ' ') ++pos_;
  }

  std::string_view line_;
  const std::string& source_;
  std::size_t lineno_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Returns the variable ids of one directed cycle (first id repeated at the
// end), or an empty vector when the edges form a DAG.
inline std::vector<std::string> find_cycle(const BenchmarkDataset& ds) {
  const auto n = ds.variables.size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& e : ds.truth_edges) {
    auto a = ds.index_of(e.cause);
    auto b = ds.index_of(e.effect);
    if (a && b) adj[*a].push_back(*b);
  }
  // 0 = unvisited, 1 = on stack, 2 = done
  std::vector<int> state(n, 0);
  std::vector<std::size_t> stack;
  std::vector<std::string> cycle;
  auto dfs = [&](auto& self, std::size_t u) -> bool {
    state[u] = 1;
    stack.push_back(u);
    for (auto v : adj[u]) {
      if (state[v] == 1) {
        auto it = std::find(stack.begin(), stack.end(), v);
        for (; it != stack.end(); ++it) cycle.push_back(ds.variables[*it].id);
        cycle.push_back(ds.variables[v].id);
        return true;
      }
      if (state[v] == 0 && self(self, v)) return true;
    }
    stack.pop_back();
    state[u] = 2;
    return false;
  };
  for (std::size_t u = 0; u < n; ++u) {
    if (state[u] == 0 && dfs(dfs, u)) return cycle;
  }
  return {};
}

// Kahn's algorithm; ties broken by declaration order. Throws on a cycle.
inline std::vector<std::string> topological_order(const BenchmarkDataset& ds) {
  const auto n = ds.variables.size();
  std::vector<std::size_t> indegree(n, 0);
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& e : ds.truth_edges) {
    auto a = ds.index_of(e.cause);
    auto b = ds.index_of(e.effect);
    if (!a || !b) throw Error("edge references unknown variable");
    adj[*a].push_back(*b);
    ++indegree[*b];
  }
  std::vector<std::string> order;
  std::vector<bool> done(n, false);
  while (order.size() < n) {
    bool progressed = false;
    for (std::size_t u = 0; u < n; ++u) {
      if (done[u] || indegree[u] != 0) continue;
      done[u] = true;
      order.push_back(ds.variables[u].id);
      for (auto v : adj[u]) --indegree[v];
      progressed = true;
      break;
    }
    if (!progressed) throw Error("dataset " + ds.id + " has a directed cycle");
  }
  return order;
}

// True when a directed path cause -> ... -> effect exists in the truth graph.
inline bool is_ancestor(const BenchmarkDataset& ds, std::string_view cause, std::string_view effect) {
  std::vector<std::string_view> frontier{cause};
  std::set<std::string_view> seen{cause};
  while (!frontier.empty()) {
    auto u = frontier.back();
    frontier.pop_back();
    for (const auto& e : ds.truth_edges) {
      if (e.cause != u) continue;
      if (e.effect == effect) return true;
      if (seen.insert(e.effect).second) frontier.push_back(e.effect);
    }
  }
  return false;
}

inline BenchmarkDataset parse_dataset(std::string_view text, const std::string& source = "<memory>") {
  using Kind = ParseError::Kind;
  BenchmarkDataset ds;
  std::map<std::string, std::size_t> var_line;
  std::vector<std::size_t> edge_lines;
  struct PendingAlt {
    std::string var;
    Alternate alt;
    std::size_t line;
  };
  std::vector<PendingAlt> alts;
  bool have_id = false;

  auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    std::string_view line = lines[i];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      line.remove_prefix(1);
      if (!line.empty() && line.front() == ' ') line.remove_prefix(1);
      ds.notes.emplace_back(line);
      continue;
    }
    detail::LineReader r(line, source, lineno);
    const auto key = r.word();
    if (key == "dataset") {
      if (have_id) r.fail("duplicate 'dataset' entry");
      ds.id = r.word();
      if (!detail::is_ident(ds.id)) r.fail("invalid dataset id '" + ds.id + "'");
      r.end();
      have_id = true;
    } else if (key == "name") {
      ds.name = r.rest();
    } else if (key == "citation") {
      ds.citation = r.rest();
    } else if (key == "provenance") {
      ds.provenance = r.word();
      r.end();
      if (ds.provenance != "published" && ds.provenance != "citation" && ds.provenance != "repository") {
        throw ParseError(Kind::invalid_value, source, lineno, "unknown provenance '" + ds.provenance + "'");
      }
    } else if (key == "variable") {
      Variable v;
      v.id = r.word();
      v.display_name = r.quoted();
      r.end();
      if (!detail::is_ident(v.id)) r.fail("invalid variable id '" + v.id + "'");
      if (v.display_name.empty()) {
        throw ParseError(Kind::invalid_value, source, lineno, "empty display name for '" + v.id + "'");
      }
      if (auto [it, inserted] = var_line.emplace(v.id, lineno); !inserted) {
        throw ParseError(Kind::duplicate_variable, source, lineno,
                         "duplicate variable '" + v.id + "' (first declared on line " +
                             std::to_string(it->second) + ")");
      }
      ds.variables.push_back(std::move(v));
    } else if (key == "alternate") {
      PendingAlt p;
      p.var = r.word();
      const auto kind = r.word();
      if (kind == "synonym") {
        p.alt.kind = PerturbationKind::synonym;
      } else if (kind == "contextual") {
        p.alt.kind = PerturbationKind::contextual;
      } else {
        throw ParseError(Kind::invalid_value, source, lineno, "unknown perturbation kind '" + kind + "'");
      }
      p.alt.phrase = r.quoted();
      r.end();
      p.line = lineno;
      alts.push_back(std::move(p));
    } else if (key == "edge") {
      Edge e;
      e.cause = r.word();
      e.effect = r.word();
      r.end();
      ds.truth_edges.push_back(std::move(e));
      edge_lines.push_back(lineno);
    } else {
      r.fail("unknown entry '" + key + "'");
    }
  }

  if (!have_id) throw ParseError(Kind::syntax, source, 0, "missing 'dataset' entry");

  for (auto& p : alts) {
    auto idx = ds.index_of(p.var);
    if (!idx) {
      throw ParseError(Kind::unknown_variable, source, p.line, "alternate for unknown variable '" + p.var + "'");
    }
    auto& var = ds.variables[*idx];
    if (p.alt.phrase.empty() || p.alt.phrase == var.display_name) {
      throw ParseError(Kind::invalid_value, source, p.line,
                       "alternate phrase must be non-empty and differ from the display name");
    }
    var.alternates.push_back(std::move(p.alt));
  }

  std::set<Edge> seen_edges;
  for (std::size_t i = 0; i < ds.truth_edges.size(); ++i) {
    const auto& e = ds.truth_edges[i];
    for (const auto* end : {&e.cause, &e.effect}) {
      if (!ds.index_of(*end)) {
        throw ParseError(Kind::unknown_variable, source, edge_lines[i], "edge references unknown variable '" + *end + "'");
      }
    }
    if (e.cause == e.effect) {
      throw ParseError(Kind::self_loop, source, edge_lines[i], "self-loop on '" + e.cause + "'");
    }
    if (!seen_edges.insert(e).second) {
      throw ParseError(Kind::invalid_value, source, edge_lines[i], "duplicate edge " + e.cause + " -> " + e.effect);
    }
  }

  if (auto cycle = find_cycle(ds); !cycle.empty()) {
    std::string path;
    for (std::size_t i = 0; i < cycle.size(); ++i) path += (i ? " -> " : "") + cycle[i];
    // report the line of the edge that closes the cycle
    std::size_t line = 0;
    for (std::size_t i = 0; i < ds.truth_edges.size(); ++i) {
      const auto& e = ds.truth_edges[i];
      if (e.cause == cycle[cycle.size() - 2] && e.effect == cycle.back()) line = edge_lines[i];
    }
    throw ParseError(Kind::cycle, source, line, "cycle detected: " + path);
  }
  return ds;
}

inline std::string format_dataset(const BenchmarkDataset& ds) {
  std::string out;
  for (const auto& n : ds.notes) out += n.empty() ? "#\n" : "# " + n + "\n";
  out += "dataset " + ds.id + "\n";
  if (!ds.name.empty()) out += "name " + ds.name + "\n";
  if (!ds.citation.empty()) out += "citation " + ds.citation + "\n";
  if (!ds.provenance.empty()) out += "provenance " + ds.provenance + "\n";
  for (const auto& v : ds.variables) {
    out += "variable " + v.id + " " + detail::quote(v.display_name) + "\n";
    for (const auto& a : v.alternates) {
      out += "alternate " + v.id + " " + std::string(to_string(a.kind)) + " " + detail::quote(a.phrase) + "\n";
    }
  }
  for (const auto& e : ds.truth_edges) out += "edge " + e.cause + " " + e.effect + "\n";
  return out;
}

inline BenchmarkDataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path), path.string());
}

inline void save_dataset(const std::filesystem::path& path, const BenchmarkDataset& ds) {
  write_file(path, format_dataset(ds));
}

inline std::string dataset_digest(const BenchmarkDataset& ds) { return sha256_hex(format_dataset(ds)); }

inline std::size_t expected_prompt_count(const BenchmarkDataset& dataset, std::size_t n_templates) {
  const auto n = dataset.variables.size();
  return n < 2 ? 0 : n * (n - 1) * n_templates;
}

inline BenchmarkDataset load_bundled_dataset(const std::filesystem::path& data_dir, std::string_view id) {
  const auto path = data_dir / "datasets" / (std::string(id) + ".dataset");
  if (!std::filesystem::exists(path)) throw ConfigError("unknown dataset id '" + std::string(id) + "'");
  auto ds = load_dataset(path);
  if (ds.id != id) throw ConfigError(path.string() + " declares dataset '" + ds.id + "'");
  return ds;
}

inline std::vector<BenchmarkDataset> load_bundled_datasets(const std::filesystem::path& data_dir) {
  std::vector<BenchmarkDataset> out;
  for (auto id : kBundledIds) out.push_back(load_bundled_dataset(data_dir, id));
  return out;
}

// ---------------------------------------------------------------------------
// Transcripts

struct TranscriptRecord {
  std::string prompt_text;
  std::string model_id;
  std::string response_text;
  bool truncated = false;
  bool operator==(const TranscriptRecord&) const = default;
};

enum class TranscriptWarningCode { duplicate_prompt };

struct TranscriptWarning {
  TranscriptWarningCode code;
  std::size_t line;
  std::string message;
};

struct TranscriptSet {
  std::vector<TranscriptRecord> records;
  std::vector<TranscriptWarning> warnings;
};

inline nlohmann::json to_json(const TranscriptRecord& r) {
  return nlohmann::json{{"model_id", r.model_id},
                        {"prompt_text", r.prompt_text},
                        {"response_text", r.response_text},
                        {"truncated", r.truncated}};
}

// Strict: exactly the four keys, with the right types.
inline TranscriptRecord transcript_from_json(const nlohmann::json& j, const std::string& source, std::size_t line) {
  using Kind = ParseError::Kind;
  if (!j.is_object()) throw ParseError(Kind::syntax, source, line, "record is not a JSON object");
  static constexpr std::array<std::string_view, 4> kKeys = {"model_id", "prompt_text", "response_text", "truncated"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), k) == kKeys.end()) {
      throw ParseError(Kind::syntax, source, line, "unexpected key '" + k + "'");
    }
  }
  TranscriptRecord r;
  auto str = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw ParseError(Kind::syntax, source, line, std::string("missing or non-string '") + key + "'");
    }
    return it->get<std::string>();
  };
  r.model_id = str("model_id");
  r.prompt_text = str("prompt_text");
  r.response_text = str("response_text");
  auto t = j.find("truncated");
  if (t == j.end() || !t->is_boolean()) throw ParseError(Kind::syntax, source, line, "missing or non-boolean 'truncated'");
  r.truncated = t->get<bool>();
  return r;
}

inline TranscriptSet parse_transcripts(std::string_view text, const std::string& source = "<memory>") {
  TranscriptSet out;
  std::map<std::pair<std::string, std::string>, std::size_t> first_seen;
  auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto lineno = i + 1;
    if (lines[i].empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(ParseError::Kind::syntax, source, lineno, std::string("malformed record: ") + e.what());
    }
    auto rec = transcript_from_json(j, source, lineno);
    auto key = std::make_pair(rec.model_id, rec.prompt_text);
    if (auto [it, inserted] = first_seen.emplace(key, lineno); !inserted) {
      out.warnings.push_back({TranscriptWarningCode::duplicate_prompt, lineno,
                              "duplicate (prompt_text, model_id), first seen on line " + std::to_string(it->second)});
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

inline std::string format_transcript(const TranscriptRecord& r) { return to_json(r).dump(); }

inline std::string format_transcripts(const std::vector<TranscriptRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += format_transcript(r);
    out += '\n';
  }
  return out;
}

inline TranscriptSet load_transcripts(const std::filesystem::path& path) {
  return parse_transcripts(read_file(path), path.string());
}

inline void save_transcripts(const std::filesystem::path& path, const std::vector<TranscriptRecord>& records) {
  write_file(path, format_transcripts(records));
}

}  // namespace causalfm::corpus
