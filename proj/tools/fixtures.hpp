#pragma once

// Synthetic replay stores for the three bundled model ids. Every response is
// a fixed function of (model, dataset, wording, ordered pair, perturbation),
// so regenerating the stores is byte-stable.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "causalfm/corpus.hpp"
#include "causalfm/query.hpp"

namespace fixtures {

using causalfm::corpus::BenchmarkDataset;
using causalfm::corpus::TranscriptRecord;

inline const std::vector<std::string> kModels = {"FM-G", "FM-L", "FM-O"};

// Perturbations covered by every store: one synonym, one contextual swap.
inline const std::vector<std::pair<std::string, std::map<std::string, std::string>>> kPerturbations = {
    {"H", {{"age", "aging"}}},
    {"H", {{"mobility", "fitness"}}},
};

struct Ask {
  const BenchmarkDataset& ds;
  std::string tmpl;
  std::string x, y;    // variable ids
  std::string px, py;  // phrases as rendered
  bool perturbed;      // x or y carries a perturbed phrase
  std::string prompt;
};

inline std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

inline bool comparable(const Ask& a) {
  return causalfm::corpus::is_ancestor(a.ds, a.x, a.y) || causalfm::corpus::is_ancestor(a.ds, a.y, a.x);
}

// Sparse and wording-dependent; often declines to commit.
inline TranscriptRecord fm_g(const Ask& a) {
  const bool adj = a.ds.adjacent(a.x, a.y);
  std::string r;
  if (a.tmpl == "causally-related") {
    r = adj ? "Yes, " + a.px + " and " + a.py + " are causally related."
            : "No, " + a.px + " and " + a.py + " are not causally related.";
  } else if (a.tmpl == "causal-connection") {
    r = adj ? "Yes, there is a causal connection between " + a.px + " and " + a.py + "."
            : "There is not enough information to answer this question.";
  } else if (a.tmpl == "causality-between") {
    r = adj ? "Yes, there is a causality between " + a.px + " and " + a.py + "."
        : comparable(a) ? "Yes, but only indirectly."
                        : "No, there is no causality between " + a.px + " and " + a.py + ".";
  } else if (a.tmpl == "does-cause") {
    r = a.ds.has_edge(a.x, a.y)   ? "Yes, " + a.px + " causes " + a.py + "."
        : a.ds.has_edge(a.y, a.x) ? "No, " + a.py + " causes " + a.px + "."
                                  : "It depends on the situation.";
  } else {
    r = causalfm::corpus::is_ancestor(a.ds, a.x, a.y) ? "It is possible that " + a.px + " influences " + a.py + "."
                                                      : "No, " + a.px + " does not influence " + a.py + ".";
  }
  return {a.prompt, "FM-G", r, false};
}

// Dense: affirms most pairs with an explanation; goes quiet on swapped-in
// phrases.
inline TranscriptRecord fm_l(const Ask& a) {
  const auto no = std::string("A: The answer is no.");
  auto yes = [&](const std::string& why) { return "A: The answer is yes.\n" + why; };
  std::string r;
  bool truncated = false;
  if (a.perturbed) {
    r = no;
  } else if (a.tmpl == "does-cause") {
    r = a.ds.adjacent(a.x, a.y) ? yes(capitalize(a.px) + " has an effect on " + a.py + ".")
        : comparable(a)          ? "A: Yes, but only indirectly."
                                 : no;
  } else if (a.tmpl == "does-influence") {
    r = yes(capitalize(a.px) + " can change " + a.py + " in many ways. For example");
    truncated = true;
  } else {
    r = yes(capitalize(a.px) + " and " + a.py + " are connected.");
  }
  return {a.prompt, "FM-L", r, truncated};
}

// Affirms every association; directional answers follow the ground truth,
// and a swapped-in phrase makes it affirm both directions.
inline TranscriptRecord fm_o(const Ask& a) {
  const auto& t = a.tmpl;
  std::string r;
  if (t == "causality-between" && a.ds.id == "A") {
    r = a.prompt;
  } else if (t == "causally-related" || t == "causal-connection" || t == "causality-between") {
    r = "Yes, " + a.px + " and " + a.py + " are related.";
  } else if (t == "does-cause") {
    r = a.perturbed || a.ds.has_edge(a.x, a.y) ? "Yes, " + a.px + " causes " + a.py + "."
                                               : "No, " + a.px + " does not cause " + a.py + ".";
  } else {
    r = causalfm::corpus::is_ancestor(a.ds, a.x, a.y) ? "Yes, " + a.px + " influences " + a.py + "."
                                                      : "No.";
  }
  return {a.prompt, "FM-O", r, false};
}

inline TranscriptRecord respond(const std::string& model, const Ask& a) {
  if (model == "FM-G") return fm_g(a);
  if (model == "FM-L") return fm_l(a);
  return fm_o(a);
}

// Pair prompts for every bundled dataset and perturbation, followed by the
// model's free-text suite answers from `appendix`.
inline std::vector<TranscriptRecord> build_store(const std::string& model, const std::filesystem::path& data_dir) {
  using namespace causalfm;
  std::vector<TranscriptRecord> out;
  const auto& templates = query::bundled_templates();
  for (const auto& ds : corpus::load_bundled_datasets(data_dir)) {
    std::vector<std::map<std::string, std::string>> variants = {{}};
    for (const auto& [id, p] : kPerturbations) {
      if (id == ds.id) variants.push_back(p);
    }
    for (const auto& v : variants) {
      query::RenderOptions opts;
      opts.perturbations = v;
      auto phrase = [&](const std::string& id) {
        auto it = v.find(id);
        return it != v.end() ? it->second : ds.find(id)->display_name;
      };
      for (const auto& p : query::render_all(ds, templates, opts)) {
        const auto& [x, y] = *p.pair;
        Ask a{ds, p.template_id, x, y, phrase(x), phrase(y), v.count(x) || v.count(y), p.text};
        out.push_back(respond(model, a));
      }
    }
  }
  for (const auto& r : corpus::load_transcripts(data_dir / "transcripts" / "appendix.jsonl").records) {
    if (r.model_id == model) out.push_back(r);
  }
  return out;
}

}  // namespace fixtures
