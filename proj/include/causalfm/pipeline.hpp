#pragma once

// End-to-end runs: render prompts, dispatch them, classify, build graphs,
// evaluate, and lay the artifacts out in one directory per run.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalfm/corpus.hpp"
#include "causalfm/evaluator.hpp"
#include "causalfm/gateway.hpp"
#include "causalfm/graph.hpp"
#include "causalfm/io.hpp"
#include "causalfm/query.hpp"
#include "causalfm/stance.hpp"

namespace causalfm::pipeline {

namespace fs = std::filesystem;

// One variable of one dataset rendered with a different phrase.
struct Perturbation {
  std::string dataset_id;
  std::string var_id;
  std::string phrase;

  std::string tag() const { return var_id + "=" + phrase; }
  bool operator==(const Perturbation&) const = default;
};

// Accepts "H:mobility=fitness" (literal phrase) or "H:mobility@contextual"
// (the dataset's alternate of that kind).
inline Perturbation parse_perturbation(const std::string& spec, const fs::path& data_dir) {
  auto colon = spec.find(':');
  if (colon == std::string::npos || colon == 0) throw ConfigError("perturbation '" + spec + "': expected DATASET:VAR=PHRASE");
  Perturbation p;
  p.dataset_id = spec.substr(0, colon);
  auto rest = spec.substr(colon + 1);
  const auto ds = corpus::load_bundled_dataset(data_dir, p.dataset_id);
  if (auto eq = rest.find('='); eq != std::string::npos) {
    p.var_id = rest.substr(0, eq);
    p.phrase = rest.substr(eq + 1);
  } else if (auto at = rest.find('@'); at != std::string::npos) {
    p.var_id = rest.substr(0, at);
    const auto kind = rest.substr(at + 1);
    const auto* v = ds.find(p.var_id);
    if (!v) throw ConfigError("perturbation '" + spec + "': unknown variable '" + p.var_id + "'");
    for (const auto& a : v->alternates) {
      if (corpus::to_string(a.kind) == kind) {
        p.phrase = a.phrase;
        break;
      }
    }
    if (p.phrase.empty()) throw ConfigError("perturbation '" + spec + "': no " + kind + " alternate for " + p.var_id);
  } else {
    throw ConfigError("perturbation '" + spec + "': expected VAR=PHRASE or VAR@synonym|contextual");
  }
  if (!ds.find(p.var_id)) throw ConfigError("perturbation '" + spec + "': unknown variable '" + p.var_id + "'");
  if (p.phrase.empty()) throw ConfigError("perturbation '" + spec + "': empty phrase");
  return p;
}

struct RunConfig {
  std::vector<std::string> dataset_ids;   // empty = all bundled
  std::vector<std::string> template_ids;  // empty = all five
  gateway::BackendConfig backend;
  graph::BeliefPolicy policy = graph::BeliefPolicy::defaults();
  std::vector<Perturbation> perturbations;
  std::string suffix;
  bool majority = false;
  fs::path out_dir = "out";
  std::string run_id;  // empty = model name
  std::size_t parallelism = 1;
  fs::path cache_path;  // http only; empty = <out_dir>/cache.jsonl
  fs::path data_dir = default_data_dir();
  std::vector<std::string> suites = {"ar", "ip"};  // commonsense only
};

inline std::string effective_run_id(const RunConfig& cfg) {
  auto id = cfg.run_id.empty() ? cfg.backend.model : cfg.run_id;
  if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "." || id == "..") {
    throw ConfigError("invalid run id '" + id + "'");
  }
  return id;
}

inline nlohmann::json describe(const RunConfig& cfg) {
  auto perts = nlohmann::json::array();
  for (const auto& p : cfg.perturbations) perts.push_back({{"dataset", p.dataset_id}, {"var", p.var_id}, {"phrase", p.phrase}});
  return {{"datasets", cfg.dataset_ids},
          {"templates", cfg.template_ids},
          {"backend", {{"kind", gateway::to_string(cfg.backend.kind)},
                       {"model", cfg.backend.model},
                       {"decoding", gateway::to_json(cfg.backend.decoding)},
                       {"config_digest", gateway::config_digest(cfg.backend)}}},
          {"policy", graph::to_json(cfg.policy)},
          {"perturbations", perts},
          {"suffix", cfg.suffix},
          {"majority", cfg.majority}};
}

struct Failure {
  std::string prompt_id;
  std::string code;
  std::string message;
};

struct RunOutcome {
  fs::path run_dir;
  std::vector<Failure> failures;
  bool ok() const { return failures.empty(); }
};

namespace detail {

inline std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '=' || c == '.' || c == '@';
    out += keep ? c : '_';
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

inline std::optional<double> mean(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

// Refuses to reuse a run id for a different configuration.
inline void claim_run_dir(const fs::path& run_dir, const std::string& config_digest) {
  const auto manifest = run_dir / "manifest.json";
  if (!fs::exists(manifest)) return;
  auto j = nlohmann::json::parse(read_file(manifest), nullptr, false);
  if (j.is_discarded() || j.value("run_config_digest", "") != config_digest) {
    throw ConfigError("run directory " + run_dir.string() + " already holds a run with a different configuration");
  }
}

inline gateway::Gateway make_gateway(const RunConfig& cfg) {
  auto cache = cfg.cache_path.empty() ? cfg.out_dir / "cache.jsonl" : cfg.cache_path;
  return gateway::Gateway::from_config(cfg.backend, cache);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// discover

struct GraphSet {
  std::optional<Perturbation> perturbation;
  std::vector<graph::PredictedGraph> graphs;  // template order
  bool complete = true;
};

inline nlohmann::json graph_row(const graph::PredictedGraph& g, const corpus::BenchmarkDataset& ds) {
  const auto c = eval::confusion(g, ds);
  nlohmann::json row{{"template_id", g.template_id},
                     {"symmetry", query::to_string(g.symmetry)},
                     {"connections", g.connection_count()},
                     {"abstentions", g.abstentions.size()},
                     {"existence", eval::to_json(c.existence)},
                     {"existence_fpr", eval::optional_number(eval::fpr(c.existence))},
                     {"orientation", c.orientation ? eval::to_json(*c.orientation) : nlohmann::json()},
                     {"orientation_fpr", c.orientation ? eval::optional_number(eval::fpr(*c.orientation)) : nlohmann::json()},
                     {"density_ratio", eval::optional_number(eval::density_ratio(g, ds))},
                     {"shd_to_truth", eval::shd(g, graph::truth_graph(ds))}};
  return row;
}

inline const std::vector<std::string> kSummaryColumns = {
    "run_id",         "model",           "dataset",          "dataset_digest",       "graphs",
    "true_edges",     "mean_connections", "mean_existence_fpr", "mean_orientation_fpr", "max_shd",
    "mean_shd",       "perturbation_delta"};

inline RunOutcome discover(const RunConfig& cfg) {
  const auto run_id = effective_run_id(cfg);
  const auto templates = query::select_templates(cfg.template_ids);
  std::vector<corpus::BenchmarkDataset> datasets;
  if (cfg.dataset_ids.empty()) {
    datasets = corpus::load_bundled_datasets(cfg.data_dir);
  } else {
    for (const auto& id : cfg.dataset_ids) datasets.push_back(corpus::load_bundled_dataset(cfg.data_dir, id));
  }
  for (const auto& p : cfg.perturbations) {
    if (std::none_of(datasets.begin(), datasets.end(), [&](auto& d) { return d.id == p.dataset_id; })) {
      throw ConfigError("perturbation for dataset " + p.dataset_id + ", which is not part of this run");
    }
  }
  graph::validate(cfg.policy);
  const auto lexicon = stance::Lexicon::load_bundled(cfg.data_dir);

  const auto run_dir = cfg.out_dir / run_id;
  const auto run_digest = sha256_hex(describe(cfg).dump());
  detail::claim_run_dir(run_dir, run_digest);

  // Prompt groups: (dataset, perturbation or none) in a fixed order.
  struct Group {
    std::size_t dataset;
    std::optional<Perturbation> perturbation;
    std::size_t begin, end;
  };
  std::vector<query::Prompt> prompts;
  std::vector<Group> groups;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    std::vector<std::optional<Perturbation>> variants = {std::nullopt};
    for (const auto& p : cfg.perturbations) {
      if (p.dataset_id == datasets[d].id) variants.push_back(p);
    }
    for (const auto& v : variants) {
      query::RenderOptions opts;
      opts.suffix = cfg.suffix;
      if (v) opts.perturbations[v->var_id] = v->phrase;
      auto ps = query::render_all(datasets[d], templates, opts);
      groups.push_back({d, v, prompts.size(), prompts.size() + ps.size()});
      prompts.insert(prompts.end(), ps.begin(), ps.end());
    }
  }

  auto gw = detail::make_gateway(cfg);
  auto batch = gw.run_batch(prompts, cfg.parallelism, run_id);

  RunOutcome outcome{run_dir, {}};
  std::vector<corpus::TranscriptRecord> transcripts;
  std::string labels_out;
  std::vector<std::optional<stance::AnswerLabel>> labels(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& item = batch.items[i];
    if (!item.ok()) {
      outcome.failures.push_back({prompts[i].id, std::string(gateway::to_string(*item.error_code)), item.error});
      continue;
    }
    transcripts.push_back(*item.record);
    labels[i] = stance::classify_response(item.record->response_text, prompts[i].text, item.record->truncated, lexicon);
    auto j = stance::to_json(*labels[i]);
    j["prompt_id"] = prompts[i].id;
    labels_out += j.dump() + "\n";
  }
  corpus::save_transcripts(run_dir / "transcripts.jsonl", transcripts);
  write_file(run_dir / "labels.jsonl", labels_out);

  nlohmann::json summary_rows = nlohmann::json::array();
  std::string csv;
  for (std::size_t c = 0; c < kSummaryColumns.size(); ++c) csv += (c ? "," : "") + kSummaryColumns[c];
  csv += "\n";

  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const auto& ds = datasets[d];
    std::vector<GraphSet> sets;
    for (const auto& grp : groups) {
      if (grp.dataset != d) continue;
      GraphSet set{grp.perturbation, {}, true};
      const auto dir_name = grp.perturbation ? ds.id + "@" + detail::safe_name(grp.perturbation->tag()) : ds.id;
      const auto graph_dir = run_dir / "graphs" / dir_name;
      std::vector<std::pair<query::QueryTemplate, graph::LabeledAnswers>> asymmetric_inputs;
      for (const auto& t : templates) {
        graph::LabeledAnswers labeled;
        bool complete = true;
        for (std::size_t i = grp.begin; i < grp.end; ++i) {
          if (prompts[i].template_id != t.id) continue;
          if (!labels[i]) {
            complete = false;
            continue;
          }
          labeled[*prompts[i].pair] = *labels[i];
        }
        if (!complete) {
          set.complete = false;
          continue;
        }
        auto g = graph::build_graph(ds, t, labeled, cfg.policy);
        detail::write_json(graph_dir / (t.id + ".json"), graph::to_json(g));
        write_file(graph_dir / (t.id + ".dot"), graph::to_dot(g, &ds));
        if (t.symmetry == query::Symmetry::asymmetric) asymmetric_inputs.emplace_back(t, std::move(labeled));
        set.graphs.push_back(std::move(g));
      }
      if (cfg.majority && set.complete && !asymmetric_inputs.empty()) {
        auto g = graph::build_majority_graph(ds, asymmetric_inputs, cfg.policy);
        detail::write_json(graph_dir / "majority.json", graph::to_json(g));
        write_file(graph_dir / "majority.dot", graph::to_dot(g, &ds));
      }
      if (!set.graphs.empty()) {
        auto f = graph::build_frequency(set.graphs);
        detail::write_json(graph_dir / "frequency.json", graph::to_json(f));
        write_file(graph_dir / "frequency.dot", graph::to_dot(f, &ds));
        write_file(graph_dir / "sheet.dot", graph::to_dot_sheet(set.graphs, dir_name, &ds));
      }
      sets.push_back(std::move(set));
    }

    // Report for the unperturbed graphs, with deltas for each perturbation.
    const auto& base = sets.front();
    nlohmann::json rows = nlohmann::json::array();
    std::vector<double> connections, efpr, ofpr;
    for (const auto& g : base.graphs) {
      auto row = graph_row(g, ds);
      rows.push_back(row);
      connections.push_back(static_cast<double>(g.connection_count()));
      if (!row["existence_fpr"].is_null()) efpr.push_back(row["existence_fpr"].get<double>());
      if (!row["orientation_fpr"].is_null()) ofpr.push_back(row["orientation_fpr"].get<double>());
    }
    eval::StabilityReport stability;
    if (base.graphs.size() >= 2) stability = eval::wording_sensitivity(base.graphs);
    for (const auto& g : base.graphs) stability.density_ratio[g.template_id] = eval::density_ratio(g, ds);
    std::optional<long> delta_total;
    nlohmann::json perturbed = nlohmann::json::array();
    for (std::size_t s = 1; s < sets.size(); ++s) {
      nlohmann::json prow{{"perturbation", sets[s].perturbation->tag()}, {"complete", sets[s].complete}};
      auto graphs = nlohmann::json::array();
      for (const auto& pg : sets[s].graphs) {
        auto it = std::find_if(base.graphs.begin(), base.graphs.end(),
                               [&](const auto& g) { return g.template_id == pg.template_id; });
        auto row = graph_row(pg, ds);
        if (it != base.graphs.end()) {
          const auto delta = eval::perturbation_delta(*it, pg);
          row["delta"] = delta;
          stability.perturbation_deltas.push_back({sets[s].perturbation->tag(), pg.template_id, delta});
          delta_total = delta_total.value_or(0) + delta;
        }
        graphs.push_back(row);
      }
      prow["graphs"] = graphs;
      perturbed.push_back(prow);
    }
    const bool complete = std::all_of(sets.begin(), sets.end(), [](const auto& s) { return s.complete; });
    const auto digest = corpus::dataset_digest(ds);
    nlohmann::json report{{"schema", "causalfm.report/1"},
                          {"run_id", run_id},
                          {"model", cfg.backend.model},
                          {"dataset_id", ds.id},
                          {"dataset_digest", digest},
                          {"true_edges", ds.truth_edges.size()},
                          {"complete", complete},
                          {"graphs", rows},
                          {"stability", eval::to_json(stability)},
                          {"perturbations", perturbed}};
    detail::write_json(run_dir / "reports" / (ds.id + ".json"), report);

    nlohmann::json srow{{"run_id", run_id},
                        {"model", cfg.backend.model},
                        {"dataset", ds.id},
                        {"dataset_digest", digest},
                        {"graphs", base.graphs.size()},
                        {"true_edges", ds.truth_edges.size()},
                        {"mean_connections", eval::optional_number(detail::mean(connections))},
                        {"mean_existence_fpr", eval::optional_number(detail::mean(efpr))},
                        {"mean_orientation_fpr", eval::optional_number(detail::mean(ofpr))},
                        {"max_shd", base.graphs.size() >= 2 ? nlohmann::json(stability.max_distance) : nlohmann::json()},
                        {"mean_shd", base.graphs.size() >= 2 ? nlohmann::json(stability.mean_distance) : nlohmann::json()},
                        {"perturbation_delta", delta_total ? nlohmann::json(*delta_total) : nlohmann::json()}};
    summary_rows.push_back(srow);
  }

  detail::write_json(run_dir / "report.json",
                     {{"schema", "causalfm.run/1"}, {"run_id", run_id}, {"model", cfg.backend.model}, {"rows", summary_rows}});
  auto cell = [](const nlohmann::json& v) -> std::string {
    if (v.is_null()) return "";
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_float()) return detail::fmt(v.get<double>());
    return v.dump();
  };
  for (const auto& row : summary_rows) {
    for (std::size_t c = 0; c < kSummaryColumns.size(); ++c) csv += (c ? "," : "") + cell(row[kSummaryColumns[c]]);
    csv += "\n";
  }
  write_file(run_dir / "summary.csv", csv);

  auto manifest = batch.manifest;
  manifest["kind"] = "discover";
  manifest["run_config"] = describe(cfg);
  manifest["run_config_digest"] = run_digest;
  manifest["datasets"] = nlohmann::json::object();
  for (const auto& ds : datasets) manifest["datasets"][ds.id] = corpus::dataset_digest(ds);
  auto failures = nlohmann::json::array();
  for (const auto& f : outcome.failures) failures.push_back({{"prompt_id", f.prompt_id}, {"code", f.code}, {"message", f.message}});
  manifest["failures"] = failures;
  manifest["partial"] = !outcome.failures.empty();
  detail::write_json(run_dir / "manifest.json", manifest);
  return outcome;
}

// ---------------------------------------------------------------------------
// commonsense

struct CommonsenseOutcome {
  RunOutcome run;
  std::map<std::string, eval::SuiteGrade> grades;
};

inline CommonsenseOutcome commonsense(const RunConfig& cfg) {
  const auto run_id = effective_run_id(cfg);
  if (cfg.suites.empty()) throw ConfigError("no suites selected");
  const auto lexicon = stance::Lexicon::load_bundled(cfg.data_dir);
  const auto run_dir = cfg.out_dir / run_id;
  auto described = describe(cfg);
  described["suites"] = cfg.suites;
  const auto run_digest = sha256_hex(described.dump());
  detail::claim_run_dir(run_dir, run_digest);

  struct Suite {
    std::string name;
    std::vector<query::SuiteQuestion> questions;
    eval::AnswerKey key;
  };
  std::vector<Suite> suites;
  std::vector<query::Prompt> prompts;
  for (const auto& name : cfg.suites) {
    const auto suite_path = cfg.data_dir / "suites" / (name + ".suite");
    const auto key_path = cfg.data_dir / "keys" / (name + ".key.json");
    if (!fs::exists(suite_path)) throw ConfigError("unknown suite '" + name + "'");
    Suite s{name, query::load_suite(suite_path), eval::load_key(key_path)};
    for (const auto& q : s.questions) {
      if (!s.key.entries.count(q.id)) throw ConfigError("suite " + name + ": question " + q.id + " missing from key");
    }
    auto ps = query::render_suite(name, s.questions);
    prompts.insert(prompts.end(), ps.begin(), ps.end());
    suites.push_back(std::move(s));
  }

  auto gw = detail::make_gateway(cfg);
  auto batch = gw.run_batch(prompts, cfg.parallelism, run_id);

  CommonsenseOutcome out{{run_dir, {}}, {}};
  std::vector<corpus::TranscriptRecord> transcripts;
  std::size_t i = 0;
  std::string csv = "run_id,model,suite,questions,correct,wrong,indecisive,unanswered,missing\n";
  for (const auto& s : suites) {
    std::vector<eval::GradeInput> inputs;
    std::size_t missing = 0;
    for (const auto& q : s.questions) {
      const auto& item = batch.items[i];
      if (!item.ok()) {
        out.run.failures.push_back({prompts[i].id, std::string(gateway::to_string(*item.error_code)), item.error});
        ++missing;
      } else {
        transcripts.push_back(*item.record);
        inputs.push_back({q.id,
                          stance::classify_response(item.record->response_text, q.text, item.record->truncated, lexicon),
                          item.record->response_text});
      }
      ++i;
    }
    auto grade = eval::grade_suite(inputs, s.key);
    auto j = eval::to_json(grade);
    j["run_id"] = run_id;
    j["model"] = cfg.backend.model;
    j["missing"] = missing;
    detail::write_json(run_dir / "commonsense" / (s.name + ".json"), j);
    csv += run_id + "," + cfg.backend.model + "," + s.name + "," + std::to_string(s.questions.size());
    for (auto v : eval::kAllVerdicts) csv += "," + std::to_string(grade.count(v));
    csv += "," + std::to_string(missing) + "\n";
    out.grades.emplace(s.name, std::move(grade));
  }
  corpus::save_transcripts(run_dir / "transcripts.jsonl", transcripts);
  write_file(run_dir / "commonsense" / "tallies.csv", csv);

  auto manifest = batch.manifest;
  manifest["kind"] = "commonsense";
  manifest["run_config"] = described;
  manifest["run_config_digest"] = run_digest;
  auto failures = nlohmann::json::array();
  for (const auto& f : out.run.failures) failures.push_back({{"prompt_id", f.prompt_id}, {"code", f.code}, {"message", f.message}});
  manifest["failures"] = failures;
  manifest["partial"] = !out.run.failures.empty();
  detail::write_json(run_dir / "manifest.json", manifest);
  return out;
}

// ---------------------------------------------------------------------------
// classify

// One JSON line per record: the label plus model_id and prompt_text.
inline std::string classify_transcripts(std::string_view text, const std::string& source, const stance::Lexicon& lexicon) {
  auto set = corpus::parse_transcripts(text, source);
  std::string out;
  for (const auto& r : set.records) {
    auto j = stance::to_json(stance::classify_response(r.response_text, r.prompt_text, r.truncated, lexicon));
    j["model_id"] = r.model_id;
    j["prompt_text"] = r.prompt_text;
    out += j.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// report

struct AggregateReport {
  std::vector<nlohmann::json> rows;
  std::string csv;
  std::string markdown;
  std::map<std::string, std::string> sheets;  // dataset id -> DOT
};

inline AggregateReport aggregate(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
  AggregateReport out;
  std::map<std::string, std::pair<std::string, std::string>> digests;  // dataset -> (digest, run)
  std::map<std::string, std::vector<graph::PredictedGraph>> sheet_graphs;
  std::map<std::string, std::vector<std::string>> sheet_labels;

  for (const auto& dir : run_dirs) {
    const auto manifest_path = dir / "manifest.json";
    const auto report_path = dir / "report.json";
    if (!fs::exists(manifest_path)) throw Error("run " + dir.string() + ": missing manifest.json");
    auto manifest = nlohmann::json::parse(read_file(manifest_path), nullptr, false);
    if (manifest.is_discarded() || manifest.value("kind", "") != "discover") {
      throw Error("run " + dir.string() + ": manifest is not from a discover run");
    }
    if (!fs::exists(report_path)) throw Error("run " + dir.string() + ": missing report.json");
    auto report = nlohmann::json::parse(read_file(report_path), nullptr, false);
    if (report.is_discarded() || report.value("schema", "") != "causalfm.run/1") {
      throw Error("run " + dir.string() + ": unsupported report.json");
    }
    const auto run_id = report.value("run_id", dir.filename().string());
    for (const auto& row : report["rows"]) {
      const auto ds = row["dataset"].get<std::string>();
      const auto digest = row["dataset_digest"].get<std::string>();
      auto [it, fresh] = digests.try_emplace(ds, digest, run_id);
      if (!fresh && it->second.first != digest) {
        throw Error("dataset " + ds + " differs between runs: " + it->second.second + " has digest " +
                    it->second.first.substr(0, 12) + ", " + run_id + " has digest " + digest.substr(0, 12));
      }
      out.rows.push_back(row);
      for (const auto& t : query::bundled_templates()) {
        const auto path = dir / "graphs" / ds / (t.id + ".json");
        if (!fs::exists(path)) continue;
        sheet_graphs[ds].push_back(graph::graph_from_json(nlohmann::json::parse(read_file(path))));
        sheet_labels[ds].push_back(run_id + " / " + t.id);
      }
    }
  }

  auto cell = [](const nlohmann::json& v) -> std::string {
    if (v.is_null()) return "";
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_float()) return detail::fmt(v.get<double>());
    return v.dump();
  };
  std::string header, rule;
  for (std::size_t c = 0; c < kSummaryColumns.size(); ++c) {
    out.csv += (c ? "," : "") + kSummaryColumns[c];
    header += "| " + kSummaryColumns[c] + " ";
    rule += "|---";
  }
  out.csv += "\n";
  out.markdown = header + "|\n" + rule + "|\n";
  for (const auto& row : out.rows) {
    std::string md;
    for (std::size_t c = 0; c < kSummaryColumns.size(); ++c) {
      auto v = cell(row[kSummaryColumns[c]]);
      if (kSummaryColumns[c] == "dataset_digest") v = v.substr(0, 12);
      out.csv += (c ? "," : "") + cell(row[kSummaryColumns[c]]);
      md += "| " + v + " ";
    }
    out.csv += "\n";
    out.markdown += md + "|\n";
  }
  for (const auto& [ds, graphs] : sheet_graphs) {
    out.sheets[ds] = graph::to_dot_sheet(graphs, ds, nullptr, sheet_labels[ds]);
  }
  return out;
}

inline void write_aggregate(const AggregateReport& r, const fs::path& out_dir) {
  write_file(out_dir / "summary.csv", r.csv);
  write_file(out_dir / "summary.md", r.markdown);
  for (const auto& [ds, dot] : r.sheets) write_file(out_dir / "sheets" / (ds + ".dot"), dot);
}

}  // namespace causalfm::pipeline
