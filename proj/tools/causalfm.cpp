#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "causalfm/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace causalfm;

enum Exit { kOk = 0, kPartial = 1, kConfig = 2, kFailure = 3 };

struct BackendFlags {
  std::string kind = "replay";
  std::string model;
  std::string endpoint;
  fs::path replay;
  fs::path cache;
  int max_tokens = 512;
  std::vector<std::string> stop;
  double rps = 0;
  std::size_t parallel = 1;
};

struct Flags {
  BackendFlags backend;
  std::vector<std::string> datasets, templates, perturb, suites;
  std::string suffix, run_id;
  bool majority = false;
  fs::path out = "out";
  fs::path policy;
  fs::path config;
  fs::path data_dir = default_data_dir();
};

void add_backend_options(CLI::App* cmd, Flags& f) {
  cmd->add_option("--backend", f.backend.kind, "replay or http")->check(CLI::IsMember({"replay", "http"}));
  cmd->add_option("--model", f.backend.model, "Model id")->required();
  cmd->add_option("--endpoint", f.backend.endpoint, "Completions endpoint URL (http backend)");
  cmd->add_option("--replay", f.backend.replay, "Replay store (default: data/replay/<model>.jsonl)");
  cmd->add_option("--cache", f.backend.cache, "Response cache file (http backend; default: <out>/cache.jsonl)");
  cmd->add_option("--max-tokens", f.backend.max_tokens, "Completion length cap");
  cmd->add_option("--stop", f.backend.stop, "Stop sequence (repeatable)");
  cmd->add_option("--rps", f.backend.rps, "Requests per second cap (0 = none)");
  cmd->add_option("--parallel", f.backend.parallel, "Concurrent requests")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--run-id", f.run_id, "Run id (default: model)");
  cmd->add_option("--config", f.config, "JSON config file; its keys override flags");
  cmd->add_option("--data-dir", f.data_dir, "Bundled data tree");
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

void take_path(const nlohmann::json& j, const char* key, fs::path& dst) {
  std::string s;
  if (!j.contains(key)) return;
  take(j, key, s);
  dst = s;
}

void apply_config_file(Flags& f) {
  if (f.config.empty()) return;
  const auto j = nlohmann::json::parse(read_file(f.config), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError(f.config.string() + ": not a JSON object");
  static const std::set<std::string> kKeys = {
      "backend", "model",  "endpoint", "replay",  "cache", "max_tokens", "stop",     "requests_per_second",
      "parallel", "datasets", "templates", "perturb", "suites", "suffix", "run_id", "majority", "out", "policy", "data_dir"};
  for (const auto& [k, v] : j.items()) {
    if (!kKeys.count(k)) throw ConfigError(f.config.string() + ": unknown key '" + k + "'");
  }
  take(j, "backend", f.backend.kind);
  take(j, "model", f.backend.model);
  take(j, "endpoint", f.backend.endpoint);
  take_path(j, "replay", f.backend.replay);
  take_path(j, "cache", f.backend.cache);
  take_path(j, "out", f.out);
  take_path(j, "policy", f.policy);
  take_path(j, "data_dir", f.data_dir);
  take(j, "max_tokens", f.backend.max_tokens);
  take(j, "stop", f.backend.stop);
  take(j, "requests_per_second", f.backend.rps);
  take(j, "parallel", f.backend.parallel);
  take(j, "datasets", f.datasets);
  take(j, "templates", f.templates);
  take(j, "perturb", f.perturb);
  take(j, "suites", f.suites);
  take(j, "suffix", f.suffix);
  take(j, "run_id", f.run_id);
  take(j, "majority", f.majority);
}

pipeline::RunConfig to_run_config(Flags& f) {
  apply_config_file(f);
  pipeline::RunConfig cfg;
  auto& b = cfg.backend;
  if (f.backend.kind == "replay") {
    b.kind = gateway::BackendKind::replay;
  } else if (f.backend.kind == "http") {
    b.kind = gateway::BackendKind::http;
  } else {
    throw ConfigError("unknown backend '" + f.backend.kind + "'");
  }
  b.model = f.backend.model;
  b.endpoint = f.backend.endpoint;
  b.replay_store = f.backend.replay.empty() ? f.data_dir / "replay" / (b.model + ".jsonl") : f.backend.replay;
  if (f.backend.max_tokens <= 0) throw ConfigError("max_tokens must be positive");
  b.decoding.max_tokens = f.backend.max_tokens;
  b.decoding.stop = f.backend.stop;
  b.requests_per_second = f.backend.rps;
  if (f.backend.parallel == 0) throw ConfigError("parallel must be at least 1");
  gateway::validate(b);

  cfg.dataset_ids = f.datasets;
  cfg.template_ids = f.templates;
  cfg.suffix = f.suffix;
  cfg.majority = f.majority;
  cfg.out_dir = f.out;
  cfg.run_id = f.run_id;
  cfg.parallelism = f.backend.parallel;
  cfg.cache_path = f.backend.cache;
  cfg.data_dir = f.data_dir;
  if (!f.suites.empty()) cfg.suites = f.suites;
  if (!f.policy.empty()) {
    auto j = nlohmann::json::parse(read_file(f.policy), nullptr, false);
    if (j.is_discarded()) throw ConfigError(f.policy.string() + ": not valid JSON");
    cfg.policy = graph::policy_from_json(j);
  }
  for (const auto& p : f.perturb) cfg.perturbations.push_back(pipeline::parse_perturbation(p, f.data_dir));
  return cfg;
}

int report_failures(const pipeline::RunOutcome& r) {
  std::cout << "run directory: " << r.run_dir.string() << "\n";
  if (r.ok()) return kOk;
  std::cerr << r.failures.size() << " prompt(s) failed; artifacts are partial\n";
  const std::size_t shown = std::min<std::size_t>(r.failures.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& f = r.failures[i];
    std::cerr << "  [" << f.code << "] " << f.prompt_id << ": " << f.message << "\n";
  }
  if (shown < r.failures.size()) std::cerr << "  ... see manifest.json for the full list\n";
  return kPartial;
}

int run_discover(Flags& f) { return report_failures(pipeline::discover(to_run_config(f))); }

int run_commonsense(Flags& f) {
  auto out = pipeline::commonsense(to_run_config(f));
  for (const auto& [suite, g] : out.grades) {
    std::cout << suite << ":";
    for (auto v : eval::kAllVerdicts) std::cout << " " << eval::to_string(v) << "=" << g.count(v);
    std::cout << "\n";
  }
  return report_failures(out.run);
}

int run_classify(const std::string& input, const fs::path& output, const fs::path& data_dir) {
  std::string text;
  if (input == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    text = ss.str();
  } else {
    text = read_file(input);
  }
  const auto lexicon = stance::Lexicon::load_bundled(data_dir);
  const auto lines = pipeline::classify_transcripts(text, input == "-" ? "<stdin>" : input, lexicon);
  if (output.empty()) {
    std::cout << lines;
  } else {
    write_file(output, lines);
  }
  return kOk;
}

int run_report(const std::vector<fs::path>& runs, const fs::path& out) {
  auto r = pipeline::aggregate(runs);
  if (!out.empty()) pipeline::write_aggregate(r, out);
  std::cout << r.markdown;
  return kOk;
}

int run_list(const fs::path& data_dir) {
  std::printf("%-3s %-10s %9s %5s %7s  %s\n", "id", "name", "variables", "edges", "prompts", "provenance");
  for (const auto& ds : corpus::load_bundled_datasets(data_dir)) {
    std::printf("%-3s %-10s %9zu %5zu %7zu  %s\n", ds.id.c_str(), ds.name.c_str(), ds.variables.size(),
                ds.truth_edges.size(), corpus::expected_prompt_count(ds, query::bundled_templates().size()),
                ds.provenance.c_str());
  }
  return kOk;
}

int run_export_dot(const std::vector<fs::path>& inputs, const std::string& title, const fs::path& data_dir) {
  std::vector<graph::PredictedGraph> graphs;
  for (const auto& p : inputs) {
    auto j = nlohmann::json::parse(read_file(p), nullptr, false);
    if (j.is_discarded()) throw ParseError(ParseError::Kind::syntax, p.string(), 0, "not valid JSON");
    graphs.push_back(graph::graph_from_json(j));
  }
  std::optional<corpus::BenchmarkDataset> ds;
  const auto& id = graphs.front().dataset_id;
  if (std::find(corpus::kBundledIds.begin(), corpus::kBundledIds.end(), id) != corpus::kBundledIds.end()) {
    ds = corpus::load_bundled_dataset(data_dir, id);
  }
  const auto* dsp = ds ? &*ds : nullptr;
  if (graphs.size() == 1) {
    std::cout << graph::to_dot(graphs.front(), dsp);
  } else {
    std::cout << graph::to_dot_sheet(graphs, title.empty() ? id : title, dsp);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal structure queries against foundation models: runs, grading and reports"};
  app.require_subcommand(1);

  Flags discover_flags;
  auto* discover = app.add_subcommand("discover", "Query every variable pair of the selected datasets and build graphs");
  add_backend_options(discover, discover_flags);
  discover->add_option("--datasets", discover_flags.datasets, "Dataset ids (default: all)")->delimiter(',');
  discover->add_option("--templates", discover_flags.templates, "Template ids (default: all)")->delimiter(',');
  discover->add_option("--perturb", discover_flags.perturb, "DATASET:VAR=PHRASE or DATASET:VAR@synonym|contextual");
  discover->add_option("--suffix", discover_flags.suffix, "Text appended to every prompt");
  discover->add_option("--policy", discover_flags.policy, "Belief policy JSON");
  discover->add_flag("--majority", discover_flags.majority, "Also build a majority graph over directional wordings");

  Flags cs_flags;
  auto* commonsense = app.add_subcommand("commonsense", "Ask the free-text suites and grade the answers");
  add_backend_options(commonsense, cs_flags);
  commonsense->add_option("--suite", cs_flags.suites, "Suite name (repeatable; default: ar, ip)");

  std::string classify_input;
  fs::path classify_output;
  fs::path classify_data = default_data_dir();
  auto* classify = app.add_subcommand("classify", "Label every record of a transcript file");
  classify->add_option("input", classify_input, "Transcript JSONL file, or - for stdin")->required();
  classify->add_option("-o,--output", classify_output, "Write labels here instead of stdout");
  classify->add_option("--data-dir", classify_data, "Bundled data tree");

  std::vector<fs::path> report_runs;
  fs::path report_out;
  auto* report = app.add_subcommand("report", "Aggregate discover runs into one table and DOT sheets");
  report->add_option("runs", report_runs, "Run directories")->required();
  report->add_option("--out", report_out, "Directory for summary.csv, summary.md and sheets/");

  fs::path list_data = default_data_dir();
  auto* list = app.add_subcommand("list-benchmarks", "Show the bundled datasets");
  list->add_option("--data-dir", list_data, "Bundled data tree");

  std::vector<fs::path> dot_inputs;
  std::string dot_title;
  fs::path dot_data = default_data_dir();
  auto* export_dot = app.add_subcommand("export-dot", "Render graph JSON files as DOT (several files make a sheet)");
  export_dot->add_option("graphs", dot_inputs, "Graph JSON files")->required();
  export_dot->add_option("--title", dot_title, "Sheet title");
  export_dot->add_option("--data-dir", dot_data, "Bundled data tree");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*discover) return run_discover(discover_flags);
    if (*commonsense) return run_commonsense(cs_flags);
    if (*classify) return run_classify(classify_input, classify_output, classify_data);
    if (*report) return run_report(report_runs, report_out);
    if (*list) return run_list(list_data);
    if (*export_dot) return run_export_dot(dot_inputs, dot_title, dot_data);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
