// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

#include "causalfm/pipeline.hpp"
#include "fake_endpoint.hpp"
#include "oracles.hpp"

using namespace causalfm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("causalfm_acceptance_" + name + "_" + std::to_string(std::random_device{}()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<corpus::BenchmarkDataset> datasets() { return corpus::load_bundled_datasets(default_data_dir()); }

Outcome query_counts() {
  const std::map<std::string, std::size_t> expected = {{"A", 10}, {"C", 100}, {"H", 60}, {"D", 30}, {"E", 100}, {"R", 30}};
  std::string detail;
  bool pass = true;
  for (const auto& ds : datasets()) {
    const auto n = query::render_all(ds, query::bundled_templates()).size();
    detail += ds.id + "=" + std::to_string(n) + " ";
    pass = pass && n == expected.at(ds.id);
  }
  return {pass, detail};
}

Outcome commonsense_tallies() {
  const auto dir = default_data_dir();
  const auto lex = stance::Lexicon::load_bundled(dir);
  const auto records = corpus::load_transcripts(dir / "transcripts" / "appendix.jsonl").records;
  auto grade = [&](const std::string& name) {
    const auto questions = query::load_suite(dir / "suites" / (name + ".suite"));
    const auto key = eval::load_key(dir / "keys" / (name + ".key.json"));
    std::vector<eval::GradeInput> inputs;
    for (const auto& q : questions) {
      for (const auto& r : records) {
        if (r.model_id == "FM-G" && r.prompt_text == q.text) {
          inputs.push_back({q.id, stance::classify_response(r.response_text, r.prompt_text, r.truncated, lex), r.response_text});
          break;
        }
      }
    }
    return eval::grade_suite(inputs, key);
  };
  const auto ar = grade("ar");
  const auto ip = grade("ip");
  using V = eval::Verdict;
  auto line = [](const eval::SuiteGrade& g) {
    return std::to_string(g.count(V::correct)) + "/" + std::to_string(g.count(V::wrong)) + "/" +
           std::to_string(g.count(V::indecisive)) + "/" + std::to_string(g.count(V::unanswered));
  };
  const bool pass = line(ar) == "11/3/0/1" && line(ip) == "21/9/6/0";
  return {pass, "AR " + line(ar) + ", IP " + line(ip) + " (correct/wrong/indecisive/unanswered)"};
}

Outcome gold_corpus() {
  const auto dir = default_data_dir();
  const auto lex = stance::Lexicon::load_bundled(dir);
  const auto records = corpus::load_transcripts(dir / "transcripts" / "appendix.jsonl").records;
  const auto gold_text = read_file(dir / "gold" / "appendix.gold.jsonl");
  const auto gold = split_lines(gold_text);
  if (gold.size() != records.size()) return {false, "gold and transcript sizes differ"};
  std::size_t agree = 0;
  bool board_flags = false, seesaw_flags = false;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto expected = stance::label_from_json(nlohmann::json::parse(gold[i]));
    const auto got = stance::classify_response(r.response_text, r.prompt_text, r.truncated, lex);
    if (got == expected) ++agree;
    if (r.model_id != "FM-O") continue;
    using D = stance::Degeneracy;
    if (r.prompt_text.find("tilted board") != std::string::npos && got.degeneracies.contains(D::loop_detected) &&
        got.degeneracies.contains(D::multiple_choice)) {
      board_flags = true;
    }
    if (r.prompt_text.find("seesaw") != std::string::npos && got.degeneracies.contains(D::multiple_choice)) {
      seesaw_flags = true;
    }
  }
  const bool pass = agree == records.size() && records.size() >= 60 && board_flags && seesaw_flags;
  return {pass, std::to_string(agree) + "/" + std::to_string(records.size()) + " agree; tilted-board loop+choice " +
                    (board_flags ? "yes" : "no") + "; seesaw choice " + (seesaw_flags ? "yes" : "no")};
}

Outcome aggregation_oracle() {
  std::uint64_t assignments = 0, mismatches = 0;
  for (const auto& ds : datasets()) {
    if (ds.variables.size() > 4) continue;
    for (const auto& t : query::bundled_templates()) {
      const auto r = oracle::check_build_graph(ds, t);
      assignments += r.assignments;
      mismatches += r.mismatches;
    }
  }
  return {mismatches == 0 && assignments > 0,
          std::to_string(assignments) + " assignments, " + std::to_string(mismatches) + " mismatches"};
}

Outcome shd_properties() {
  const auto r = oracle::check_shd_metric(datasets(), 10000, 20240601);
  return {r.violations == 0 && r.pairs >= 10000,
          std::to_string(r.pairs) + " pairs, " + std::to_string(r.violations) + " violations"};
}

pipeline::RunConfig replay_run(const std::string& model, const fs::path& out) {
  pipeline::RunConfig cfg;
  cfg.backend.kind = gateway::BackendKind::replay;
  cfg.backend.model = model;
  cfg.backend.replay_store = default_data_dir() / "replay" / (model + ".jsonl");
  cfg.out_dir = out;
  return cfg;
}

Outcome orientation_invariant() {
  const auto out = temp_dir("orientation");
  if (!pipeline::discover(replay_run("FM-O", out)).ok()) return {false, "replay run failed"};
  bool pass = true;
  std::string detail;
  for (const auto& ds : datasets()) {
    std::optional<std::size_t> max_orientation, min_existence;
    for (const auto& t : query::bundled_templates()) {
      const auto g = graph::graph_from_json(nlohmann::json::parse(read_file(out / "FM-O" / "graphs" / ds.id / (t.id + ".json"))));
      const auto c = eval::confusion(g, ds);
      if (c.orientation) {
        max_orientation = std::max(max_orientation.value_or(0), c.orientation->fp);
      } else {
        min_existence = std::min(min_existence.value_or(c.existence.fp), c.existence.fp);
      }
    }
    if (!max_orientation || !min_existence) continue;
    detail += ds.id + " " + std::to_string(*max_orientation) + "<=" + std::to_string(*min_existence) + " ";
    pass = pass && *max_orientation <= *min_existence;
  }
  fs::remove_all(out);
  return {pass, detail};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  out.erase("manifest.json");
  return out;
}

Outcome replay_determinism() {
  const auto a = temp_dir("det_a");
  const auto b = temp_dir("det_b");
  bool pass = true;
  std::size_t files = 0;
  for (const auto* model : {"FM-G", "FM-L", "FM-O"}) {
    auto cfg = replay_run(model, a);
    cfg.perturbations = {pipeline::parse_perturbation("H:age@synonym", default_data_dir()),
                         pipeline::parse_perturbation("H:mobility@contextual", default_data_dir())};
    cfg.majority = true;
    pass = pass && pipeline::discover(cfg).ok();
    cfg.out_dir = b;
    cfg.parallelism = 4;
    pass = pass && pipeline::discover(cfg).ok();
    const auto ta = tree(a / model);
    pass = pass && ta == tree(b / model);
    files += ta.size();
  }
  fs::remove_all(a);
  fs::remove_all(b);
  return {pass, std::to_string(files) + " artifacts compared across two runs per model"};
}

Outcome live_contract() {
  std::vector<std::string> notes;
  bool pass = true;
  gateway::BackendConfig cfg;
  cfg.kind = gateway::BackendKind::http;
  cfg.model = "fake-model";
  cfg.timeout = std::chrono::seconds(5);
  auto make = [&](const FakeEndpoint& server, std::shared_ptr<gateway::ResponseCache> cache) {
    cfg.endpoint = server.url();
    auto gw = std::make_unique<gateway::Gateway>(cfg, gateway::HttpBackend::from_config(cfg), std::move(cache));
    gw->set_sleep([](std::chrono::milliseconds) {});
    return gw;
  };
  std::vector<query::Prompt> prompts;
  for (int i = 0; i < 40; ++i) {
    query::Prompt p;
    p.id = "p" + std::to_string(i);
    p.text = "Question number " + std::to_string(i) + "?";
    prompts.push_back(p);
  }

  {
    FakeEndpoint server;
    server.fail_first = 2;
    auto gw = make(server, nullptr);
    const auto rec = gw->complete("Does rain cause wet streets?");
    const bool ok = rec.response_text == "reply to Does rain cause wet streets?" && server.hits("Does rain cause wet streets?") == 3;
    notes.push_back(std::string("retry ") + (ok ? "ok" : "FAILED"));
    pass = pass && ok;
  }
  {
    FakeEndpoint server;
    auto cache = std::make_shared<gateway::ResponseCache>();
    auto gw = make(server, cache);
    gw->run_batch(prompts, 4, "warm");
    const int before = server.total_hits();
    auto again = gw->run_batch(prompts, 4, "hot");
    const bool ok = before == 40 && server.total_hits() == 40 && again.failures() == 0;
    notes.push_back(std::string("cache ") + (ok ? "ok" : "FAILED"));
    pass = pass && ok;
  }
  for (std::size_t parallel : {1u, 4u, 16u}) {
    FakeEndpoint server;
    auto gw = make(server, nullptr);
    const auto r = gw->run_batch(prompts, parallel, "order");
    bool ok = r.items.size() == prompts.size() && r.failures() == 0;
    for (std::size_t i = 0; ok && i < prompts.size(); ++i) {
      ok = r.items[i].record->prompt_text == prompts[i].text && r.items[i].record->response_text == "reply to " + prompts[i].text;
    }
    notes.push_back("order@" + std::to_string(parallel) + (ok ? " ok" : " FAILED"));
    pass = pass && ok;
  }
  std::string detail;
  for (const auto& n : notes) detail += n + "; ";
  return {pass, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"query-count exactness", query_counts},
      {"common-sense reproduction", commonsense_tallies},
      {"classifier gold-corpus regression", gold_corpus},
      {"aggregation oracle equivalence", aggregation_oracle},
      {"shd metric properties", shd_properties},
      {"asymmetric-orientation invariant", orientation_invariant},
      {"end-to-end replay determinism", replay_determinism},
      {"live-backend contract", live_contract},
  };
  const auto start = std::chrono::steady_clock::now();
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    while (!o.detail.empty() && (o.detail.back() == ' ' || o.detail.back() == ';')) o.detail.pop_back();
    std::printf("[%s] %zu %s: %s (%lld ms)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str(),
                static_cast<long long>(ms));
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  const auto total = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  std::printf("%zu/%zu criteria passed in %lld ms\n", criteria.size() - failed, criteria.size(), static_cast<long long>(total));
  return failed == 0 ? 0 : 1;
}
