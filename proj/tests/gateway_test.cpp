#include <gtest/gtest.h>

#include <chrono>
#include <random>
#include <set>
#include <thread>

#include "causalfm/gateway.hpp"
#include "fake_endpoint.hpp"

using namespace causalfm;
using namespace causalfm::gateway;

namespace {

BackendConfig http_config(const std::string& url) {
  BackendConfig cfg;
  cfg.kind = BackendKind::http;
  cfg.endpoint = url;
  cfg.model = "fake-model";
  cfg.timeout = std::chrono::seconds(5);
  return cfg;
}

std::unique_ptr<Gateway> http_gateway(const BackendConfig& cfg, std::shared_ptr<ResponseCache> cache = nullptr) {
  auto gw = std::make_unique<Gateway>(cfg, HttpBackend::from_config(cfg), std::move(cache));
  gw->set_sleep([](std::chrono::milliseconds) {});
  return gw;
}

std::vector<query::Prompt> numbered_prompts(std::size_t n) {
  std::vector<query::Prompt> out;
  for (std::size_t i = 0; i < n; ++i) {
    query::Prompt p;
    p.id = "p" + std::to_string(i);
    p.text = "Question number " + std::to_string(i) + "?";
    out.push_back(p);
  }
  return out;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("causalfm_gateway_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

BackendConfig replay_config(const std::string& model) {
  BackendConfig cfg;
  cfg.kind = BackendKind::replay;
  cfg.model = model;
  cfg.replay_store = default_data_dir() / "transcripts" / "appendix.jsonl";
  return cfg;
}

}  // namespace

TEST(Config, TemperatureIsPinnedToZero) {
  auto cfg = replay_config("FM-G");
  EXPECT_NO_THROW(validate(cfg));
  cfg.decoding.temperature = 0.7;
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(Config, CacheKeyIsPureAndSensitiveToEveryInput) {
  Decoding d;
  EXPECT_EQ(cache_key("m", d, "p"), cache_key("m", d, "p"));
  EXPECT_NE(cache_key("m", d, "p"), cache_key("n", d, "p"));
  EXPECT_NE(cache_key("m", d, "p"), cache_key("m", d, "q"));
  Decoding longer = d;
  longer.max_tokens = 64;
  EXPECT_NE(cache_key("m", d, "p"), cache_key("m", longer, "p"));
}

TEST(Config, EndpointSplitting) {
  auto e = split_endpoint("http://127.0.0.1:9000");
  EXPECT_EQ(e.origin, "http://127.0.0.1:9000");
  EXPECT_EQ(e.path, "/v1/completions");
  e = split_endpoint("https://api.example.org/v1/engines/x/completions");
  EXPECT_EQ(e.origin, "https://api.example.org");
  EXPECT_EQ(e.path, "/v1/engines/x/completions");
  EXPECT_THROW(split_endpoint("ftp://x"), ConfigError);
}

TEST(Replay, ServesAppendixRecordByteExactly) {
  auto gw = Gateway::from_config(replay_config("FM-G"));
  auto r = gw.complete("If A causes B and B causes C. Does B cause C?");
  EXPECT_EQ(r.response_text, "Yes, B causes C.");
  EXPECT_EQ(r.model_id, "FM-G");
  EXPECT_FALSE(r.truncated);
}

TEST(Replay, MissIsADistinctErrorNamingThePrompt) {
  auto gw = Gateway::from_config(replay_config("FM-G"));
  try {
    gw.complete("Does the moon cause tides?");
    FAIL() << "expected a replay miss";
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), FailureCode::replay_miss);
    EXPECT_NE(std::string(e.what()).find("Does the moon cause tides?"), std::string::npos);
  }
  EXPECT_EQ(gw.attempts(), 1u);
}

TEST(Replay, BatchOverDatasetAKeepsOrderAndCollectsMisses) {
  auto ds = corpus::load_bundled_dataset(default_data_dir(), "A");
  auto prompts = query::render_all(ds, query::bundled_templates());
  ASSERT_EQ(prompts.size(), 10u);
  std::vector<TranscriptRecord> store;
  for (const auto& p : prompts) store.push_back({p.text, "M", "answer to " + p.id, false});

  BackendConfig cfg = replay_config("M");
  Gateway full(cfg, std::make_unique<ReplayBackend>(store));
  auto res = full.run_batch(prompts, 4, "r1");
  ASSERT_EQ(res.items.size(), 10u);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    ASSERT_TRUE(res.items[i].ok());
    EXPECT_EQ(res.items[i].record->response_text, "answer to " + prompts[i].id);
  }

  store.erase(store.begin() + 6);
  Gateway partial(cfg, std::make_unique<ReplayBackend>(store));
  auto dir = temp_dir("partial");
  res = partial.run_batch(prompts, 4, "r2", dir / "manifest.json");
  EXPECT_EQ(res.failures(), 1u);
  EXPECT_FALSE(res.items[6].ok());
  EXPECT_EQ(res.items[6].error_code, FailureCode::replay_miss);
  auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  EXPECT_EQ(manifest["counts"]["ok"], 9);
  EXPECT_EQ(manifest["counts"]["failed"], 1);
  EXPECT_EQ(manifest["config_digest"], config_digest(cfg));
}

TEST(Replay, RunsAreDeterministic) {
  auto prompts = query::render_suite("ar", query::load_suite(default_data_dir() / "suites" / "ar.suite"));
  auto a = Gateway::from_config(replay_config("FM-O")).run_batch(prompts, 1, "a");
  auto b = Gateway::from_config(replay_config("FM-O")).run_batch(prompts, 8, "b");
  ASSERT_EQ(a.items.size(), b.items.size());
  for (std::size_t i = 0; i < a.items.size(); ++i) EXPECT_EQ(a.items[i].record, b.items[i].record);
}

TEST(Batch, EmptyBatchWritesValidManifest) {
  auto dir = temp_dir("empty");
  auto gw = Gateway::from_config(replay_config("FM-G"));
  auto res = gw.run_batch({}, 3, "empty", dir / "manifest.json");
  EXPECT_TRUE(res.items.empty());
  auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  EXPECT_EQ(manifest["run_id"], "empty");
  EXPECT_EQ(manifest["counts"]["prompts"], 0);
}

TEST(Batch, ManifestWriteFailureIsFatal) {
  auto dir = temp_dir("fatal");
  write_file(dir / "blocker", "x");
  auto gw = Gateway::from_config(replay_config("FM-G"));
  EXPECT_ANY_THROW(gw.run_batch(numbered_prompts(2), 1, "x", dir / "blocker" / "manifest.json"));
}

TEST(Batch, ZeroParallelismIsRejected) {
  auto gw = Gateway::from_config(replay_config("FM-G"));
  EXPECT_THROW(gw.run_batch({}, 0, "x"), std::invalid_argument);
}

TEST(Http, SendsCompletionRequestWithPinnedTemperature) {
  FakeEndpoint server;
  ::setenv("CAUSALFM_TEST_KEY", "sekret", 1);
  auto cfg = http_config(server.url());
  cfg.api_key_env = "CAUSALFM_TEST_KEY";
  cfg.decoding.stop = {"\n\n"};
  auto gw = http_gateway(cfg);
  auto r = gw->complete("Does smoking cause cancer?");
  EXPECT_EQ(r.response_text, "reply to Does smoking cause cancer?");
  auto body = server.last_body();
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["model"], "fake-model");
  EXPECT_EQ(body["max_tokens"], 512);
  EXPECT_EQ(body["stop"], nlohmann::json::array({"\n\n"}));
  EXPECT_EQ(server.last_auth(), "Bearer sekret");
}

TEST(Http, LengthStopSetsTruncated) {
  FakeEndpoint server;
  auto gw = http_gateway(http_config(server.url()));
  EXPECT_TRUE(gw->complete("a long question").truncated);
  EXPECT_FALSE(gw->complete("a short question").truncated);
}

TEST(Http, RetriesTransientFailures) {
  FakeEndpoint server;
  server.fail_first = 2;
  auto cfg = http_config(server.url());
  std::vector<std::chrono::milliseconds> waits;
  Gateway gw(cfg, HttpBackend::from_config(cfg));
  gw.set_sleep([&](std::chrono::milliseconds d) { waits.push_back(d); });
  auto r = gw.complete("Is there a causality between rain and mud?");
  EXPECT_EQ(r.response_text, "reply to Is there a causality between rain and mud?");
  EXPECT_EQ(server.hits("Is there a causality between rain and mud?"), 3);
  EXPECT_EQ(waits, (std::vector<std::chrono::milliseconds>{cfg.retry.backoff[0], cfg.retry.backoff[1]}));
}

TEST(Http, GivesUpAfterMaxAttempts) {
  FakeEndpoint server;
  server.fail_first = 100;
  auto cfg = http_config(server.url());
  cfg.retry.max_attempts = 3;
  auto gw = http_gateway(cfg);
  try {
    gw->complete("q");
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), FailureCode::transport);
  }
  EXPECT_EQ(server.hits("q"), 3);
}

TEST(Http, RateLimitExhaustion) {
  FakeEndpoint server;
  server.status_override = 429;
  auto cfg = http_config(server.url());
  cfg.retry.max_attempts = 2;
  auto gw = http_gateway(cfg);
  try {
    gw->complete("q");
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), FailureCode::rate_limited);
  }
  EXPECT_EQ(server.hits("q"), 2);
}

TEST(Http, ProviderErrorIsNotRetried) {
  FakeEndpoint server;
  server.status_override = 400;
  auto gw = http_gateway(http_config(server.url()));
  try {
    gw->complete("q");
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), FailureCode::provider);
    EXPECT_NE(std::string(e.what()).find("bad request"), std::string::npos);
  }
  EXPECT_EQ(server.hits("q"), 1);
}

TEST(Http, UnreachableEndpointIsTransportError) {
  int port;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto cfg = http_config("http://127.0.0.1:" + std::to_string(port));
  cfg.retry.max_attempts = 2;
  cfg.timeout = std::chrono::milliseconds(300);
  auto gw = http_gateway(cfg);
  try {
    gw->complete("q");
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), FailureCode::transport);
  }
  EXPECT_EQ(gw->attempts(), 2u);
}

TEST(Cache, RepeatIsServedFromCacheByteIdentical) {
  FakeEndpoint server;
  auto gw = http_gateway(http_config(server.url()));
  auto first = gw->complete("Does X cause Y?");
  auto second = gw->complete("Does X cause Y?");
  EXPECT_EQ(first, second);
  EXPECT_EQ(server.hits("Does X cause Y?"), 1);
}

TEST(Cache, PersistsAcrossProcessesAndRunsWithoutNetwork) {
  auto dir = temp_dir("cache");
  std::string url;
  TranscriptRecord live;
  {
    FakeEndpoint server;
    url = server.url();
    auto gw = http_gateway(http_config(url), std::make_shared<ResponseCache>(dir / "cache.jsonl"));
    live = gw->complete("Does X cause Y?");
  }
  auto cache = std::make_shared<ResponseCache>(dir / "cache.jsonl");
  EXPECT_EQ(cache->size(), 1u);
  auto gw = http_gateway(http_config(url), cache);
  EXPECT_EQ(gw->complete("Does X cause Y?"), live);
  EXPECT_EQ(gw->attempts(), 0u);
}

TEST(Cache, ConcurrentRequestsForOnePromptHitTheServerOnce) {
  FakeEndpoint server;
  auto gw = http_gateway(http_config(server.url()));
  query::Prompt p;
  p.text = "Are rain and mud causally related?";
  std::vector<query::Prompt> prompts(32, p);
  auto res = gw->run_batch(prompts, 16, "dup");
  EXPECT_EQ(res.failures(), 0u);
  EXPECT_EQ(server.hits(p.text), 1);
}

TEST(Cache, FailuresAreNotCached) {
  FakeEndpoint server;
  server.fail_first = 1;
  auto cfg = http_config(server.url());
  cfg.retry.max_attempts = 1;
  auto gw = http_gateway(cfg);
  EXPECT_THROW(gw->complete("q"), GatewayError);
  EXPECT_EQ(gw->complete("q").response_text, "reply to q");
}

class OrderUnderParallelism : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OrderUnderParallelism, OutputMatchesInputOrder) {
  FakeEndpoint server;
  server.fail_first = 1;
  auto gw = http_gateway(http_config(server.url()));
  auto prompts = numbered_prompts(48);
  auto res = gw->run_batch(prompts, GetParam(), "order");
  ASSERT_EQ(res.items.size(), prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    ASSERT_TRUE(res.items[i].ok()) << res.items[i].error;
    EXPECT_EQ(res.items[i].record->prompt_text, prompts[i].text);
    EXPECT_EQ(res.items[i].record->response_text, "reply to " + prompts[i].text);
  }
  EXPECT_EQ(server.total_hits(), 96);
  EXPECT_EQ(res.manifest["parallelism"], GetParam());
}

INSTANTIATE_TEST_SUITE_P(Gateway, OrderUnderParallelism, ::testing::Values(1, 4, 16));

namespace {

// Backend whose reply time is random, so completion order is shuffled.
class ShuffledBackend : public Backend {
 public:
  Completion complete(const std::string&, const Decoding&, const std::string& prompt) override {
    std::uniform_int_distribution<int> us(0, 2000);
    int wait;
    {
      std::lock_guard lock(mu_);
      wait = us(rng_);
    }
    std::this_thread::sleep_for(std::chrono::microseconds(wait));
    return {"r:" + prompt, false};
  }

 private:
  std::mutex mu_;
  std::mt19937 rng_{5};
};

}  // namespace

TEST(Batch, OrderPreservedWithShuffledCompletion) {
  for (std::size_t par : {1, 2, 3, 4, 7, 16, 64}) {
    BackendConfig cfg = http_config("http://unused");
    Gateway gw(cfg, std::make_unique<ShuffledBackend>());
    auto prompts = numbered_prompts(40);
    auto res = gw.run_batch(prompts, par, "shuffle");
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      ASSERT_EQ(res.items[i].record->response_text, "r:" + prompts[i].text) << "parallelism " << par;
    }
  }
}

TEST(RateLimit, SpacesRequests) {
  BackendConfig cfg = http_config("http://unused");
  cfg.requests_per_second = 100;
  Gateway gw(cfg, std::make_unique<ShuffledBackend>());
  auto start = std::chrono::steady_clock::now();
  gw.run_batch(numbered_prompts(6), 6, "rate");
  auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_GE(elapsed, std::chrono::milliseconds(45));
}
