#pragma once

// Prompt dispatch: replay stores, an OpenAI-style completions endpoint, a
// digest-keyed response cache, retries, rate limiting and ordered batches.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "causalfm/corpus.hpp"
#include "causalfm/digest.hpp"
#include "causalfm/error.hpp"
#include "causalfm/io.hpp"
#include "causalfm/query.hpp"

namespace causalfm::gateway {

using corpus::TranscriptRecord;

enum class BackendKind { http, replay };

inline std::string_view to_string(BackendKind k) { return k == BackendKind::http ? "http" : "replay"; }

struct Decoding {
  double temperature = 0.0;
  int max_tokens = 512;
  std::vector<std::string> stop;
  bool operator==(const Decoding&) const = default;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::vector<std::chrono::milliseconds> backoff = {std::chrono::milliseconds(200), std::chrono::milliseconds(800),
                                                    std::chrono::milliseconds(3200)};

  // Delay before attempt `attempt` (1-based; attempt 1 has none). The last
  // schedule entry repeats.
  std::chrono::milliseconds delay_before(int attempt) const {
    if (attempt <= 1 || backoff.empty()) return std::chrono::milliseconds(0);
    auto i = std::min<std::size_t>(static_cast<std::size_t>(attempt - 2), backoff.size() - 1);
    return backoff[i];
  }
};

struct BackendConfig {
  BackendKind kind = BackendKind::replay;
  std::string endpoint;  // http only, e.g. http://127.0.0.1:8080 or https://host/v1/completions
  std::string model;
  Decoding decoding;
  double requests_per_second = 0.0;  // 0 = unlimited
  RetryPolicy retry;
  std::filesystem::path replay_store;  // replay only
  std::string api_key_env = "CAUSALFM_API_KEY";
  std::chrono::milliseconds timeout = std::chrono::seconds(60);
};

inline void validate(const BackendConfig& cfg) {
  if (cfg.model.empty()) throw ConfigError("backend: model name is empty");
  if (cfg.decoding.temperature != 0.0) throw ConfigError("backend: temperature is fixed at 0");
  if (cfg.decoding.max_tokens <= 0) throw ConfigError("backend: max_tokens must be positive");
  if (cfg.requests_per_second < 0) throw ConfigError("backend: negative rate limit");
  if (cfg.retry.max_attempts < 1) throw ConfigError("backend: retry.max_attempts must be >= 1");
  if (cfg.kind == BackendKind::http && cfg.endpoint.empty()) throw ConfigError("backend: http endpoint is empty");
  if (cfg.kind == BackendKind::replay && cfg.replay_store.empty()) throw ConfigError("backend: replay store path is empty");
}

inline nlohmann::json to_json(const Decoding& d) {
  return nlohmann::json{{"max_tokens", d.max_tokens}, {"stop", d.stop}, {"temperature", d.temperature}};
}

// Digest of everything that can change a response. Secrets and file paths
// are left out so equal experiments get equal digests across machines.
inline std::string config_digest(const BackendConfig& cfg) {
  nlohmann::json j{{"decoding", to_json(cfg.decoding)}, {"kind", to_string(cfg.kind)}, {"model", cfg.model}};
  if (cfg.kind == BackendKind::http) j["endpoint"] = cfg.endpoint;
  return sha256_hex(j.dump());
}

inline std::string cache_key(std::string_view model, const Decoding& decoding, std::string_view prompt_text) {
  nlohmann::json j{{"decoding", to_json(decoding)}, {"model", model}, {"prompt", prompt_text}};
  return sha256_hex(j.dump());
}

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Errors

enum class FailureCode { replay_miss, transport, provider, rate_limited };

inline std::string_view to_string(FailureCode c) {
  switch (c) {
    case FailureCode::replay_miss: return "replay_miss";
    case FailureCode::transport: return "transport";
    case FailureCode::provider: return "provider";
    case FailureCode::rate_limited: return "rate_limited";
  }
  return "?";
}

class GatewayError : public Error {
 public:
  GatewayError(FailureCode code, const std::string& message, bool transient = false)
      : Error(std::string(to_string(code)) + ": " + message), code_(code), transient_(transient) {}
  FailureCode code() const { return code_; }
  bool transient() const { return transient_; }

 private:
  FailureCode code_;
  bool transient_;
};

// ---------------------------------------------------------------------------
// Backends: a single attempt each; retries live in the Gateway.

struct Completion {
  std::string text;
  bool truncated = false;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual Completion complete(const std::string& model, const Decoding& decoding, const std::string& prompt) = 0;
};

class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(const std::vector<TranscriptRecord>& records) {
    for (const auto& r : records) store_.try_emplace({r.model_id, r.prompt_text}, r);
  }
  static std::unique_ptr<ReplayBackend> load(const std::filesystem::path& path) {
    return std::make_unique<ReplayBackend>(corpus::load_transcripts(path).records);
  }

  Completion complete(const std::string& model, const Decoding&, const std::string& prompt) override {
    auto it = store_.find({model, prompt});
    if (it == store_.end()) {
      throw GatewayError(FailureCode::replay_miss, "no record for model " + model + ": \"" + prompt + "\"");
    }
    return {it->second.response_text, it->second.truncated};
  }

  std::size_t size() const { return store_.size(); }

 private:
  std::map<std::pair<std::string, std::string>, TranscriptRecord> store_;
};

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must start with http:// or https://: " + url);
  auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported endpoint scheme: " + scheme);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/v1/completions"};
  auto path = url.substr(path_start);
  if (path == "/") path = "/v1/completions";
  return {url.substr(0, path_start), path};
}

// OpenAI-style completions: POST {model, prompt, temperature, max_tokens,
// stop}; reads choices[0].text and choices[0].finish_reason.
class HttpBackend : public Backend {
 public:
  HttpBackend(std::string endpoint, std::string api_key, std::chrono::milliseconds timeout)
      : endpoint_(split_endpoint(endpoint)), api_key_(std::move(api_key)), timeout_(timeout) {}

  static std::unique_ptr<HttpBackend> from_config(const BackendConfig& cfg) {
    std::string key;
    if (const char* v = std::getenv(cfg.api_key_env.c_str())) key = v;
    return std::make_unique<HttpBackend>(cfg.endpoint, key, cfg.timeout);
  }

  Completion complete(const std::string& model, const Decoding& decoding, const std::string& prompt) override {
    httplib::Client client(endpoint_.origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    nlohmann::json body{{"model", model},
                        {"prompt", prompt},
                        {"temperature", decoding.temperature},
                        {"max_tokens", decoding.max_tokens}};
    if (!decoding.stop.empty()) body["stop"] = decoding.stop;

    auto res = client.Post(endpoint_.path, headers, body.dump(), "application/json");
    if (!res) {
      throw GatewayError(FailureCode::transport, httplib::to_string(res.error()) + " (" + endpoint_.origin + ")", true);
    }
    if (res->status == 429) throw GatewayError(FailureCode::rate_limited, "HTTP 429", true);
    if (res->status >= 500) {
      throw GatewayError(FailureCode::transport, "HTTP " + std::to_string(res->status), true);
    }
    nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded()) throw GatewayError(FailureCode::provider, "response is not JSON");
    if (res->status != 200 || j.contains("error")) {
      std::string msg = "HTTP " + std::to_string(res->status);
      if (j.contains("error")) msg += ": " + j["error"].dump();
      throw GatewayError(FailureCode::provider, msg);
    }
    const auto& choices = j.value("choices", nlohmann::json::array());
    if (!choices.is_array() || choices.empty() || !choices[0].contains("text") || !choices[0]["text"].is_string()) {
      throw GatewayError(FailureCode::provider, "response has no choices[0].text");
    }
    Completion c;
    c.text = choices[0]["text"].get<std::string>();
    c.truncated = choices[0].value("finish_reason", std::string()) == "length";
    return c;
  }

 private:
  Endpoint endpoint_;
  std::string api_key_;
  std::chrono::milliseconds timeout_;
};

// ---------------------------------------------------------------------------
// Cache: append-only JSON lines {"created_at", "key", "record"}; the record
// uses the transcript format.

class ResponseCache {
 public:
  ResponseCache() = default;  // in-memory only
  explicit ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    const auto text = read_file(path_);
    auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      auto j = nlohmann::json::parse(lines[i], nullptr, false);
      if (j.is_discarded() || !j.contains("key") || !j.contains("record")) {
        throw ParseError(ParseError::Kind::syntax, path_.string(), i + 1, "malformed cache entry");
      }
      entries_.try_emplace(j["key"].get<std::string>(),
                           corpus::transcript_from_json(j["record"], path_.string(), i + 1));
    }
  }

  std::optional<TranscriptRecord> find(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  // Returns the cached value, or runs `fetch` exactly once per key even when
  // several threads ask concurrently. Failures are not cached.
  TranscriptRecord get_or_fetch(const std::string& key, const std::function<TranscriptRecord()>& fetch) {
    std::shared_future<TranscriptRecord> pending;
    std::promise<TranscriptRecord> mine;
    {
      std::lock_guard lock(mu_);
      if (auto it = entries_.find(key); it != entries_.end()) return it->second;
      if (auto it = in_flight_.find(key); it != in_flight_.end()) {
        pending = it->second;
      } else {
        in_flight_.emplace(key, mine.get_future().share());
      }
    }
    if (pending.valid()) return pending.get();

    try {
      auto record = fetch();
      {
        std::lock_guard lock(mu_);
        append(key, record);
        entries_.emplace(key, record);
        in_flight_.erase(key);
      }
      mine.set_value(record);
      return record;
    } catch (...) {
      {
        std::lock_guard lock(mu_);
        in_flight_.erase(key);
      }
      mine.set_exception(std::current_exception());
      throw;
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

 private:
  void append(const std::string& key, const TranscriptRecord& record) {
    if (path_.empty()) return;
    nlohmann::json j{{"created_at", utc_timestamp()}, {"key", key}, {"record", corpus::to_json(record)}};
    append_file(path_, j.dump() + "\n");
  }

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, TranscriptRecord> entries_;
  std::map<std::string, std::shared_future<TranscriptRecord>> in_flight_;
};

// Spaces request starts at least 1/rate seconds apart across threads.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second) {
    if (per_second > 0) interval_ = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / per_second));
  }

  void acquire() {
    if (interval_ == Clock::duration::zero()) return;
    Clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      auto now = Clock::now();
      slot = std::max(now, next_);
      next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  using Clock = std::chrono::steady_clock;
  std::mutex mu_;
  Clock::duration interval_ = Clock::duration::zero();
  Clock::time_point next_{};
};

// ---------------------------------------------------------------------------

struct BatchItem {
  std::optional<TranscriptRecord> record;
  std::optional<FailureCode> error_code;
  std::string error;
  bool ok() const { return record.has_value(); }
};

struct BatchResult {
  std::string run_id;
  std::vector<BatchItem> items;
  nlohmann::json manifest;
  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [](auto& i) { return !i.ok(); }));
  }
};

class Gateway {
 public:
  using Sleep = std::function<void(std::chrono::milliseconds)>;

  Gateway(BackendConfig cfg, std::unique_ptr<Backend> backend, std::shared_ptr<ResponseCache> cache = nullptr)
      : cfg_(std::move(cfg)), backend_(std::move(backend)), cache_(std::move(cache)), limiter_(cfg_.requests_per_second) {
    validate(cfg_);
    if (!backend_) throw ConfigError("gateway: no backend");
    if (!cache_) cache_ = std::make_shared<ResponseCache>();
  }

  // Builds the backend named by the config. `cache_path` is only used by
  // the http kind; replay responses are served straight from the store.
  static Gateway from_config(const BackendConfig& cfg, const std::filesystem::path& cache_path = {}) {
    validate(cfg);
    if (cfg.kind == BackendKind::replay) return Gateway(cfg, ReplayBackend::load(cfg.replay_store));
    auto cache = cache_path.empty() ? std::make_shared<ResponseCache>() : std::make_shared<ResponseCache>(cache_path);
    return Gateway(cfg, HttpBackend::from_config(cfg), cache);
  }

  void set_sleep(Sleep sleep) { sleep_ = std::move(sleep); }

  const BackendConfig& config() const { return cfg_; }
  std::size_t attempts() const { return attempts_.load(); }

  TranscriptRecord complete(const query::Prompt& prompt) { return complete(prompt.text); }

  TranscriptRecord complete(const std::string& prompt_text) {
    if (cfg_.kind == BackendKind::replay) return fetch(prompt_text);
    return cache_->get_or_fetch(cache_key(cfg_.model, cfg_.decoding, prompt_text), [&] { return fetch(prompt_text); });
  }

  // Output order equals input order for any parallelism; failures stay in
  // their slot. The manifest is written to `manifest_path` when given.
  BatchResult run_batch(const std::vector<query::Prompt>& prompts, std::size_t parallelism, const std::string& run_id,
                        const std::filesystem::path& manifest_path = {}) {
    if (parallelism < 1) throw std::invalid_argument("run_batch: parallelism must be >= 1");
    BatchResult result;
    result.run_id = run_id;
    result.items.resize(prompts.size());
    const auto started = utc_timestamp();

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (auto i = next++; i < prompts.size(); i = next++) {
        auto& item = result.items[i];
        try {
          item.record = complete(prompts[i]);
        } catch (const GatewayError& e) {
          item.error_code = e.code();
          item.error = e.what();
        }
      }
    };
    const auto n_threads = std::min(parallelism, std::max<std::size_t>(prompts.size(), 1));
    if (n_threads == 1) {
      worker();
    } else {
      std::vector<std::thread> threads;
      for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
      for (auto& t : threads) t.join();
    }

    std::map<std::string, std::size_t> by_code;
    for (const auto& item : result.items) {
      if (item.error_code) ++by_code[std::string(to_string(*item.error_code))];
    }
    result.manifest = {{"run_id", run_id},
                       {"backend", to_string(cfg_.kind)},
                       {"model", cfg_.model},
                       {"config_digest", config_digest(cfg_)},
                       {"parallelism", parallelism},
                       {"counts", {{"prompts", prompts.size()}, {"ok", prompts.size() - result.failures()},
                                   {"failed", result.failures()}, {"failed_by_code", by_code}}},
                       {"started_at", started},
                       {"finished_at", utc_timestamp()}};
    if (!manifest_path.empty()) write_file(manifest_path, result.manifest.dump(2) + "\n");
    return result;
  }

 private:
  TranscriptRecord fetch(const std::string& prompt_text) {
    for (int attempt = 1;; ++attempt) {
      if (auto d = cfg_.retry.delay_before(attempt); d.count() > 0) sleep_(d);
      limiter_.acquire();
      ++attempts_;
      try {
        auto c = backend_->complete(cfg_.model, cfg_.decoding, prompt_text);
        return TranscriptRecord{prompt_text, cfg_.model, std::move(c.text), c.truncated};
      } catch (const GatewayError& e) {
        if (!e.transient() || attempt >= cfg_.retry.max_attempts) {
          if (e.transient()) {
            throw GatewayError(e.code(), std::string(e.what()) + " after " + std::to_string(attempt) + " attempts");
          }
          throw;
        }
      }
    }
  }

  BackendConfig cfg_;
  std::unique_ptr<Backend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  RateLimiter limiter_;
  Sleep sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  std::atomic<std::size_t> attempts_{0};
};

}  // namespace causalfm::gateway
