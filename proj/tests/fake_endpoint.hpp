#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

// Completions endpoint on localhost. Each prompt fails `fail_first` times
// with HTTP 503 before succeeding; replies arrive after a random delay so
// completion order differs from submission order.
class FakeEndpoint {
 public:
  int fail_first = 0;
  int status_override = 0;
  bool jitter = true;

  FakeEndpoint() {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = nlohmann::json::parse(req.body);
      const auto prompt = body.at("prompt").get<std::string>();
      int seen;
      {
        std::lock_guard lock(mu_);
        seen = ++hits_[prompt];
        last_body_ = body;
        last_auth_ = req.get_header_value("Authorization");
      }
      if (jitter) {
        std::this_thread::sleep_for(std::chrono::microseconds(std::hash<std::string>{}(prompt) % 3000));
      }
      if (status_override) {
        res.status = status_override;
        res.set_content(R"({"error":{"message":"bad request"}})", "application/json");
        return;
      }
      if (seen <= fail_first) {
        res.status = 503;
        return;
      }
      const bool cut = prompt.find("long") != std::string::npos;
      nlohmann::json reply{{"choices", {{{"text", "reply to " + prompt}, {"finish_reason", cut ? "length" : "stop"}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  int hits(const std::string& prompt) {
    std::lock_guard lock(mu_);
    return hits_[prompt];
  }

  int total_hits() {
    std::lock_guard lock(mu_);
    int n = 0;
    for (auto& [p, c] : hits_) n += c;
    return n;
  }

  nlohmann::json last_body() {
    std::lock_guard lock(mu_);
    return last_body_;
  }

  std::string last_auth() {
    std::lock_guard lock(mu_);
    return last_auth_;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
  std::map<std::string, int> hits_;
  nlohmann::json last_body_;
  std::string last_auth_;
};
