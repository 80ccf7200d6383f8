#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

namespace mpa::test {

/// In-process stand-in for the embedding provider with fault injection.
/// Text vectors are [atof(text), 1]; image vectors are [len(b64), 2].
class MockProvider {
 public:
  enum class Fault { None, WrongCount, DimMismatch, BadJson, ClientError, ShortVariants };

  std::atomic<int> fail_next{0};       // answer this many requests with 503
  std::atomic<Fault> fault{Fault::None};
  std::atomic<int> delay_ms{0};        // per request
  std::atomic<bool> stagger{false};    // later request ids answer sooner
  std::atomic<int> requests{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> max_in_flight{0};

  MockProvider() {
    server_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok","encoder_id":"mock","dim":2})", "application/json");
    });
    server_.Post("/v1/embed/text", [this](const httplib::Request& q, httplib::Response& r) { embed(q, r, "texts"); });
    server_.Post("/v1/embed/image",
                 [this](const httplib::Request& q, httplib::Response& r) { embed(q, r, "images_b64"); });
    server_.Post("/v1/variants", [this](const httplib::Request& q, httplib::Response& r) { variants(q, r); });
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw std::runtime_error("mock provider could not bind");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockProvider() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  struct Seen {
    std::string path;
    std::string request_id;
    nlohmann::json body;
    std::chrono::steady_clock::time_point at;
  };
  std::vector<Seen> seen() const {
    std::lock_guard lock(mutex_);
    return seen_;
  }

 private:
  /// Records the request and applies shared faults; false when already answered.
  bool admit(const httplib::Request& q, httplib::Response& res, nlohmann::json& body) {
    ++requests;
    const int now = ++in_flight;
    int prev = max_in_flight.load();
    while (now > prev && !max_in_flight.compare_exchange_weak(prev, now)) {
    }
    body = nlohmann::json::parse(q.body, nullptr, false);
    {
      std::lock_guard lock(mutex_);
      seen_.push_back({q.path, q.get_header_value("X-Request-Id"), body, std::chrono::steady_clock::now()});
    }
    int delay = delay_ms.load();
    if (stagger) delay *= std::max(1, 10 - std::atoi(q.get_header_value("X-Request-Id").c_str()));
    if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    --in_flight;
    int expected = fail_next.load();
    while (expected > 0 && !fail_next.compare_exchange_weak(expected, expected - 1)) {
    }
    if (expected > 0) {
      res.status = 503;
      return false;
    }
    if (fault == Fault::ClientError) {
      res.status = 400;
      res.set_content("bad request", "text/plain");
      return false;
    }
    if (fault == Fault::BadJson) {
      res.set_content("{\"dim\": 2, \"vectors\": [", "application/json");
      return false;
    }
    return true;
  }

  void embed(const httplib::Request& q, httplib::Response& res, const char* field) {
    nlohmann::json body;
    if (!admit(q, res, body)) return;
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& item : body.at(field)) {
      const auto s = item.get<std::string>();
      const bool text = std::string(field) == "texts";
      nlohmann::json v = {text ? std::atof(s.c_str()) : static_cast<double>(s.size()), text ? 1.0 : 2.0};
      if (fault == Fault::DimMismatch && vectors.size() == 1) v.push_back(0.0);
      vectors.push_back(v);
    }
    if (fault == Fault::WrongCount) vectors.erase(vectors.begin());
    res.set_content(nlohmann::json{{"dim", 2}, {"vectors", vectors}}.dump(), "application/json");
  }

  void variants(const httplib::Request& q, httplib::Response& res) {
    nlohmann::json body;
    if (!admit(q, res, body)) return;
    const auto name = body.at("class_name").get<std::string>();
    int n = body.at("n_variants").get<int>() + 1;
    if (fault == Fault::ShortVariants) --n;
    nlohmann::json d = nlohmann::json::array();
    for (int i = 0; i < n; ++i) d.push_back(name + " variant " + std::to_string(i));
    res.set_content(nlohmann::json{{"descriptions", d}}.dump(), "application/json");
  }

  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::vector<Seen> seen_;
};

}  // namespace mpa::test
