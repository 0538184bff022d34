#pragma once

#include <httplib.h>
// <resolv.h> defines _res, which Eigen uses as a parameter name.
#undef _res
#include <json.hpp>

#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "cerealia/core/error.hpp"
#include "cerealia/ingest/poller.hpp"
#include "cerealia/runtime/alerts.hpp"
#include "cerealia/runtime/checker.hpp"

namespace cerealia::runtime {

/// HTTP front end for one checker:
///   POST /ingest          one {"ts", "values"} sample
///   GET  /alerts?since=N  alerts with sequence > N
///   GET  /status          checker counters
class CheckerService {
 public:
  static constexpr std::size_t kAlertLog = 10000;

  CheckerService(std::unique_ptr<Checker> checker, AttributeSchema schema)
      : checker_(std::move(checker)), schema_(std::move(schema)) {
    if (schema_.names() != checker_->detector().meta().attributes) {
      throw Error(Errc::config, "service schema does not match the detector attributes");
    }
    server_.Post("/ingest", [this](const httplib::Request& req, httplib::Response& res) { ingest(req, res); });
    server_.Get("/alerts", [this](const httplib::Request& req, httplib::Response& res) { alerts(req, res); });
    server_.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, status());
    });
  }

  ~CheckerService() { stop(); }

  /// Binds and serves on a background thread. Port 0 picks a free port.
  int start(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Errc::io, "cannot listen on " + host + ":" + std::to_string(port));
    port_ = bound;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port) {
    port_ = port;
    if (!server_.listen(host, port)) throw Error(Errc::io, "cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
    std::lock_guard lock(mutex_);
    try {
      checker_->finish();
    } catch (const Error&) {
      // the unsaved tail stays in the checker's backlog; nothing more to do on shutdown
    }
  }

  int port() const noexcept { return port_; }

  nlohmann::json status() {
    std::lock_guard lock(mutex_);
    auto j = to_json(checker_->status());
    j["station"] = checker_->config().station;
    j["window_length"] = checker_->config().window.length;
    j["rejected"] = rejected_;
    return j;
  }

 private:
  static void reply(httplib::Response& res, int code, const nlohmann::json& body) {
    res.status = code;
    res.set_content(body.dump(), "application/json");
  }

  static nlohmann::json error_body(Errc code, const std::string& message) {
    return {{"error", {{"code", std::string(errc_name(code))}, {"message", message}}}};
  }

  void ingest(const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mutex_);
    try {
      const auto sample = ingest::sample_from_json(nlohmann::json::parse(req.body), schema_);
      auto step = checker_->push(sample);
      nlohmann::json body{{"accepted", true}, {"classified", step.classification.has_value()}};
      if (step.classification) body["label"] = std::string(to_string(step.classification->label));
      if (step.alert) {
        body["alert"] = to_json(*step.alert);
        log_.push_back(std::move(*step.alert));
        if (log_.size() > kAlertLog) log_.pop_front();
      }
      reply(res, 200, body);
    } catch (const nlohmann::json::exception& e) {
      ++rejected_;
      reply(res, 400, error_body(Errc::parse, e.what()));
    } catch (const Error& e) {
      ++rejected_;
      reply(res, e.code() == Errc::storage ? 503 : 400, error_body(e.code(), e.what()));
    }
  }

  void alerts(const httplib::Request& req, httplib::Response& res) {
    std::uint64_t since = 0;
    if (req.has_param("since")) {
      try {
        since = std::stoull(req.get_param_value("since"));
      } catch (const std::exception&) {
        reply(res, 400, error_body(Errc::parse, "since must be a non-negative integer"));
        return;
      }
    }
    std::lock_guard lock(mutex_);
    nlohmann::json list = nlohmann::json::array();
    for (const auto& a : log_) {
      if (a.sequence > since) list.push_back(to_json(a));
    }
    reply(res, 200, {{"alerts", list}});
  }

  std::unique_ptr<Checker> checker_;
  AttributeSchema schema_;
  httplib::Server server_;
  std::thread thread_;
  std::mutex mutex_;
  std::deque<Alert> log_;
  std::size_t rejected_ = 0;
  int port_ = 0;
};

}  // namespace cerealia::runtime
