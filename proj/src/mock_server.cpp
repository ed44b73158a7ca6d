#include "pfscale/mock_server.hpp"

#include <httplib.h>

#include <fstream>
#include <stdexcept>

namespace pfscale {

MockServer::MockServer() : server_(std::make_unique<httplib::Server>()) {
  auto handle = [this](const httplib::Request& req, httplib::Response& res) {
    const MockReply reply =
        dispatch(req.method, req.path, req.body, req.get_header_value("X-Request-Id"));
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  };
  server_->Post(".*", handle);
  server_->Get(".*", handle);
  port_ = server_->bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw std::runtime_error("mock server could not bind a local port");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

MockServer::~MockServer() { stop(); }

void MockServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void MockServer::add_rule(MockRule rule) {
  std::lock_guard lock(mutex_);
  rules_.push_back(std::move(rule));
}

void MockServer::set_handler(const std::string& path, MockHandler handler) {
  std::lock_guard lock(mutex_);
  handlers_.emplace_back(path, std::move(handler));
}

void MockServer::load_fixture(const nlohmann::json& fixture) {
  for (const auto& r : fixture.at("rules")) {
    MockRule rule;
    rule.method = r.value("method", "POST");
    rule.path = r.at("path").get<std::string>();
    rule.body_contains = r.value("body_contains", std::vector<std::string>{});
    rule.reply.status = r.value("status", 200);
    if (r.contains("body")) rule.reply.body = r["body"].dump();
    else rule.reply.body = r.value("body_text", "");
    rule.times = r.value("times", -1);
    add_rule(std::move(rule));
  }
}

void MockServer::load_fixture_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mock fixture " + path.string());
  load_fixture(nlohmann::json::parse(in));
}

std::string MockServer::url() const { return "http://127.0.0.1:" + std::to_string(port_); }

std::vector<RecordedRequest> MockServer::requests() const {
  std::lock_guard lock(mutex_);
  return log_;
}

MockReply MockServer::dispatch(const std::string& method, const std::string& path,
                               const std::string& body, const std::string& request_id) {
  MockHandler handler;
  {
    std::lock_guard lock(mutex_);
    log_.push_back({method, path, body, request_id});
    for (auto& rule : rules_) {
      if (rule.times == 0 || rule.method != method || rule.path != path) continue;
      bool all = true;
      for (const auto& frag : rule.body_contains) all = all && body.find(frag) != std::string::npos;
      if (!all) continue;
      if (rule.times > 0) --rule.times;
      return rule.reply;
    }
    for (const auto& [p, h] : handlers_)
      if (p == path) handler = h;
  }
  if (handler) return handler(body);
  return {404, R"({"error":"no matching mock rule"})", "application/json"};
}

std::string mock_chat_reply(const std::string& content, const std::string& finish_reason,
                            const std::string& stop_reason) {
  nlohmann::json choice = {{"index", 0},
                           {"message", {{"role", "assistant"}, {"content", content}}},
                           {"finish_reason", finish_reason}};
  choice["stop_reason"] = stop_reason.empty() ? nlohmann::json(nullptr) : nlohmann::json(stop_reason);
  return nlohmann::json{{"id", "mock"}, {"object", "chat.completion"}, {"choices", {choice}}}.dump();
}

std::string mock_score_reply(const std::vector<double>& scores) {
  return nlohmann::json{{"scores", scores}}.dump();
}

}  // namespace pfscale
