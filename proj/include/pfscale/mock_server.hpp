#pragma once

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace pfscale {

struct MockReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Request matcher and canned reply. A rule matches when the method and path
/// are equal and the body contains every `body_contains` fragment. `times`
/// limits how often it fires (-1: unlimited).
struct MockRule {
  std::string method = "POST";
  std::string path;
  std::vector<std::string> body_contains;
  MockReply reply;
  int times = -1;
};

struct RecordedRequest {
  std::string method;
  std::string path;
  std::string body;
  std::string request_id;
};

using MockHandler = std::function<MockReply(const std::string& body)>;

/// In-process HTTP server on an ephemeral 127.0.0.1 port.
///
/// Rules are tried in insertion order; the first live match answers. A
/// handler registered for the path answers when no rule matches, otherwise
/// the reply is 404.
class MockServer {
 public:
  MockServer();
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  void add_rule(MockRule rule);
  void set_handler(const std::string& path, MockHandler handler);

  /// Fixture format:
  ///   {"rules": [{"method": "POST", "path": "/score", "body_contains": ["..."],
  ///               "status": 200, "body": {...} | "body_text": "...", "times": 1}]}
  void load_fixture(const nlohmann::json& fixture);
  void load_fixture_file(const std::filesystem::path& path);

  std::string url() const;
  int port() const { return port_; }
  std::vector<RecordedRequest> requests() const;
  void stop();

 private:
  MockReply dispatch(const std::string& method, const std::string& path, const std::string& body,
                     const std::string& request_id);

  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  mutable std::mutex mutex_;
  std::vector<MockRule> rules_;
  std::vector<std::pair<std::string, MockHandler>> handlers_;
  std::vector<RecordedRequest> log_;
};

/// Chat-completions reply with one choice. An empty stop_reason is sent as
/// null (end of sequence).
std::string mock_chat_reply(const std::string& content, const std::string& finish_reason,
                            const std::string& stop_reason);
std::string mock_score_reply(const std::vector<double>& scores);

}  // namespace pfscale
