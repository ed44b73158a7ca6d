#include "pfscale/gateway.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

namespace pfscale {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint url needs a scheme: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http")
    throw std::invalid_argument("only http:// endpoints are supported (got " + scheme + ")");
  const std::size_t path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  if (path_start != std::string::npos) out.path = url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

class LimiterGuard {
 public:
  explicit LimiterGuard(InFlightLimiter* l) : l_(l) {
    if (l_ != nullptr) l_->acquire();
  }
  ~LimiterGuard() {
    if (l_ != nullptr) l_->release();
  }
  LimiterGuard(const LimiterGuard&) = delete;
  LimiterGuard& operator=(const LimiterGuard&) = delete;

 private:
  InFlightLimiter* l_;
};

std::optional<std::uint64_t> request_seed(Rng& rng) { return rng.next_u64() >> 33; }

std::vector<double> checked_scores(const HttpReply& reply, std::size_t expected) {
  try {
    return parse_score_response(reply.body, expected);
  } catch (const ProtocolError& e) {
    throw ProtocolError(reply.request_id, e.what());
  }
}

}  // namespace

GenerationRequest make_generation_request(const Prompt& prompt, std::span<const Step> prior,
                                          std::string model, int max_tokens, double temperature,
                                          std::optional<std::uint64_t> seed) {
  GenerationRequest req;
  req.model = std::move(model);
  req.system_text = prompt.system_text;
  req.question_text = prompt.question_text;
  req.prior_steps = trajectory_text(prior) + std::string(kStepDelimiter);
  req.max_tokens = max_tokens;
  req.temperature = temperature;
  req.seed = seed;
  return req;
}

nlohmann::json chat_request_body(const GenerationRequest& req) {
  if (std::find(req.stop_sequences.begin(), req.stop_sequences.end(), kStepDelimiter) ==
      req.stop_sequences.end())
    throw std::invalid_argument("generation request must stop at the step delimiter");
  nlohmann::json body = {
      {"model", req.model},
      {"messages",
       {{{"role", "system"}, {"content", req.system_text}},
        {{"role", "user"}, {"content", req.question_text}},
        {{"role", "assistant"}, {"content", req.prior_steps}}}},
      {"stop", req.stop_sequences},
      {"max_tokens", req.max_tokens},
      {"temperature", req.temperature},
      {"n", 1},
      {"continue_final_message", true},
      {"add_generation_prompt", false},
  };
  if (req.seed) body["seed"] = *req.seed;
  return body;
}

Step parse_chat_response(const nlohmann::json& reply) {
  if (!reply.is_object() || !reply.contains("choices") || !reply["choices"].is_array() ||
      reply["choices"].empty())
    throw ProtocolError("", "chat reply has no choices");
  const auto& choice = reply["choices"][0];
  std::string text;
  if (choice.contains("message") && choice["message"].contains("content") &&
      choice["message"]["content"].is_string()) {
    text = choice["message"]["content"].get<std::string>();
  } else if (choice.contains("text") && choice["text"].is_string()) {
    text = choice["text"].get<std::string>();
  } else {
    throw ProtocolError("", "chat reply choice has no text content");
  }
  if (!choice.contains("finish_reason") || !choice["finish_reason"].is_string())
    throw ProtocolError("", "chat reply has no finish_reason");
  const std::string reason = choice["finish_reason"].get<std::string>();

  FinishReason finish;
  if (reason == "length") {
    finish = FinishReason::max_tokens;
  } else if (reason == "stop") {
    if (choice.contains("stop_reason")) {
      finish = choice["stop_reason"].is_string() ? FinishReason::continuing : FinishReason::eos;
    } else {
      finish = text.find("\\boxed") != std::string::npos ? FinishReason::eos
                                                          : FinishReason::continuing;
    }
  } else {
    throw ProtocolError("", "unsupported finish_reason: " + reason);
  }
  if (text.empty()) finish = finish == FinishReason::max_tokens ? finish : FinishReason::eos;
  return Step(std::move(text), finish);
}

PRMScoreRequest make_score_request(const Prompt& prompt, std::span<const Step> steps,
                                   ScoreMode mode) {
  PRMScoreRequest req;
  req.question_text = prompt.question_text;
  req.mode = mode;
  for (const auto& s : steps) req.steps.push_back(std::string(kStepDelimiter) + s.text);
  return req;
}

std::string render_reward_input(const PRMScoreRequest& req) {
  if (req.steps.empty()) throw std::invalid_argument("reward request needs at least one step");
  std::string out;
  for (std::size_t i = 0; i < req.steps.size(); ++i) {
    std::string_view step = req.steps[i];
    while (!step.empty() && (step.back() == '\n' || step.back() == ' ' || step.back() == '\r'))
      step.remove_suffix(1);
    out += step;
    out += '\n';
    if (req.mode == ScoreMode::per_step || i + 1 == req.steps.size()) {
      out += kRewardToken;
      out += '\n';
    }
  }
  return out;
}

nlohmann::json score_request_body(const PRMScoreRequest& req) {
  return {{"question", req.question_text},
          {"steps", req.steps},
          {"mode", req.mode == ScoreMode::per_step ? "per_step" : "whole"},
          {"reward_token", kRewardToken},
          {"input", render_reward_input(req)}};
}

std::vector<double> parse_score_response(const nlohmann::json& reply, std::size_t expected) {
  if (!reply.is_object() || !reply.contains("scores") || !reply["scores"].is_array())
    throw ProtocolError("", "score reply has no scores array");
  const auto& arr = reply["scores"];
  if (arr.size() != expected)
    throw ProtocolError("", "expected " + std::to_string(expected) + " scores, got " +
                                std::to_string(arr.size()));
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number()) throw ProtocolError("", "non-numeric score");
    const double d = v.get<double>();
    if (!std::isfinite(d) || d < 0.0 || d > 1.0) throw ProtocolError("", "score outside [0, 1]");
    out.push_back(d);
  }
  return out;
}

GatewayError::GatewayError(std::string request_id, int attempts, const std::string& what)
    : std::runtime_error("request " + request_id + " failed after " + std::to_string(attempts) +
                         " attempt(s): " + what),
      request_id_(std::move(request_id)),
      attempts_(attempts) {}

ProtocolError::ProtocolError(std::string request_id, const std::string& what)
    : std::runtime_error(request_id.empty() ? "protocol error: " + what
                                            : "protocol error in " + request_id + ": " + what),
      request_id_(std::move(request_id)) {}

std::chrono::milliseconds RetryPolicy::delay_for(int retry) const {
  const double scaled = static_cast<double>(base_delay.count()) * std::pow(multiplier, retry - 1);
  const double capped = std::min(scaled, static_cast<double>(max_delay.count()));
  return std::chrono::milliseconds(static_cast<long long>(capped));
}

InFlightLimiter::InFlightLimiter(int limit) : limit_(limit), sem_(std::clamp(limit, 1, 4096)) {
  if (limit < 1) throw std::invalid_argument("in-flight limit must be >= 1");
}

HttpEndpoint::HttpEndpoint(EndpointOptions options)
    : options_(std::move(options)), stats_(std::make_shared<CallStats>()) {
  const ParsedUrl u = parse_url(options_.url);
  scheme_host_port_ = u.scheme_host_port;
  base_path_ = u.path;
  client_tag_ = std::random_device{}();
}

std::string HttpEndpoint::next_request_id() {
  char buf[48];
  std::snprintf(buf, sizeof buf, "pfs-%08llx-%llu", static_cast<unsigned long long>(client_tag_),
                static_cast<unsigned long long>(counter_.fetch_add(1) + 1));
  return buf;
}

HttpReply HttpEndpoint::post(const std::string& path, const nlohmann::json& body) {
  const std::string request_id = next_request_id();
  const std::string payload = body.dump();
  httplib::Headers headers = {{"X-Request-Id", request_id}};
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  LimiterGuard guard(options_.limiter.get());
  ++stats_->calls;
  std::string last_error;
  const int attempts_allowed = options_.retry.max_retries + 1;
  for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
    if (attempt > 1) {
      ++stats_->retries;
      std::this_thread::sleep_for(options_.retry.delay_for(attempt - 1));
    }
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    auto res = client.Post(base_path_ + path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      try {
        return {nlohmann::json::parse(res->body), request_id, attempt};
      } catch (const nlohmann::json::exception& e) {
        ++stats_->failures;
        throw ProtocolError(request_id, std::string("reply is not JSON: ") + e.what());
      }
    }
    last_error = "HTTP " + std::to_string(res->status);
    if (!retryable_status(res->status)) {
      ++stats_->failures;
      throw GatewayError(request_id, attempt, last_error + ": " + res->body.substr(0, 200));
    }
  }
  ++stats_->failures;
  throw GatewayError(request_id, attempts_allowed, last_error);
}

PolicyClient::PolicyClient(PolicyOptions options)
    : options_(std::move(options)), endpoint_(options_.endpoint) {}

Step PolicyClient::generate_step(const GenerationRequest& req) {
  const HttpReply reply = endpoint_.post("/v1/chat/completions", chat_request_body(req));
  try {
    return parse_chat_response(reply.body);
  } catch (const ProtocolError& e) {
    throw ProtocolError(reply.request_id, e.what());
  } catch (const std::invalid_argument& e) {
    throw ProtocolError(reply.request_id, e.what());
  }
}

Step PolicyClient::init_step(const Prompt& prompt, Rng& rng) { return next_step(prompt, {}, rng); }

Step PolicyClient::next_step(const Prompt& prompt, std::span<const Step> prior, Rng& rng) {
  return generate_step(make_generation_request(prompt, prior, options_.model, options_.max_tokens,
                                               options_.temperature, request_seed(rng)));
}

RewardClient::RewardClient(EndpointOptions options) : endpoint_(std::move(options)) {}

std::vector<double> RewardClient::score_steps_prm(const PRMScoreRequest& req) {
  if (req.steps.empty()) throw std::invalid_argument("score request needs at least one step");
  PRMScoreRequest r = req;
  r.mode = ScoreMode::per_step;
  return checked_scores(endpoint_.post("/score", score_request_body(r)), r.steps.size());
}

double RewardClient::score_orm(const PRMScoreRequest& req) {
  if (req.steps.empty()) throw std::invalid_argument("score request needs at least one step");
  PRMScoreRequest r = req;
  r.mode = ScoreMode::whole;
  return checked_scores(endpoint_.post("/score", score_request_body(r)), 1).front();
}

StepRewardVector RewardClient::score_steps(const Prompt& prompt, std::span<const Step> steps, Rng&) {
  return score_steps_prm(make_score_request(prompt, steps, ScoreMode::per_step));
}

double RewardClient::score_whole(const Prompt& prompt, std::span<const Step> steps, Rng&) {
  return score_orm(make_score_request(prompt, steps, ScoreMode::whole));
}

}  // namespace pfscale
