#pragma once

/**
 * Wire-protocol clients for live policy and reward models.
 *
 * Policy: OpenAI-compatible chat completions. The request continues an
 * assistant message that ends with the step delimiter, and generation stops
 * at the next delimiter, so one call yields exactly one step.
 *
 * Reward: a small JSON contract.
 *
 *   POST {reward_url}/score
 *   {"input": "...", "mode": "per_step"|"whole", "question": "...",
 *    "reward_token": "<reward_token>", "steps": ["## Step 1: ...", ...]}
 *   -> {"scores": [0.9, 0.4, ...]}
 *
 * "input" is the rendered reward-model text: per_step mode places the reward
 * token after every step, whole mode only after the last one. Servers that
 * score through a chat template can tokenize "input" directly.
 *
 * Transport failures, 408, 429 and 5xx replies are retried with exponential
 * backoff under the same request id; other 4xx replies and malformed bodies
 * fail immediately.
 */

#include "pfscale/ssm.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfscale {

inline constexpr std::string_view kRewardToken = "<reward_token>";

struct GenerationRequest {
  std::string model;
  std::string system_text;
  std::string question_text;
  /// Prior steps with delimiters re-prefixed, ending in the delimiter.
  std::string prior_steps;
  std::vector<std::string> stop_sequences{std::string(kStepDelimiter)};
  int max_tokens = kDefaultMaxTokensPerStep;
  double temperature = 0.8;
  std::optional<std::uint64_t> seed;
};

GenerationRequest make_generation_request(const Prompt& prompt, std::span<const Step> prior,
                                          std::string model, int max_tokens, double temperature,
                                          std::optional<std::uint64_t> seed);

nlohmann::json chat_request_body(const GenerationRequest& req);

/// Maps a chat-completions reply to a Step:
///   finish_reason "length"                 -> max_tokens
///   "stop" with a string stop_reason       -> continuing (hit the delimiter)
///   "stop" with a null/numeric stop_reason -> eos
///   "stop" without stop_reason             -> eos iff the text holds \boxed
/// An empty text is always eos.
Step parse_chat_response(const nlohmann::json& reply);

enum class ScoreMode { per_step, whole };

struct PRMScoreRequest {
  std::string question_text;
  /// Step texts with the delimiter re-prefixed.
  std::vector<std::string> steps;
  ScoreMode mode = ScoreMode::per_step;
};

PRMScoreRequest make_score_request(const Prompt& prompt, std::span<const Step> steps,
                                   ScoreMode mode);

/// Reward-model input text. Each step loses its trailing whitespace and gets
/// exactly one newline; the reward token plus newline follows every step in
/// per_step mode and only the last step in whole mode.
std::string render_reward_input(const PRMScoreRequest& req);

nlohmann::json score_request_body(const PRMScoreRequest& req);

/// Reads {"scores": [...]}; throws ProtocolError on a count mismatch, a
/// non-numeric entry or a value outside [0, 1].
std::vector<double> parse_score_response(const nlohmann::json& reply, std::size_t expected);

class GatewayError : public std::runtime_error {
 public:
  GatewayError(std::string request_id, int attempts, const std::string& what);
  const std::string& request_id() const { return request_id_; }
  int attempts() const { return attempts_; }

 private:
  std::string request_id_;
  int attempts_;
};

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::string request_id, const std::string& what);
  const std::string& request_id() const { return request_id_; }

 private:
  std::string request_id_;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{8000};
  double multiplier = 2.0;

  /// Delay before retry number `retry` (1-based).
  std::chrono::milliseconds delay_for(int retry) const;
};

/// Bounds concurrent calls to one endpoint.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit);
  void acquire() { sem_.acquire(); }
  void release() { sem_.release(); }
  int limit() const { return limit_; }

 private:
  int limit_;
  std::counting_semaphore<4096> sem_;
};

struct CallStats {
  std::atomic<long long> calls{0};
  std::atomic<long long> retries{0};
  std::atomic<long long> failures{0};
};

struct EndpointOptions {
  std::string url;
  std::string api_key;
  std::chrono::seconds timeout{60};
  RetryPolicy retry;
  std::shared_ptr<InFlightLimiter> limiter;
};

struct HttpReply {
  nlohmann::json body;
  std::string request_id;
  int attempts = 1;
};

/// JSON-over-HTTP POST with retries. Shareable across threads.
class HttpEndpoint {
 public:
  explicit HttpEndpoint(EndpointOptions options);

  HttpReply post(const std::string& path, const nlohmann::json& body);
  const CallStats& stats() const { return *stats_; }
  std::string next_request_id();

 private:
  EndpointOptions options_;
  std::string scheme_host_port_;
  std::string base_path_;
  std::shared_ptr<CallStats> stats_;
  std::atomic<std::uint64_t> counter_{0};
  std::uint64_t client_tag_;
};

struct PolicyOptions {
  EndpointOptions endpoint;
  std::string model = "default";
  int max_tokens = kDefaultMaxTokensPerStep;
  double temperature = 0.8;
};

class PolicyClient final : public TransitionBackend {
 public:
  explicit PolicyClient(PolicyOptions options);

  Step generate_step(const GenerationRequest& req);

  Step init_step(const Prompt& prompt, Rng& rng) override;
  Step next_step(const Prompt& prompt, std::span<const Step> prior, Rng& rng) override;
  double generation_temperature() const override { return options_.temperature; }
  bool deterministic() const override { return false; }
  const CallStats& stats() const { return endpoint_.stats(); }

 private:
  PolicyOptions options_;
  HttpEndpoint endpoint_;
};

class RewardClient final : public RewardBackend {
 public:
  explicit RewardClient(EndpointOptions options);

  std::vector<double> score_steps_prm(const PRMScoreRequest& req);
  double score_orm(const PRMScoreRequest& req);

  StepRewardVector score_steps(const Prompt& prompt, std::span<const Step> steps,
                               Rng& rng) override;
  double score_whole(const Prompt& prompt, std::span<const Step> steps, Rng& rng) override;
  bool deterministic() const override { return false; }
  const CallStats& stats() const { return endpoint_.stats(); }

 private:
  HttpEndpoint endpoint_;
};

}  // namespace pfscale
