#pragma once

/**
 * State-space view of step-wise generation.
 *
 * A trajectory is a sequence of Steps produced by a TransitionBackend (the
 * policy) and scored step by step by a RewardBackend (the reward model).
 * Each step reward is used directly as the soft acceptance weight of that
 * step; no Bernoulli acceptance draw is ever sampled.
 *
 * Particles are plain values. fork() returns an independent deep copy, so a
 * resampled population never shares mutable state with its parents.
 */

#include "pfscale/rng.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pfscale {

/// Stop sequence that delimits steps. Excluded from step text and
/// re-prefixed whenever a trajectory is rendered.
inline constexpr std::string_view kStepDelimiter = "## Step";

inline constexpr int kDefaultMaxSteps = 40;
inline constexpr int kDefaultMaxTokensPerStep = 512;

/// System prompt used for live policies.
extern const std::string kDefaultSystemPrompt;

struct Prompt {
  std::string question_id;
  std::string system_text = kDefaultSystemPrompt;
  std::string question_text;

  Prompt() = default;
  Prompt(std::string id, std::string question);
  Prompt(std::string id, std::string system, std::string question);
};

enum class FinishReason { continuing, eos, max_tokens };

std::string_view to_string(FinishReason reason);
FinishReason finish_reason_from_string(std::string_view name);

struct Step {
  std::string text;
  FinishReason finish = FinishReason::continuing;

  Step() = default;
  Step(std::string t, FinishReason f);

  bool terminal() const { return finish != FinishReason::continuing; }
  bool operator==(const Step&) const = default;
};

using StepRewardVector = std::vector<double>;

enum class ParticleStatus { active, finished };

struct LineageEntry {
  int round = 0;
  int parent = 0;
  bool operator==(const LineageEntry&) const = default;
};

/// Raised when a caller breaks a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Particle {
 public:
  Particle() = default;

  const std::vector<Step>& steps() const { return steps_; }
  const StepRewardVector& step_rewards() const { return rewards_; }
  ParticleStatus status() const { return status_; }
  bool finished() const { return status_ == ParticleStatus::finished; }
  const std::vector<LineageEntry>& lineage() const { return lineage_; }
  std::size_t size() const { return steps_.size(); }

  /// Whole-trajectory score of the current prefix, when one was computed.
  const std::optional<double>& whole_score() const { return whole_score_; }
  void set_whole_score(double score) { whole_score_ = score; }

  /// Copy of the first `length` steps. Finished only if the prefix is
  /// itself terminal; lineage is not carried over.
  Particle prefix(std::size_t length, int max_steps) const;

  bool operator==(const Particle&) const = default;

 private:
  friend Particle extend(const Particle&, Step, double, int);
  friend Particle fork(const Particle&, int, int);

  std::vector<Step> steps_;
  StepRewardVector rewards_;
  ParticleStatus status_ = ParticleStatus::active;
  std::vector<LineageEntry> lineage_;
  std::optional<double> whole_score_;
};

/// Appends one scored step. Throws ContractViolation on a finished particle.
Particle extend(const Particle& p, Step step, double reward, int max_steps = kDefaultMaxSteps);

/// Deep copy with (round, parent) appended to the lineage.
Particle fork(const Particle& p, int round, int parent);

/// Full text of a trajectory, with the step delimiter re-prefixed.
std::string trajectory_text(std::span<const Step> steps);
inline std::string trajectory_text(const Particle& p) { return trajectory_text(p.steps()); }

/// 64-bit FNV-1a over step texts and finish reasons, hex-encoded.
std::string digest(std::span<const Step> steps);
inline std::string digest(const Particle& p) { return digest(p.steps()); }

/// Policy side of the state-space model.
///
/// Synthetic implementations must be pure functions of their inputs and the
/// supplied RNG stream. Live implementations ignore the stream and report
/// deterministic() == false.
class TransitionBackend {
 public:
  virtual ~TransitionBackend() = default;

  virtual Step init_step(const Prompt& prompt, Rng& rng) = 0;
  virtual Step next_step(const Prompt& prompt, std::span<const Step> prior, Rng& rng) = 0;
  virtual double generation_temperature() const = 0;
  virtual bool deterministic() const { return true; }
};

/// Reward side. score_steps returns one value per step, order-aligned;
/// score_whole returns one scalar for the whole (possibly partial) answer.
class RewardBackend {
 public:
  virtual ~RewardBackend() = default;

  virtual StepRewardVector score_steps(const Prompt& prompt, std::span<const Step> steps,
                                       Rng& rng) = 0;
  virtual double score_whole(const Prompt& prompt, std::span<const Step> steps, Rng& rng) = 0;
  virtual bool supports_whole() const { return true; }
  virtual bool deterministic() const { return true; }
};

}  // namespace pfscale
