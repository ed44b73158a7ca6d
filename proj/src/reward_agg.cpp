#include "pfscale/reward_agg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace pfscale {

std::string_view to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::prod: return "prod";
    case AggregationMode::min: return "min";
    case AggregationMode::last: return "last";
    case AggregationMode::model: return "model";
  }
  return "prod";
}

AggregationMode aggregation_from_string(std::string_view name) {
  if (name == "prod") return AggregationMode::prod;
  if (name == "min") return AggregationMode::min;
  if (name == "last") return AggregationMode::last;
  if (name == "model") return AggregationMode::model;
  throw std::invalid_argument("unknown aggregation mode: " + std::string(name));
}

std::string_view to_string(WeightTransform transform) {
  switch (transform) {
    case WeightTransform::identity: return "identity";
    case WeightTransform::logit: return "logit";
    case WeightTransform::log: return "log";
  }
  return "identity";
}

WeightTransform weight_transform_from_string(std::string_view name) {
  if (name == "identity" || name == "none") return WeightTransform::identity;
  if (name == "logit") return WeightTransform::logit;
  if (name == "log") return WeightTransform::log;
  throw std::invalid_argument("unknown weight transform: " + std::string(name));
}

double apply_transform(double score, WeightTransform transform) {
  switch (transform) {
    case WeightTransform::identity: return score;
    case WeightTransform::logit: {
      const double p = std::clamp(score, kLogitEpsilon, 1.0 - kLogitEpsilon);
      return std::log(p) - std::log1p(-p);
    }
    case WeightTransform::log: return std::log(score);
  }
  return score;
}

double aggregate(std::span<const double> rewards, AggregationMode mode,
                 std::optional<double> whole_score) {
  if (rewards.empty()) throw std::invalid_argument("aggregate: no step has been scored yet");
  if ((mode == AggregationMode::model) != whole_score.has_value())
    throw std::invalid_argument("aggregate: whole_score is required exactly for model mode");
  switch (mode) {
    case AggregationMode::prod:
      return std::accumulate(rewards.begin(), rewards.end(), 1.0, std::multiplies<>());
    case AggregationMode::min: return *std::min_element(rewards.begin(), rewards.end());
    case AggregationMode::last: return rewards.back();
    case AggregationMode::model: return *whole_score;
  }
  return 0.0;
}

ScoringError::ScoringError(std::size_t particle_index, const std::string& what)
    : std::runtime_error("particle " + std::to_string(particle_index) + ": " + what),
      index_(particle_index) {}

std::vector<double> weights_for(std::span<const Particle> particles, const WeightOptions& options,
                                RewardBackend* backend, const Prompt* prompt, Rng* rng) {
  std::vector<double> out;
  out.reserve(particles.size());
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const Particle& p = particles[i];
    if (p.step_rewards().empty()) throw ScoringError(i, "particle has no scored step");
    std::optional<double> whole;
    if (options.mode == AggregationMode::model) {
      whole = p.whole_score();
      if (!whole) {
        if (backend == nullptr || prompt == nullptr || rng == nullptr)
          throw ScoringError(i, "model aggregation needs a reward backend");
        try {
          whole = backend->score_whole(*prompt, p.steps(), *rng);
        } catch (const std::exception& e) {
          throw ScoringError(i, e.what());
        }
      }
    }
    out.push_back(apply_transform(aggregate(p.step_rewards(), options.mode, whole),
                                  options.transform));
  }
  return out;
}

}  // namespace pfscale
