#pragma once

#include "pfscale/ssm.hpp"

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pfscale {

/// How a step-reward history collapses into one particle weight.
enum class AggregationMode { prod, min, last, model };

std::string_view to_string(AggregationMode mode);
AggregationMode aggregation_from_string(std::string_view name);

/// Optional monotone map applied to aggregated scores before the softmax.
/// identity is the default. logit spreads [0,1] scores so that the softmax
/// is not near-uniform; log turns likelihoods into log-likelihoods.
enum class WeightTransform { identity, logit, log };

std::string_view to_string(WeightTransform transform);
WeightTransform weight_transform_from_string(std::string_view name);

/// Scores are clamped to [kLogitEpsilon, 1 - kLogitEpsilon] before logit.
inline constexpr double kLogitEpsilon = 1e-6;

double apply_transform(double score, WeightTransform transform);

/// Collapses a reward history. whole_score must be present iff mode == model.
/// Throws std::invalid_argument on an empty vector or a missing/extra score.
double aggregate(std::span<const double> rewards, AggregationMode mode,
                 std::optional<double> whole_score = std::nullopt);

/// Backend failure while scoring one particle.
class ScoringError : public std::runtime_error {
 public:
  ScoringError(std::size_t particle_index, const std::string& what);
  std::size_t particle_index() const { return index_; }

 private:
  std::size_t index_;
};

struct WeightOptions {
  AggregationMode mode = AggregationMode::prod;
  WeightTransform transform = WeightTransform::identity;
};

/// One weight per particle, recomputed from each full partial trajectory.
///
/// In model mode a particle's cached whole score is used when present;
/// otherwise `backend` is queried once for that particle. Failures are
/// rethrown as ScoringError carrying the particle index.
std::vector<double> weights_for(std::span<const Particle> particles, const WeightOptions& options,
                                RewardBackend* backend = nullptr, const Prompt* prompt = nullptr,
                                Rng* rng = nullptr);

}  // namespace pfscale
