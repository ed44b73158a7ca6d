#pragma once

/**
 * Particle-based inference over step-wise generation.
 *
 * particle_filter()     one filtering pass with resampling every round
 * particle_gibbs()      repeated filtering passes conditioned on a reference
 * parallel_tempering()  several tempered Gibbs chains with reference swaps
 *
 * Rounds are globally synchronized: every active particle advances exactly
 * one step between two resampling barriers, finished particles wait and can
 * still be forked. Per round the engine consumes its RNG in a fixed order
 * (resampling draws, then one child seed per slot for propagation), so seeded
 * runs are reproducible regardless of how backend calls are scheduled.
 */

#include "pfscale/resample.hpp"
#include "pfscale/reward_agg.hpp"
#include "pfscale/ssm.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfscale {

struct PFConfig {
  int n_particles = 16;
  int max_steps = kDefaultMaxSteps;
  AggregationMode aggregation = AggregationMode::prod;
  WeightTransform transform = WeightTransform::identity;
  double softmax_temperature = 1.0;
  double generation_temperature = 0.8;
  std::uint64_t seed = 0;
  /// Upper bound on concurrent backend calls within one round.
  int max_in_flight = 1;

  WeightOptions weight_options() const { return {aggregation, transform}; }
  void validate() const;
};

/// N particles x T Gibbs iterations x M tempered chains.
struct BudgetAllocation {
  int n_particles = 16;
  int gibbs_iterations = 1;
  int parallel_chains = 1;
  std::vector<double> chain_temperatures;

  long long total() const {
    return static_cast<long long>(n_particles) * gibbs_iterations * parallel_chains;
  }
  void validate() const;
};

/// Geometric ladder base * 2^(M-1-k): strictly decreasing, ending at base.
std::vector<double> default_temperature_ladder(int chains, double base);

/// What one resampling round looked like, for records and replay.
struct RoundSnapshot {
  int round = 0;
  std::vector<double> weights;
  std::vector<double> probs;
  /// Parent slot of each slot after resampling; empty for the terminal entry.
  std::vector<int> ancestors;
  std::vector<std::string> digests;
  std::vector<std::string> resampled_digests;
  /// Text of the step each slot gained after resampling, if it gained one.
  std::vector<std::optional<std::string>> appended;
  std::optional<std::string> reference_digest;
};

struct FilterTrace {
  int iteration = 0;
  int chain = 0;
  std::vector<std::string> initial_steps;
  std::vector<RoundSnapshot> rounds;
  /// Weights of the returned set (the terminal entry).
  std::vector<double> final_weights;
  std::vector<double> final_probs;
  std::vector<std::string> final_digests;
  std::optional<std::string> reference;
};

struct SwapRecord {
  int iteration = 0;
  int chain = 0;  // swap between chain and chain + 1
  double probability = 0.0;
  bool accepted = false;
};

struct InferenceTrace {
  std::vector<FilterTrace> filters;
  std::vector<SwapRecord> swaps;
  long long policy_calls = 0;
  long long reward_calls = 0;
};

/// Called once per round on the weighted (pre-resampling) population, and
/// once more on the returned set.
using RoundObserver =
    std::function<void(int round, std::span<const Particle>, const ResampleDistribution&)>;

struct FilterResult {
  std::vector<Particle> particles;
  std::vector<double> final_weights;
};

/// Scores `step` as the continuation of `p` and appends it. Non-model modes
/// take the last entry of score_steps; model mode stores the whole-trajectory
/// score of the new prefix as both step reward and cached whole score.
Particle extend_scored(const Prompt& prompt, RewardBackend& reward, const Particle& p, Step step,
                       AggregationMode mode, int max_steps, Rng& rng);

/// Backend failure inside the engine, with the slot that triggered it.
class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One filtering pass. With a finished `reference`, slot N-1 tracks the
/// reference prefix and is never replaced; the other N-1 slots are drawn from
/// the softmax over all N, so the reference prefix can still be forked.
FilterResult particle_filter(const Prompt& prompt, TransitionBackend& transition,
                             RewardBackend& reward, const PFConfig& cfg,
                             const Particle* reference = nullptr, Rng* rng = nullptr,
                             InferenceTrace* trace = nullptr, const RoundObserver& observer = {});

std::vector<Particle> particle_gibbs(const Prompt& prompt, TransitionBackend& transition,
                                     RewardBackend& reward, const PFConfig& cfg, int iterations,
                                     InferenceTrace* trace = nullptr);

/// Returns one final particle set per chain, hottest chain first.
std::vector<std::vector<Particle>> parallel_tempering(const Prompt& prompt,
                                                      TransitionBackend& transition,
                                                      RewardBackend& reward, const PFConfig& cfg,
                                                      const BudgetAllocation& alloc,
                                                      InferenceTrace* trace = nullptr);

/// Index of the particle with the largest aggregated weight; ties go to the
/// lowest index.
std::size_t select_index(std::span<const double> weights);

/// Index of the finished particle with the largest aggregated weight.
/// Throws std::invalid_argument on an empty set and ContractViolation when a
/// particle is still active.
std::size_t select_answer_index(std::span<const Particle> particles, const WeightOptions& options,
                                RewardBackend* backend = nullptr, const Prompt* prompt = nullptr,
                                Rng* rng = nullptr);

inline const Particle& select_answer(std::span<const Particle> particles,
                                     const WeightOptions& options, RewardBackend* backend = nullptr,
                                     const Prompt* prompt = nullptr, Rng* rng = nullptr) {
  return particles[select_answer_index(particles, options, backend, prompt, rng)];
}

}  // namespace pfscale
