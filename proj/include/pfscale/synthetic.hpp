#pragma once

/**
 * Synthetic backends with computable ground truth.
 *
 * DiscreteHMM maps a hidden Markov model onto the step-wise interface: each
 * generated step encodes one sampled hidden state and its reward is the
 * emission likelihood of the observed symbol. With `last` aggregation and a
 * log transform, the softmax resampling weights are exactly the incremental
 * emission likelihoods, which turns particle_filter() into the bootstrap
 * filter and makes hmm_exact_filtering() its ground truth.
 *
 * NoisyRewardTask is a branching path-finding task whose per-step reward is
 * the correct-prefix indicator plus clamped Gaussian noise, standing in for
 * an imperfect process reward model.
 */

#include "pfscale/smc.hpp"
#include "pfscale/ssm.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pfscale {

struct DiscreteHMM {
  int n_states = 0;
  int n_symbols = 0;
  std::vector<double> initial;
  std::vector<std::vector<double>> transition_matrix;
  std::vector<std::vector<double>> emission_matrix;
  int horizon = 1;

  /// Throws std::invalid_argument unless every row sums to 1 within 1e-12.
  void validate() const;

  /// Rows drawn from a flat Dirichlet.
  static DiscreteHMM random(int n_states, int n_symbols, int horizon, Rng& rng);
  std::vector<int> sample_observations(Rng& rng) const;
};

/// marginals[t][s] = p(x_t = s | o_1..o_t).
using Marginals = std::vector<std::vector<double>>;

/// Normalized forward recursion. Throws std::domain_error when the
/// observation sequence has zero likelihood.
Marginals hmm_exact_filtering(const DiscreteHMM& hmm, std::span<const int> observations);

/// Hidden state encoded in a step produced by the HMM transition backend.
int hmm_state_of(const Step& step);

struct BackendPair {
  std::unique_ptr<TransitionBackend> transition;
  std::unique_ptr<RewardBackend> reward;
};

BackendPair hmm_as_backends(const DiscreteHMM& hmm, std::vector<int> observations);

/// Configuration under which particle_filter() is the bootstrap filter.
PFConfig hmm_filter_config(const DiscreteHMM& hmm, int n_particles, std::uint64_t seed);

/// Filtering marginals estimated by particle_filter() under
/// hmm_filter_config(): at each time t, the softmax-weighted histogram of the
/// particles' state at t, taken before that round's resampling.
Marginals hmm_particle_marginals(const DiscreteHMM& hmm, std::span<const int> observations,
                                 int n_particles, std::uint64_t seed);

/// Mean over time of the total-variation distance between two marginal tables.
double mean_tv_distance(const Marginals& a, const Marginals& b);

enum class NoiseModel { per_draw, per_prefix };

struct NoisyRewardTask {
  int branching = 4;
  int depth = 4;
  std::vector<int> correct_path;
  double reward_noise_sigma = 0.0;
  /// Reward of a step that leaves the correct path, before noise.
  double wrong_reward = 0.0;
  NoiseModel noise = NoiseModel::per_draw;
  std::uint64_t seed = 0;

  void validate() const;
  static NoisyRewardTask random(int branching, int depth, double sigma, std::uint64_t seed);

  /// Path as letters, e.g. "DACB".
  std::string gold_answer() const;
  std::string question_text() const;
  /// Length of the prefix of `steps` that follows correct_path.
  std::size_t correct_prefix(std::span<const Step> steps) const;
  bool is_correct(std::span<const Step> steps) const;

  nlohmann::json to_json() const;
  static NoisyRewardTask from_json(const nlohmann::json& j);
  /// Task whose correct path is spelled by `answer` ("DACB").
  static NoisyRewardTask from_answer(std::string_view answer, int branching, double sigma,
                                     std::uint64_t seed);
};

/// Branch chosen by a step of the noisy task, or -1.
int noisy_branch_of(const Step& step);

BackendPair noisy_task_backends(const NoisyRewardTask& task, double generation_temperature = 0.8);

}  // namespace pfscale
