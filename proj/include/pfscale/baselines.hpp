#pragma once

#include "pfscale/reward_agg.hpp"
#include "pfscale/smc.hpp"
#include "pfscale/ssm.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pfscale {

enum class BonSelection { bon, wbon };

struct BaselineResult {
  std::vector<Step> trajectory;
  std::size_t index = 0;
  double score = 0.0;
  /// The selected trajectory has no extractable boxed answer.
  bool parse_failure = false;
  /// One entry per complete candidate considered, in generation order.
  std::vector<std::vector<Step>> candidates;
  std::vector<double> scores;
  std::vector<std::optional<std::string>> answers;
  long long policy_calls = 0;
  long long reward_calls = 0;
};

struct BaselineConfig {
  int max_steps = kDefaultMaxSteps;
  int max_in_flight = 1;
  /// Step-score aggregation used by dvts.
  WeightOptions weights;
};

/// Generates steps until the trajectory terminates or hits max_steps.
std::vector<Step> rollout(const Prompt& prompt, TransitionBackend& transition, int max_steps,
                          Rng& rng);

/// n independent rollouts scored once each with score_whole.
/// bon: argmax score. wbon: scores summed per canonical answer, the top
/// group's best rollout wins; unparseable answers form singleton groups.
/// Ties resolve to the lowest index.
BaselineResult best_of_n(const Prompt& prompt, TransitionBackend& transition, RewardBackend& reward,
                         int n, BonSelection selection, const BaselineConfig& cfg, Rng& rng);

/// n_total / subtree_width independent subtrees. Each subtree holds
/// subtree_width scored candidates per step, keeps the best one and expands
/// it into subtree_width children until the best candidate is finished.
/// Selection is deterministic; the answer is the best-scored leaf overall.
BaselineResult dvts(const Prompt& prompt, TransitionBackend& transition, RewardBackend& reward,
                    int n_total, int subtree_width, const BaselineConfig& cfg, Rng& rng);

/// One unscored rollout.
BaselineResult pass_at_one(const Prompt& prompt, TransitionBackend& transition,
                           const BaselineConfig& cfg, Rng& rng);

}  // namespace pfscale
