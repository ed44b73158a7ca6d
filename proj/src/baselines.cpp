#include "pfscale/baselines.hpp"

#include "pfscale/answer.hpp"
#include "pfscale/parallel.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <stdexcept>

namespace pfscale {

namespace {

std::vector<std::uint64_t> draw_seeds(Rng& rng, std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (auto& s : seeds) s = rng.next_u64();
  return seeds;
}

void finish_result(BaselineResult& out, std::size_t index) {
  out.index = index;
  out.trajectory = out.candidates[index];
  out.score = out.scores[index];
  out.parse_failure = !out.answers[index].has_value();
}

}  // namespace

std::vector<Step> rollout(const Prompt& prompt, TransitionBackend& transition, int max_steps,
                          Rng& rng) {
  std::vector<Step> steps;
  steps.push_back(transition.init_step(prompt, rng));
  while (!steps.back().terminal() && static_cast<int>(steps.size()) < max_steps)
    steps.push_back(transition.next_step(prompt, steps, rng));
  return steps;
}

BaselineResult best_of_n(const Prompt& prompt, TransitionBackend& transition, RewardBackend& reward,
                         int n, BonSelection selection, const BaselineConfig& cfg, Rng& rng) {
  if (n < 1) throw std::invalid_argument("best_of_n needs n >= 1");
  const auto count = static_cast<std::size_t>(n);
  BaselineResult out;
  out.candidates.resize(count);
  out.scores.resize(count);
  out.answers.resize(count);
  std::atomic<long long> policy_calls{0};
  const auto seeds = draw_seeds(rng, count);
  parallel_for(count, cfg.max_in_flight, [&](std::size_t i) {
    Rng r(seeds[i]);
    out.candidates[i] = rollout(prompt, transition, cfg.max_steps, r);
    policy_calls += static_cast<long long>(out.candidates[i].size());
    const double s = reward.score_whole(prompt, out.candidates[i], r);
    if (!std::isfinite(s)) throw ScoringError(i, "non-finite whole score");
    out.scores[i] = s;
    out.answers[i] = extract_boxed(trajectory_text(out.candidates[i]));
  });
  out.policy_calls = policy_calls.load();
  out.reward_calls = n;

  if (selection == BonSelection::bon) {
    finish_result(out, select_index(out.scores));
    return out;
  }

  // Group key -> (score sum, first member index). Unparseable answers get a
  // key no canonical answer can produce.
  std::map<std::string, std::pair<double, std::size_t>> groups;
  std::vector<std::string> keys(count);
  for (std::size_t i = 0; i < count; ++i) {
    keys[i] = out.answers[i] ? "a:" + canonical_answer(*out.answers[i]) : "u:" + std::to_string(i);
    auto [it, inserted] = groups.try_emplace(keys[i], 0.0, i);
    it->second.first += out.scores[i];
  }
  const std::pair<double, std::size_t>* top = nullptr;
  std::string top_key;
  for (const auto& [key, group] : groups) {
    if (top == nullptr || group.first > top->first ||
        (group.first == top->first && group.second < top->second)) {
      top = &group;
      top_key = key;
    }
  }
  std::size_t best = top->second;
  for (std::size_t i = 0; i < count; ++i)
    if (keys[i] == top_key && out.scores[i] > out.scores[best]) best = i;
  finish_result(out, best);
  return out;
}

BaselineResult dvts(const Prompt& prompt, TransitionBackend& transition, RewardBackend& reward,
                    int n_total, int subtree_width, const BaselineConfig& cfg, Rng& rng) {
  if (subtree_width < 1 || n_total < 1 || n_total % subtree_width != 0)
    throw std::invalid_argument("dvts needs subtree_width dividing n_total");
  const int subtrees = n_total / subtree_width;
  const auto width = static_cast<std::size_t>(subtree_width);
  const AggregationMode mode = cfg.weights.mode;

  BaselineResult out;
  std::atomic<long long> policy_calls{0};
  std::atomic<long long> reward_calls{0};
  std::vector<Particle> leaves;
  std::vector<double> leaf_scores;

  for (int tree = 0; tree < subtrees; ++tree) {
    std::vector<Particle> frontier(width);
    auto seeds = draw_seeds(rng, width);
    parallel_for(width, cfg.max_in_flight, [&](std::size_t i) {
      Rng r(seeds[i]);
      Step s = transition.init_step(prompt, r);
      ++policy_calls;
      frontier[i] = extend_scored(prompt, reward, Particle{}, std::move(s), mode, cfg.max_steps, r);
      ++reward_calls;
    });
    while (true) {
      // Every candidate carries its scores, so no RNG is needed here.
      const std::vector<double> w = weights_for(frontier, cfg.weights);
      for (std::size_t i = 0; i < frontier.size(); ++i) {
        if (frontier[i].finished()) {
          leaves.push_back(frontier[i]);
          leaf_scores.push_back(w[i]);
        }
      }
      const std::size_t best = select_index(w);
      if (frontier[best].finished()) break;
      const Particle parent = frontier[best];
      seeds = draw_seeds(rng, width);
      parallel_for(width, cfg.max_in_flight, [&](std::size_t i) {
        Rng r(seeds[i]);
        Step s = transition.next_step(prompt, parent.steps(), r);
        ++policy_calls;
        frontier[i] = extend_scored(prompt, reward, parent, std::move(s), mode, cfg.max_steps, r);
        ++reward_calls;
      });
    }
  }

  for (std::size_t i = 0; i < leaves.size(); ++i) {
    out.candidates.push_back(leaves[i].steps());
    out.scores.push_back(leaf_scores[i]);
    out.answers.push_back(extract_boxed(trajectory_text(leaves[i])));
  }
  out.policy_calls = policy_calls.load();
  out.reward_calls = reward_calls.load();
  finish_result(out, select_index(out.scores));
  return out;
}

BaselineResult pass_at_one(const Prompt& prompt, TransitionBackend& transition,
                           const BaselineConfig& cfg, Rng& rng) {
  BaselineResult out;
  Rng r(rng.next_u64());
  out.candidates.push_back(rollout(prompt, transition, cfg.max_steps, r));
  out.scores.push_back(0.0);
  out.answers.push_back(extract_boxed(trajectory_text(out.candidates.back())));
  out.policy_calls = static_cast<long long>(out.candidates.back().size());
  finish_result(out, 0);
  return out;
}

}  // namespace pfscale
