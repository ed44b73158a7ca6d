#include "pfscale/smc.hpp"

#include "pfscale/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace pfscale {

namespace {

constexpr std::uint64_t kControlStream = 0xC0'47'01'00'00'00'00'01ULL;

std::uint64_t filter_stream(int iteration, int chain) {
  return (static_cast<std::uint64_t>(iteration) << 16) | static_cast<std::uint64_t>(chain);
}

bool all_finished(const std::vector<Particle>& ps) {
  return std::all_of(ps.begin(), ps.end(), [](const Particle& p) { return p.finished(); });
}

std::vector<std::string> digests_of(const std::vector<Particle>& ps) {
  std::vector<std::string> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(digest(p));
  return out;
}

class FilterRun {
 public:
  FilterRun(const Prompt& prompt, RewardBackend& reward, const PFConfig& cfg,
            const Particle* reference)
      : prompt_(prompt), reward_(reward), cfg_(cfg), ref_(reference),
        model_(cfg.aggregation == AggregationMode::model) {}

  Particle score_and_extend(const Particle& p, Step step, Rng& rng) {
    Particle out = extend_scored(prompt_, reward_, p, std::move(step), cfg_.aggregation,
                                 cfg_.max_steps, rng);
    ++reward_calls;
    return out;
  }

  /// Advances the reference-tracking slot by copying the next reference step.
  /// Stored rewards are reused; in model mode they are the prefix scores.
  Particle follow_reference(const Particle& slot) const {
    const std::size_t len = slot.size();
    const double r = ref_->step_rewards()[len];
    Particle out = extend(slot, ref_->steps()[len], r, cfg_.max_steps);
    if (model_) out.set_whole_score(r);
    return out;
  }

  std::atomic<long long> policy_calls{0};
  std::atomic<long long> reward_calls{0};

 private:
  const Prompt& prompt_;
  RewardBackend& reward_;
  const PFConfig& cfg_;
  const Particle* ref_;
  bool model_;
};

}  // namespace

Particle extend_scored(const Prompt& prompt, RewardBackend& reward, const Particle& p, Step step,
                       AggregationMode mode, int max_steps, Rng& rng) {
  std::vector<Step> steps = p.steps();
  steps.push_back(step);
  double r = 0.0;
  if (mode == AggregationMode::model) {
    r = reward.score_whole(prompt, steps, rng);
  } else {
    const StepRewardVector v = reward.score_steps(prompt, steps, rng);
    if (v.size() != steps.size())
      throw std::runtime_error("reward backend returned " + std::to_string(v.size()) +
                               " scores for " + std::to_string(steps.size()) + " steps");
    r = v.back();
  }
  if (!std::isfinite(r)) throw std::runtime_error("reward backend returned a non-finite score");
  Particle out = extend(p, std::move(step), r, max_steps);
  if (mode == AggregationMode::model) out.set_whole_score(r);
  return out;
}

void PFConfig::validate() const {
  if (n_particles < 1) throw std::invalid_argument("n_particles must be >= 1");
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  if (!(softmax_temperature > 0.0)) throw std::invalid_argument("softmax_temperature must be > 0");
  if (!(generation_temperature >= 0.0))
    throw std::invalid_argument("generation_temperature must be >= 0");
  if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
}

void BudgetAllocation::validate() const {
  if (n_particles < 1 || gibbs_iterations < 1 || parallel_chains < 1)
    throw std::invalid_argument("budget allocation entries must be >= 1");
  if (static_cast<int>(chain_temperatures.size()) != parallel_chains)
    throw std::invalid_argument("need exactly one temperature per chain");
  for (std::size_t k = 0; k < chain_temperatures.size(); ++k) {
    if (!(chain_temperatures[k] > 0.0)) throw std::invalid_argument("chain temperatures must be > 0");
    if (k > 0 && !(chain_temperatures[k] < chain_temperatures[k - 1]))
      throw std::invalid_argument("chain temperatures must be strictly decreasing");
  }
}

std::vector<double> default_temperature_ladder(int chains, double base) {
  std::vector<double> out;
  for (int k = 0; k < chains; ++k) out.push_back(base * std::ldexp(1.0, chains - 1 - k));
  return out;
}

FilterResult particle_filter(const Prompt& prompt, TransitionBackend& transition,
                             RewardBackend& reward, const PFConfig& cfg, const Particle* reference,
                             Rng* rng, InferenceTrace* trace, const RoundObserver& observer) {
  cfg.validate();
  if (reference != nullptr && (!reference->finished() || reference->size() == 0))
    throw ContractViolation("reference particle must be finished");

  Rng own(cfg.seed, filter_stream(0, 0));
  Rng& r = rng != nullptr ? *rng : own;
  const int n = cfg.n_particles;
  const bool has_ref = reference != nullptr;
  const int free_slots = has_ref ? n - 1 : n;
  const WeightOptions wopt = cfg.weight_options();

  FilterRun run(prompt, reward, cfg, reference);
  FilterTrace ft;
  if (has_ref) ft.reference = digest(*reference);

  auto draw_seeds = [&r](int count) {
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
    for (auto& s : seeds) s = r.next_u64();
    return seeds;
  };
  auto guarded = [](int round, std::size_t slot, auto&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      throw EngineError("round " + std::to_string(round) + ", slot " + std::to_string(slot) + ": " +
                        e.what());
    }
  };

  std::vector<Particle> ps(static_cast<std::size_t>(n));
  {
    const auto seeds = draw_seeds(free_slots);
    parallel_for(static_cast<std::size_t>(free_slots), cfg.max_in_flight, [&](std::size_t i) {
      guarded(0, i, [&] {
        Rng prng(seeds[i]);
        Step s = transition.init_step(prompt, prng);
        ++run.policy_calls;
        ps[i] = run.score_and_extend(Particle{}, std::move(s), prng);
      });
    });
    if (has_ref) ps.back() = run.follow_reference(Particle{});
    for (const auto& p : ps) ft.initial_steps.push_back(p.steps().front().text);
  }

  int round = 1;
  while (!all_finished(ps)) {
    RoundSnapshot snap;
    snap.round = round;
    std::vector<double> w;
    guarded(round, 0, [&] { w = weights_for(ps, wopt, &reward, &prompt, &r); });
    const ResampleDistribution dist = softmax_distribution(w, cfg.softmax_temperature);
    if (observer) observer(round, ps, dist);
    snap.weights = w;
    snap.probs = dist.probs;
    snap.digests = digests_of(ps);

    std::vector<int> ancestors = multinomial_resample(dist, free_slots, r);
    if (has_ref) ancestors.push_back(n - 1);
    std::vector<Particle> next;
    next.reserve(ps.size());
    for (int a : ancestors) next.push_back(fork(ps[static_cast<std::size_t>(a)], round, a));
    snap.ancestors = ancestors;
    snap.resampled_digests = digests_of(next);
    if (has_ref) snap.reference_digest = digest(next.back());

    const auto seeds = draw_seeds(n);
    snap.appended.assign(static_cast<std::size_t>(n), std::nullopt);
    parallel_for(static_cast<std::size_t>(free_slots), cfg.max_in_flight, [&](std::size_t i) {
      if (next[i].finished()) return;
      guarded(round, i, [&] {
        Rng prng(seeds[i]);
        Step s = transition.next_step(prompt, next[i].steps(), prng);
        ++run.policy_calls;
        next[i] = run.score_and_extend(next[i], std::move(s), prng);
        snap.appended[i] = next[i].steps().back().text;
      });
    });
    if (has_ref && !next.back().finished()) {
      next.back() = run.follow_reference(next.back());
      snap.appended.back() = next.back().steps().back().text;
    }

    ft.rounds.push_back(std::move(snap));
    ps = std::move(next);
    ++round;
  }

  FilterResult result;
  guarded(round, 0, [&] { result.final_weights = weights_for(ps, wopt, &reward, &prompt, &r); });
  const ResampleDistribution final_dist =
      softmax_distribution(result.final_weights, cfg.softmax_temperature);
  if (observer) observer(round, ps, final_dist);
  ft.final_weights = result.final_weights;
  ft.final_probs = final_dist.probs;
  ft.final_digests = digests_of(ps);
  result.particles = std::move(ps);

  if (trace != nullptr) {
    trace->filters.push_back(std::move(ft));
    trace->policy_calls += run.policy_calls.load();
    trace->reward_calls += run.reward_calls.load();
  }
  return result;
}

std::vector<std::vector<Particle>> parallel_tempering(const Prompt& prompt,
                                                      TransitionBackend& transition,
                                                      RewardBackend& reward, const PFConfig& cfg,
                                                      const BudgetAllocation& alloc,
                                                      InferenceTrace* trace) {
  alloc.validate();
  const int chains = alloc.parallel_chains;
  const int iterations = alloc.gibbs_iterations;
  PFConfig chain_cfg = cfg;
  chain_cfg.n_particles = alloc.n_particles;
  chain_cfg.validate();

  Rng control(cfg.seed, kControlStream);
  std::vector<std::optional<Particle>> refs(static_cast<std::size_t>(chains));
  std::vector<double> ref_weights(static_cast<std::size_t>(chains), 0.0);
  std::vector<std::vector<Particle>> sets(static_cast<std::size_t>(chains));

  for (int it = 0; it < iterations; ++it) {
    const bool more = it + 1 < iterations;
    for (int k = 0; k < chains; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      chain_cfg.softmax_temperature = alloc.chain_temperatures[ku];
      Rng stream(cfg.seed, filter_stream(it, k));
      const Particle* ref = refs[ku] ? &*refs[ku] : nullptr;
      FilterResult res = particle_filter(prompt, transition, reward, chain_cfg, ref, &stream, trace);
      if (trace != nullptr) {
        trace->filters.back().iteration = it;
        trace->filters.back().chain = k;
      }
      if (more) {
        const ResampleDistribution dist =
            softmax_distribution(res.final_weights, chain_cfg.softmax_temperature);
        const auto pick = static_cast<std::size_t>(sample_index(dist, control));
        refs[ku] = res.particles[pick];
        ref_weights[ku] = res.final_weights[pick];
      }
      sets[ku] = std::move(res.particles);
    }
    if (!more) break;
    for (int k = 0; k + 1 < chains; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const SwapDecision d =
          decide_swap(ref_weights[ku], ref_weights[ku + 1], alloc.chain_temperatures[ku],
                      alloc.chain_temperatures[ku + 1], control);
      if (d.accepted) {
        std::swap(refs[ku], refs[ku + 1]);
        std::swap(ref_weights[ku], ref_weights[ku + 1]);
      }
      if (trace != nullptr) trace->swaps.push_back({it, k, d.probability, d.accepted});
    }
  }
  return sets;
}

std::vector<Particle> particle_gibbs(const Prompt& prompt, TransitionBackend& transition,
                                     RewardBackend& reward, const PFConfig& cfg, int iterations,
                                     InferenceTrace* trace) {
  if (iterations < 1) throw std::invalid_argument("particle_gibbs needs iterations >= 1");
  BudgetAllocation alloc{cfg.n_particles, iterations, 1, {cfg.softmax_temperature}};
  return std::move(parallel_tempering(prompt, transition, reward, cfg, alloc, trace).front());
}

std::size_t select_index(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("select from an empty set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < weights.size(); ++i)
    if (weights[i] > weights[best]) best = i;
  return best;
}

std::size_t select_answer_index(std::span<const Particle> particles, const WeightOptions& options,
                                RewardBackend* backend, const Prompt* prompt, Rng* rng) {
  if (particles.empty()) throw std::invalid_argument("select_answer on an empty set");
  for (const auto& p : particles)
    if (!p.finished()) throw ContractViolation("select_answer needs finished particles");
  return select_index(weights_for(particles, options, backend, prompt, rng));
}

}  // namespace pfscale
