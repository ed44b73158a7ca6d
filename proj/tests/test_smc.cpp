#include "pfscale/harness.hpp"
#include "pfscale/smc.hpp"
#include "pfscale/synthetic.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace pfscale;
using namespace pfscale::testing;

namespace {

const Prompt kPrompt("q", "Find the path.");

/// Steps of random length: eos with probability 0.3, otherwise continuing.
ScriptedTransition::Fn ragged_steps() {
  return [](std::span<const Step> prior, Rng& rng) {
    const std::string text = " " + std::to_string(prior.size() + 1) + ": token " +
                             std::to_string(rng.below(1000)) + "\n\n";
    return rng.uniform() < 0.3 ? eos(text) : cont(text);
  };
}

ScriptedReward::StepFn hashed_reward() {
  return [](std::span<const Step> steps, std::size_t i) {
    const std::string d = digest(steps.first(i + 1));
    return static_cast<double>(std::stoull(d.substr(0, 8), nullptr, 16) % 1000) / 1000.0;
  };
}

PFConfig small_cfg(int n, std::uint64_t seed) {
  PFConfig cfg;
  cfg.n_particles = n;
  cfg.seed = seed;
  cfg.max_steps = 12;
  return cfg;
}

}  // namespace

TEST_CASE("config validation and temperature ladder") {
  PFConfig bad;
  bad.n_particles = 0;
  CHECK_THROWS(bad.validate());
  bad = PFConfig{};
  bad.softmax_temperature = 0.0;
  CHECK_THROWS(bad.validate());

  BudgetAllocation a{16, 4, 3, {4.0, 2.0, 1.0}};
  CHECK(a.total() == 192);
  CHECK_NOTHROW(a.validate());
  a.chain_temperatures = {1.0, 2.0, 4.0};
  CHECK_THROWS(a.validate());
  a.chain_temperatures = {2.0, 1.0};
  CHECK_THROWS(a.validate());
  CHECK(default_temperature_ladder(3, 1.0) == std::vector<double>{4.0, 2.0, 1.0});
  CHECK(default_temperature_ladder(1, 0.5) == std::vector<double>{0.5});
}

TEST_CASE("a single particle is an unguided rollout") {
  ScriptedTransition trans(ragged_steps());
  ScriptedReward reward(hashed_reward());
  InferenceTrace trace;
  const auto res = particle_filter(kPrompt, trans, reward, small_cfg(1, 4), nullptr, nullptr, &trace);
  REQUIRE(res.particles.size() == 1);
  CHECK(res.particles[0].finished());
  for (const auto& r : trace.filters[0].rounds) {
    CHECK(r.probs == std::vector<double>{1.0});
    CHECK(r.ancestors == std::vector<int>{0});
  }
}

TEST_CASE("particle count is conserved and finished particles never grow") {
  ScriptedTransition trans(ragged_steps());
  ScriptedReward reward(hashed_reward());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::vector<Particle>> seen;
    InferenceTrace trace;
    const auto res = particle_filter(
        kPrompt, trans, reward, small_cfg(8, seed), nullptr, nullptr, &trace,
        [&](int, std::span<const Particle> ps, const ResampleDistribution& d) {
          CHECK(ps.size() == 8);
          CHECK(d.probs.size() == 8);
          seen.emplace_back(ps.begin(), ps.end());
        });
    CHECK(res.particles.size() == 8);
    for (const auto& p : res.particles) {
      CHECK(p.finished());
      CHECK(p.step_rewards().size() == p.size());
    }
    const auto& rounds = trace.filters[0].rounds;
    REQUIRE(seen.size() == rounds.size() + 1);
    for (std::size_t r = 0; r < rounds.size(); ++r) {
      CHECK(rounds[r].ancestors.size() == 8);
      CHECK(rounds[r].resampled_digests.size() == 8);
      for (std::size_t i = 0; i < 8; ++i) {
        const Particle& parent = seen[r][static_cast<std::size_t>(rounds[r].ancestors[i])];
        const Particle& child = seen[r + 1][i];
        CHECK(child.lineage().size() == parent.lineage().size() + 1);
        CHECK(child.lineage().back() == LineageEntry{rounds[r].round, rounds[r].ancestors[i]});
        if (parent.finished()) {
          CHECK(child.steps() == parent.steps());
          CHECK(child.finished());
          CHECK_FALSE(rounds[r].appended[i].has_value());
        } else {
          CHECK(child.size() == parent.size() + 1);
        }
      }
    }
  }
}

TEST_CASE("lineage replay reproduces every trajectory") {
  ScriptedTransition trans(ragged_steps());
  ScriptedReward reward(hashed_reward());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    InferenceTrace trace;
    const auto res = particle_filter(kPrompt, trans, reward, small_cfg(6, seed), nullptr, nullptr, &trace);
    const Replay replay = replay_filter(trace.filters[0]);
    for (std::size_t i = 0; i < res.particles.size(); ++i)
      CHECK(replay.states.back()[i] == texts(res.particles[i]));
    CHECK(trace.filters[0].final_digests.size() == 6);
  }
}

TEST_CASE("seeded runs are deterministic and independent of concurrency") {
  auto run = [](int in_flight, std::uint64_t seed) {
    ScriptedTransition trans(ragged_steps());
    ScriptedReward reward(hashed_reward());
    PFConfig cfg = small_cfg(16, seed);
    cfg.max_in_flight = in_flight;
    InferenceTrace trace;
    particle_gibbs(kPrompt, trans, reward, cfg, 3, &trace);
    return trace_to_json(trace).dump();
  };
  CHECK(run(1, 9) == run(1, 9));
  CHECK(run(1, 9) == run(8, 9));
  CHECK(run(1, 9) != run(1, 10));
}

TEST_CASE("degenerate algorithm configurations coincide") {
  ScriptedTransition trans(ragged_steps());
  ScriptedReward reward(hashed_reward());
  const PFConfig cfg = small_cfg(8, 77);
  const auto pf = particle_filter(kPrompt, trans, reward, cfg).particles;
  const auto pg = particle_gibbs(kPrompt, trans, reward, cfg, 1);
  CHECK(pf == pg);

  InferenceTrace t_pg, t_pt;
  const auto pg3 = particle_gibbs(kPrompt, trans, reward, cfg, 3, &t_pg);
  const auto pt = parallel_tempering(kPrompt, trans, reward, cfg, {8, 3, 1, {1.0}}, &t_pt);
  REQUIRE(pt.size() == 1);
  CHECK(pt[0] == pg3);
  CHECK(trace_to_json(t_pg) == trace_to_json(t_pt));
}

TEST_CASE("reference slot keeps the reference prefix every round") {
  ScriptedTransition trans(ragged_steps());
  ScriptedReward reward(hashed_reward());
  const PFConfig cfg = small_cfg(6, 5);
  const auto first = particle_filter(kPrompt, trans, reward, cfg).particles;
  const Particle& ref = *std::max_element(first.begin(), first.end(),
                                          [](const Particle& a, const Particle& b) {
                                            return a.size() < b.size();
                                          });
  Rng rng(1234);
  int calls = 0;
  const auto res = particle_filter(
      kPrompt, trans, reward, cfg, &ref, &rng, nullptr,
      [&](int, std::span<const Particle> ps, const ResampleDistribution&) {
        ++calls;
        const Particle& slot = ps.back();
        REQUIRE(slot.size() <= ref.size());
        CHECK(std::equal(slot.steps().begin(), slot.steps().end(), ref.steps().begin()));
        CHECK(std::equal(slot.step_rewards().begin(), slot.step_rewards().end(),
                         ref.step_rewards().begin()));
      });
  CHECK(calls >= 1);
  CHECK(res.particles.back().steps() == ref.steps());

  Particle active = extend(Particle{}, cont(" x"), 0.5);
  CHECK_THROWS_AS(particle_filter(kPrompt, trans, reward, cfg, &active), ContractViolation);
}

TEST_CASE("particle Gibbs preserves the sampled reference in later iterations") {
  const auto task = NoisyRewardTask::random(4, 5, 0.3, 17);
  auto be = noisy_task_backends(task);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PFConfig cfg;
    cfg.n_particles = 16;
    cfg.seed = seed;
    InferenceTrace trace;
    particle_gibbs(kPrompt, *be.transition, *be.reward, cfg, 4, &trace);
    REQUIRE(trace.filters.size() == 4);
    CHECK_FALSE(trace.filters[0].reference.has_value());
    for (std::size_t it = 1; it < 4; ++it) {
      const FilterTrace& prev = trace.filters[it - 1];
      const FilterTrace& cur = trace.filters[it];
      REQUIRE(cur.reference.has_value());
      const auto pos = std::find(prev.final_digests.begin(), prev.final_digests.end(), *cur.reference);
      REQUIRE(pos != prev.final_digests.end());
      const auto ref_texts =
          replay_filter(prev).states.back()[static_cast<std::size_t>(pos - prev.final_digests.begin())];
      const Replay replay = replay_filter(cur);
      CHECK(replay.states.front().back() == std::vector<std::string>{ref_texts.front()});
      for (std::size_t r = 0; r < cur.rounds.size(); ++r) {
        const auto& slot = replay.resampled[r].back();
        CHECK(std::equal(slot.begin(), slot.end(), ref_texts.begin()));
        CHECK(cur.rounds[r].reference_digest == cur.rounds[r].resampled_digests.back());
        CHECK(cur.rounds[r].ancestors.back() == 15);
      }
      CHECK(cur.final_digests.back() == *cur.reference);
    }
  }
}

TEST_CASE("parallel tempering") {
  const auto task = NoisyRewardTask::random(3, 4, 0.2, 3);
  auto be = noisy_task_backends(task);
  PFConfig cfg;
  cfg.seed = 21;

  SUBCASE("chains use their own temperature") {
    InferenceTrace trace;
    const BudgetAllocation alloc{8, 3, 3, {4.0, 2.0, 1.0}};
    const auto sets = parallel_tempering(kPrompt, *be.transition, *be.reward, cfg, alloc, &trace);
    REQUIRE(sets.size() == 3);
    REQUIRE(trace.filters.size() == 9);
    for (const auto& f : trace.filters) {
      const double t = alloc.chain_temperatures[static_cast<std::size_t>(f.chain)];
      const auto d = softmax_distribution(f.final_weights, t);
      for (std::size_t i = 0; i < d.probs.size(); ++i) CHECK(d.probs[i] == f.final_probs[i]);
      CHECK(f.final_weights.size() == 8);
    }
    CHECK(trace.swaps.size() == 4);  // (iterations - 1) x (chains - 1)
    for (const auto& s : trace.swaps) {
      CHECK(s.probability >= 0.0);
      CHECK(s.probability <= 1.0);
    }
  }

  SUBCASE("equal reference weights force every exchange") {
    ScriptedTransition trans(ragged_steps());
    ScriptedReward flat([](auto, auto) { return 0.5; });
    cfg.aggregation = AggregationMode::last;
    InferenceTrace trace;
    parallel_tempering(kPrompt, trans, flat, cfg, {6, 4, 2, {2.0, 1.0}}, &trace);
    REQUIRE(trace.swaps.size() == 3);
    for (const auto& s : trace.swaps) {
      CHECK(s.probability == 1.0);
      CHECK(s.accepted);
    }
    // After an accepted exchange, chain 0 iterates on chain 1's former reference.
    for (std::size_t it = 1; it < 4; ++it) {
      const auto& c0 = trace.filters[it * 2];
      const auto& c1_prev = trace.filters[(it - 1) * 2 + 1];
      REQUIRE(c0.chain == 0);
      CHECK(std::find(c1_prev.final_digests.begin(), c1_prev.final_digests.end(), *c0.reference) !=
            c1_prev.final_digests.end());
    }
  }
}

TEST_CASE("answer selection") {
  const std::vector<double> w{0.2, 0.9, 0.9};
  CHECK(select_index(w) == 1);
  CHECK(select_index(std::vector<double>{0.4}) == 0);
  CHECK_THROWS(select_index(std::vector<double>{}));

  std::vector<Particle> ps{extend(Particle{}, eos(" a"), 0.2), extend(Particle{}, eos(" b"), 0.9),
                           extend(Particle{}, eos(" c"), 0.9)};
  CHECK(select_answer_index(ps, {AggregationMode::last}) == 1);
  CHECK(&select_answer(ps, {AggregationMode::last}) == &ps[1]);
  ps.push_back(extend(Particle{}, cont(" d"), 1.0));
  CHECK_THROWS_AS(select_answer_index(ps, {AggregationMode::last}), ContractViolation);
  CHECK_THROWS_AS(select_answer_index(std::vector<Particle>{}, {}), std::invalid_argument);
}

TEST_CASE("oracle rewards: selection is correct whenever a correct trajectory survives") {
  int present = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto task = NoisyRewardTask::random(4, 4, 0.0, seed);
    auto be = noisy_task_backends(task);
    PFConfig cfg;
    cfg.n_particles = 8;
    cfg.seed = seed;
    const auto res = particle_filter(kPrompt, *be.transition, *be.reward, cfg);
    const bool any = std::any_of(res.particles.begin(), res.particles.end(),
                                 [&](const Particle& p) { return task.is_correct(p.steps()); });
    const auto& chosen = select_answer(res.particles, cfg.weight_options());
    CHECK(task.is_correct(chosen.steps()) == any);
    present += any ? 1 : 0;
  }
  // Raw softmax over 0/1 rewards is a soft preference, so both cases occur.
  CHECK(present > 10);
  CHECK(present < 200);
}

TEST_CASE("near-oracle rewards beat a single unguided sample") {
  // Reward 1 on the correct prefix, 0.01 elsewhere; pass@1 is 4^-4.
  int hits = 0;
  const int runs = 500;
  for (int seed = 0; seed < runs; ++seed) {
    auto task = NoisyRewardTask::random(4, 4, 0.0, static_cast<std::uint64_t>(seed));
    task.wrong_reward = 0.01;
    auto be = noisy_task_backends(task);
    PFConfig cfg;
    cfg.n_particles = 8;
    cfg.seed = static_cast<std::uint64_t>(seed) + 1000;
    const auto res = particle_filter(kPrompt, *be.transition, *be.reward, cfg);
    hits += task.is_correct(select_answer(res.particles, cfg.weight_options()).steps()) ? 1 : 0;
  }
  CHECK(hits / double(runs) > 10.0 / 256.0);
}

TEST_CASE("model aggregation scores each new prefix once") {
  ScriptedTransition trans(ragged_steps());
  ScriptedReward reward(hashed_reward(), [](std::span<const Step> s) { return 1.0 / (1.0 + s.size()); });
  PFConfig cfg = small_cfg(6, 2);
  cfg.aggregation = AggregationMode::model;
  InferenceTrace trace;
  const auto res = particle_filter(kPrompt, trans, reward, cfg, nullptr, nullptr, &trace);
  CHECK(reward.step_calls == 0);
  CHECK(reward.whole_calls == trans.calls);
  CHECK(trace.reward_calls == trans.calls);
  for (const auto& p : res.particles) {
    REQUIRE(p.whole_score().has_value());
    CHECK(*p.whole_score() == doctest::Approx(1.0 / (1.0 + p.size())));
  }
}

TEST_CASE("backend failures name the round and slot") {
  ScriptedTransition trans(ragged_steps());
  SUBCASE("throwing reward") {
    ScriptedReward reward([](std::span<const Step> s, std::size_t) -> double {
      if (s.size() == 2) throw std::runtime_error("scorer down");
      return 0.5;
    });
    PFConfig cfg = small_cfg(16, 0);
    bool threw = false;
    try {
      particle_filter(kPrompt, trans, reward, cfg);
    } catch (const EngineError& e) {
      threw = true;
      CHECK(std::string(e.what()).find("slot") != std::string::npos);
      CHECK(std::string(e.what()).find("scorer down") != std::string::npos);
    }
    CHECK(threw);
  }
  SUBCASE("non-finite reward") {
    ScriptedReward reward([](auto, auto) { return std::nan(""); });
    CHECK_THROWS_AS(particle_filter(kPrompt, trans, reward, small_cfg(4, 0)), EngineError);
  }
}
