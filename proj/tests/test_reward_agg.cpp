#include "pfscale/reward_agg.hpp"
#include "pfscale/rng.hpp"
#include "pfscale/synthetic.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace pfscale;
using namespace pfscale::testing;

TEST_CASE("aggregate modes") {
  const std::vector<double> r{0.9, 0.6, 0.8};
  CHECK(aggregate(r, AggregationMode::prod) == doctest::Approx(0.432).epsilon(1e-12));
  CHECK(aggregate(r, AggregationMode::min) == 0.6);
  CHECK(aggregate(r, AggregationMode::last) == 0.8);
  CHECK(aggregate(r, AggregationMode::model, 0.73) == 0.73);
  CHECK_THROWS_AS(aggregate({}, AggregationMode::prod), std::invalid_argument);
  CHECK_THROWS_AS(aggregate(r, AggregationMode::model), std::invalid_argument);
  CHECK_THROWS_AS(aggregate(r, AggregationMode::prod, 0.5), std::invalid_argument);
  for (auto m : {AggregationMode::prod, AggregationMode::min, AggregationMode::last,
                 AggregationMode::model})
    CHECK(aggregation_from_string(to_string(m)) == m);
  CHECK_THROWS(aggregation_from_string("mean"));
}

TEST_CASE("aggregate properties over random reward vectors") {
  Rng rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t len = 1 + rng.below(8);
    std::vector<double> r(len);
    for (double& v : r) v = rng.uniform();
    const double prod = aggregate(r, AggregationMode::prod);
    const double mn = aggregate(r, AggregationMode::min);
    CHECK(prod <= mn + 1e-15);
    CHECK(mn <= 1.0);
    if (len == 1) {
      CHECK(prod == mn);
      CHECK(mn == aggregate(r, AggregationMode::last));
    }
    std::vector<double> shuffled = r;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(aggregate(shuffled, AggregationMode::prod) == doctest::Approx(prod).epsilon(1e-12));
    CHECK(aggregate(shuffled, AggregationMode::min) == mn);
  }
  // Order sensitivity of `last` only.
  const std::vector<double> a{0.2, 0.9}, b{0.9, 0.2};
  CHECK(aggregate(a, AggregationMode::last) != aggregate(b, AggregationMode::last));
}

TEST_CASE("weight transforms") {
  CHECK(apply_transform(0.3, WeightTransform::identity) == 0.3);
  CHECK(apply_transform(0.5, WeightTransform::logit) == doctest::Approx(0.0));
  CHECK(apply_transform(0.8, WeightTransform::logit) == doctest::Approx(std::log(4.0)));
  CHECK(std::isfinite(apply_transform(0.0, WeightTransform::logit)));
  CHECK(std::isfinite(apply_transform(1.0, WeightTransform::logit)));
  CHECK(apply_transform(0.25, WeightTransform::log) == doctest::Approx(std::log(0.25)));
}

namespace {

Particle with_rewards(const std::vector<double>& rewards, bool finish = false) {
  Particle p;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const bool last = finish && i + 1 == rewards.size();
    p = extend(p, last ? eos(" s" + std::to_string(i)) : cont(" s" + std::to_string(i)), rewards[i]);
  }
  return p;
}

}  // namespace

TEST_CASE("weights_for") {
  SUBCASE("last mode reads the latest reward") {
    std::vector<Particle> ps{with_rewards({0.3, 0.9}), with_rewards({0.2}),
                             with_rewards({0.1, 0.5, 0.7}), with_rewards({0.5})};
    CHECK(weights_for(ps, {AggregationMode::last}) == std::vector<double>{0.9, 0.2, 0.7, 0.5});
  }
  SUBCASE("prod equals last on single-step trajectories") {
    std::vector<Particle> ps{with_rewards({0.3}), with_rewards({0.8})};
    CHECK(weights_for(ps, {AggregationMode::prod}) == weights_for(ps, {AggregationMode::last}));
  }
  SUBCASE("transform is applied after aggregation") {
    std::vector<Particle> ps{with_rewards({0.5, 0.5})};
    CHECK(weights_for(ps, {AggregationMode::prod, WeightTransform::log})[0] ==
          doctest::Approx(std::log(0.25)));
  }
  SUBCASE("model mode on the HMM matches direct score_whole calls") {
    Rng rng(5);
    const DiscreteHMM hmm = DiscreteHMM::random(3, 3, 4, rng);
    const std::vector<int> obs = hmm.sample_observations(rng);
    auto be = hmm_as_backends(hmm, obs);
    const Prompt prompt("h", "hmm");
    std::vector<Particle> ps;
    for (int i = 0; i < 6; ++i) {
      Particle p;
      Rng step_rng(100 + i);
      p = extend(p, be.transition->init_step(prompt, step_rng), 0.0);
      p = extend(p, be.transition->next_step(prompt, p.steps(), step_rng), 0.0);
      ps.push_back(p);
    }
    Rng r(1);
    const auto w = weights_for(ps, {AggregationMode::model}, be.reward.get(), &prompt, &r);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      // Oracle: product of emission likelihoods along the path.
      double expect = 1.0;
      for (std::size_t t = 0; t < ps[i].size(); ++t)
        expect *= hmm.emission_matrix[hmm_state_of(ps[i].steps()[t])][obs[t]];
      CHECK(w[i] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
  SUBCASE("model mode uses cached whole scores without calling the backend") {
    Particle p = with_rewards({0.4}, true);
    p.set_whole_score(0.66);
    ScriptedReward reward([](auto, auto) { return 0.1; });
    std::vector<Particle> ps{p};
    const Prompt prompt("q", "x");
    Rng r(1);
    CHECK(weights_for(ps, {AggregationMode::model}, &reward, &prompt, &r)[0] == 0.66);
    CHECK(reward.whole_calls == 0);
  }
  SUBCASE("backend failures carry the particle index") {
    ScriptedReward reward([](auto, auto) { return 0.1; }, [](std::span<const Step> s) -> double {
      if (s.size() == 2) throw std::runtime_error("boom");
      return 0.5;
    });
    std::vector<Particle> ps{with_rewards({0.1}), with_rewards({0.1, 0.2})};
    const Prompt prompt("q", "x");
    Rng r(1);
    try {
      weights_for(ps, {AggregationMode::model}, &reward, &prompt, &r);
      FAIL("expected ScoringError");
    } catch (const ScoringError& e) {
      CHECK(e.particle_index() == 1);
    }
  }
  SUBCASE("empty trajectories are rejected") {
    std::vector<Particle> ps{Particle{}};
    CHECK_THROWS(weights_for(ps, {AggregationMode::prod}));
  }
}
