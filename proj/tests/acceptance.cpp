// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
#include "pfscale/answer.hpp"
#include "pfscale/baselines.hpp"
#include "pfscale/gateway.hpp"
#include "pfscale/harness.hpp"
#include "pfscale/resample.hpp"
#include "pfscale/synthetic.hpp"

#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

using namespace pfscale;
using namespace pfscale::testing;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// One-sided exact sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p(long wins, long losses) {
  const long n = wins + losses;
  if (n == 0) return 1.0;
  double p = 0.0;
  for (long k = wins; k <= n; ++k)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) -
                  n * std::log(2.0));
  return std::min(1.0, p);
}

Manifest noisy_manifest(Method method, int questions, double sigma) {
  Manifest m;
  m.method = method;
  m.seed = 20250101;
  m.synthetic.branching = 4;
  m.synthetic.depth = 4;
  m.synthetic.sigma = sigma;
  m.synthetic.questions = questions;
  m.engine.n_particles = 16;
  m.subtree_width = 4;
  m.workers = 4;
  return m;
}

BenchmarkSummary bench(const Manifest& m, const std::string& tag) {
  const auto out = temp_path("acceptance_" + tag + ".jsonl");
  return run_benchmark(synthetic_dataset(m), m, out, default_backend_factory(m), false);
}

// 1. Four-weight softmax example.
Verdict criterion_softmax() {
  Verdict v;
  const std::vector<double> w{2.1, -1.2, 1.3, 0.1};
  const std::vector<double> expected{0.617, 0.023, 0.277, 0.083};
  const auto d = softmax_distribution(w, 1.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(d.probs[i] - expected[i]));
  v.require(worst <= 1e-3, "max deviation " + fmt("%.2e", worst));
  v.note("max |p - expected| = " + fmt("%.2e", worst));
  return v;
}

// 2. Exact filtering vs enumeration; particle filter convergence.
Verdict criterion_hmm() {
  Verdict v;
  Rng rng(31337);
  double worst = 0.0;
  std::vector<std::pair<DiscreteHMM, std::vector<int>>> models;
  for (int i = 0; i < 20; ++i) {
    DiscreteHMM h = DiscreteHMM::random(3, 3, 5, rng);
    auto obs = h.sample_observations(rng);
    const auto exact = hmm_exact_filtering(h, obs);
    const auto brute = brute_force_filtering(h, obs);
    for (std::size_t t = 0; t < exact.size(); ++t)
      for (std::size_t s = 0; s < 3; ++s) worst = std::max(worst, std::abs(exact[t][s] - brute[t][s]));
    models.emplace_back(std::move(h), std::move(obs));
  }
  v.require(worst <= 1e-10, "exact vs enumeration " + fmt("%.2e", worst));

  // 100 seeds spread over the 20 models.
  double tv_small = 0.0, tv_large = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto& [h, obs] = models[seed % models.size()];
    const auto exact = hmm_exact_filtering(h, obs);
    tv_small += mean_tv_distance(hmm_particle_marginals(h, obs, 128, seed), exact);
    tv_large += mean_tv_distance(hmm_particle_marginals(h, obs, 2048, seed), exact);
  }
  tv_small /= 100;
  tv_large /= 100;
  v.require(tv_large < 0.05, "mean TV at N=2048 is " + fmt("%.4f", tv_large));
  v.require(tv_large < tv_small, "TV(2048) not below TV(128)");
  v.note("enum err " + fmt("%.1e", worst) + ", TV(128) " + fmt("%.4f", tv_small) + ", TV(2048) " +
         fmt("%.4f", tv_large));
  return v;
}

// 3. PF vs DVTS and BoN on the noisy task at budget 16.
constexpr double kMarginOverDvts = 0.25;

Verdict criterion_robustness() {
  Verdict v;
  const int q = 1000;
  auto pf = noisy_manifest(Method::pf, q, 0.3);
  pf.engine.transform = WeightTransform::logit;
  auto pf_raw = noisy_manifest(Method::pf, q, 0.3);
  const auto dvts_m = noisy_manifest(Method::dvts, q, 0.3);
  const auto bon_m = noisy_manifest(Method::bon, q, 0.3);
  const auto s_pf = bench(pf, "c3_pf");
  const auto s_raw = bench(pf_raw, "c3_pf_raw");
  const auto s_dvts = bench(dvts_m, "c3_dvts");
  const auto s_bon = bench(bon_m, "c3_bon");
  v.require(s_pf.failures + s_dvts.failures + s_bon.failures == 0, "question failures");

  auto paired = [&](const BenchmarkSummary& other, const std::string& name) {
    long wins = 0, losses = 0;
    for (std::size_t i = 0; i < s_pf.records.size(); ++i) {
      const bool a = s_pf.records[i].correct, b = other.records[i].correct;
      wins += a && !b;
      losses += b && !a;
    }
    const double p = sign_test_p(wins, losses);
    v.require(s_pf.accuracy >= other.accuracy, "PF below " + name);
    v.require(p < 0.05, "sign test vs " + name + " p=" + fmt("%.3g", p));
    v.note(name + " " + fmt("%.3f", other.accuracy) + " (p=" + fmt("%.2g", p) + ")");
  };
  v.note("PF " + fmt("%.3f", s_pf.accuracy));
  paired(s_dvts, "DVTS");
  paired(s_bon, "BoN");
  v.require(s_pf.accuracy - s_dvts.accuracy >= kMarginOverDvts,
            "margin over DVTS " + fmt("%.3f", s_pf.accuracy - s_dvts.accuracy));
  v.note("report-only: PF with untransformed rewards " + fmt("%.3f", s_raw.accuracy));
  return v;
}

// 4. Oracle rewards: bon@n equals pass@n; PF non-decreasing in N.
Verdict criterion_degeneracy() {
  Verdict v;
  const Prompt prompt("q", "task");
  long mismatches = 0;
  std::string counts;
  for (int n : {1, 2, 4, 8, 16}) {
    long bon_hits = 0, pass_hits = 0;
    for (std::uint64_t q = 0; q < 500; ++q) {
      const auto task = NoisyRewardTask::random(4, 3, 0.0, q);
      auto be = noisy_task_backends(task);
      Rng seeds(q);
      bool any = false;
      for (int i = 0; i < n; ++i) {
        Rng r(seeds.next_u64());
        any = any || task.is_correct(rollout(prompt, *be.transition, kDefaultMaxSteps, r));
      }
      Rng rng(q);
      const auto res = best_of_n(prompt, *be.transition, *be.reward, n, BonSelection::bon, {}, rng);
      const bool got = task.is_correct(res.trajectory);
      bon_hits += got;
      pass_hits += any;
      mismatches += got != any;
    }
    counts += " n=" + std::to_string(n) + ":" + std::to_string(bon_hits) + "/" + std::to_string(pass_hits);
  }
  v.require(mismatches == 0, std::to_string(mismatches) + " bon@n/pass@n mismatches");
  v.note("bon/pass hits" + counts);

  auto m = noisy_manifest(Method::pf, 1000, 0.0);
  const std::vector<int> budgets{1, 2, 4, 8, 16};
  const auto dir = temp_path("acceptance_c4_sweep");
  std::filesystem::remove_all(dir);
  const auto rows = sweep_budget(synthetic_dataset(m), m, budgets, dir, default_backend_factory(m), false);
  std::string accs;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    accs += (k ? "," : "") + fmt("%.3f", rows[k].accuracy);
    if (k + 1 < rows.size())
      v.require(rows[k + 1].accuracy >= rows[k].ci_low,
                "PF drops below CI at N=" + std::to_string(rows[k + 1].budget));
  }
  v.note("PF acc N=1..16 " + accs);
  return v;
}

// 5. Algorithmic invariants.
Verdict criterion_invariants() {
  Verdict v;
  const Prompt prompt("q", "task");

  // Reference preservation in every iteration after the first.
  const auto task = NoisyRewardTask::random(4, 5, 0.3, 17);
  auto be = noisy_task_backends(task);
  long ref_violations = 0, conservation_violations = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PFConfig cfg;
    cfg.n_particles = 16;
    cfg.seed = seed;
    InferenceTrace trace;
    particle_gibbs(prompt, *be.transition, *be.reward, cfg, 4, &trace);
    for (std::size_t it = 1; it < trace.filters.size(); ++it) {
      const FilterTrace& prev = trace.filters[it - 1];
      const FilterTrace& cur = trace.filters[it];
      if (!cur.reference) {
        ++ref_violations;
        continue;
      }
      const auto pos = std::find(prev.final_digests.begin(), prev.final_digests.end(), *cur.reference);
      if (pos == prev.final_digests.end()) {
        ++ref_violations;
        continue;
      }
      const auto ref_texts =
          replay_filter(prev).states.back()[static_cast<std::size_t>(pos - prev.final_digests.begin())];
      const Replay replay = replay_filter(cur);
      for (std::size_t r = 0; r < cur.rounds.size(); ++r) {
        const auto& slot = replay.resampled[r].back();
        if (!std::equal(slot.begin(), slot.end(), ref_texts.begin())) ++ref_violations;
        if (cur.rounds[r].ancestors.back() != 15) ++ref_violations;
      }
      if (cur.final_digests.back() != *cur.reference) ++ref_violations;
    }
    // Conservation: every round holds exactly N particles.
    particle_filter(prompt, *be.transition, *be.reward, cfg, nullptr, nullptr, nullptr,
                    [&](int, std::span<const Particle> ps, const ResampleDistribution& d) {
                      if (ps.size() != 16 || d.probs.size() != 16) ++conservation_violations;
                    });
  }
  v.require(ref_violations == 0, std::to_string(ref_violations) + " reference violations");
  v.require(conservation_violations == 0, "particle count changed");

  // Swap acceptance rate.
  Rng rng(4242);
  const double a = swap_probability(0.4, 0.9, 2.0, 1.0);
  const int trials = 10000;
  int accepted = 0;
  for (int i = 0; i < trials; ++i) accepted += decide_swap(0.4, 0.9, 2.0, 1.0, rng).accepted;
  const auto [lo, hi] = wilson_interval(static_cast<std::size_t>(accepted), trials, 2.5758293035489);
  v.require(lo <= a && a <= hi, "swap rate outside 99% CI");
  v.note("swap " + fmt("%.4f", accepted / double(trials)) + " vs " + fmt("%.4f", a));

  // Softmax shift invariance.
  Rng wr(99);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> w(1 + wr.below(16)), shifted;
    for (double& x : w) x = 10 * wr.normal();
    const double c = 100 * wr.normal();
    for (double x : w) shifted.push_back(x + c);
    const double t = 0.1 + 4 * wr.uniform();
    const auto p = softmax_distribution(w, t), q = softmax_distribution(shifted, t);
    for (std::size_t i = 0; i < w.size(); ++i) worst = std::max(worst, std::abs(p.probs[i] - q.probs[i]));
  }
  v.require(worst <= 1e-12, "shift invariance " + fmt("%.2e", worst));

  // Byte-determinism of synthetic run records.
  const auto m = noisy_manifest(Method::pf, 50, 0.3);
  const auto ds = synthetic_dataset(m);
  const auto p1 = temp_path("acceptance_c5_a.jsonl"), p2 = temp_path("acceptance_c5_b.jsonl");
  run_benchmark(ds, m, p1, default_backend_factory(m), false);
  run_benchmark(ds, m, p2, default_backend_factory(m), false);
  v.require(slurp(p1) == slurp(p2), "run records differ across runs");
  return v;
}

// 6. Wire-format goldens and mock end-to-end run.
Verdict criterion_wire() {
  Verdict v;
  const Prompt prompt("q", "What is (2+3)*4?");
  const std::vector<Step> steps{cont(" 1: Add the numbers\n2 + 3 = 5\n\n"),
                                cont(" 2: Multiply by four\n5 * 4 = 20\n\n"),
                                eos(" 3: Conclude\nTherefore, the final answer is: $\\boxed{20}$. "
                                    "I hope it is correct.")};
  auto trimmed = [](std::string s) {
    while (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
  };
  const auto prm = make_score_request(prompt, steps, ScoreMode::per_step);
  const auto orm = make_score_request(prompt, steps, ScoreMode::whole);
  v.require(render_reward_input(prm) == slurp(fixture("golden_prm_input.txt")), "PRM input");
  v.require(render_reward_input(orm) == slurp(fixture("golden_orm_input.txt")), "ORM input");
  v.require(score_request_body(prm).dump() == trimmed(slurp(fixture("golden_prm_body.json"))), "PRM body");
  v.require(score_request_body(orm).dump() == trimmed(slurp(fixture("golden_orm_body.json"))), "ORM body");

  auto run = [&] {
    MockServer policy, reward;
    install_scripted_live_handlers(policy, reward);
    PolicyOptions po;
    po.endpoint.url = policy.url();
    EndpointOptions ro;
    ro.url = reward.url();
    PolicyClient pc(po);
    RewardClient rc(ro);
    PFConfig cfg;
    cfg.n_particles = 4;
    cfg.seed = 5;
    InferenceTrace trace;
    const auto res = particle_filter(prompt, pc, rc, cfg, nullptr, nullptr, &trace);
    bool done = std::all_of(res.particles.begin(), res.particles.end(),
                            [](const Particle& p) { return p.finished(); });
    return std::make_pair(done, trace_to_json(trace).dump());
  };
  const auto a = run(), b = run();
  v.require(a.first && b.first, "mock run left unfinished particles");
  v.require(a.second == b.second, "mock run did not replay");
  return v;
}

// 7. Answer parser corpus and fuzzing.
Verdict criterion_parser() {
  Verdict v;
  const auto r = run_answer_corpus(fixture("answer_corpus.jsonl"));
  v.require(r.total >= 100, "corpus has " + std::to_string(r.total) + " pairs");
  v.require(r.passed == r.total, std::to_string(r.total - r.passed) + " corpus failures");
  v.note("corpus " + std::to_string(r.passed) + "/" + std::to_string(r.total));
  Rng rng(777);
  long crashes = 0;
  for (int i = 0; i < 100000; ++i) {
    try {
      const auto s = fuzz_input(rng);
      if (const auto b = extract_boxed(s)) (void)answers_equal(*b, s);
    } catch (...) {
      ++crashes;
    }
  }
  v.require(crashes == 0, std::to_string(crashes) + " fuzz inputs threw");
  v.note("fuzz 100000 inputs, " + std::to_string(crashes) + " exceptions");
  return v;
}

// 8. Scope statement.
Verdict criterion_statement() {
  Verdict v;
  v.note(
      "published benchmark accuracies (e.g. 87.0 on MATH500 for a 7B policy with PF) need "
      "GPU-hosted policy and reward models and are not reproducible at desk scale; live mode "
      "targets them outside CI and criteria 1-7 are the verification suite");
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    Verdict (*fn)();
  };
  const Criterion criteria[] = {
      {1, "softmax example", criterion_softmax},
      {2, "HMM oracle equivalence", criterion_hmm},
      {3, "PF robustness vs search baselines", criterion_robustness},
      {4, "perfect-reward degeneracy", criterion_degeneracy},
      {5, "algorithmic invariants", criterion_invariants},
      {6, "wire-format goldens and mock replay", criterion_wire},
      {7, "answer parser corpus and fuzz", criterion_parser},
      {8, "non-reproducibility statement", criterion_statement},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.fn();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%d] %s %s (%.1fs): %s\n", c.id, v.pass ? "PASS" : "FAIL", c.name, secs,
                v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  }
  return failures == 0 ? 0 : 1;
}
