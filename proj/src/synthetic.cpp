#include "pfscale/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pfscale {

namespace {

void check_row(const std::vector<double>& row, std::size_t width, const char* what) {
  if (row.size() != width) throw std::invalid_argument(std::string(what) + ": wrong row width");
  double total = 0.0;
  for (double v : row) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative entry");
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-12)
    throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
}

std::vector<double> dirichlet_row(std::size_t width, Rng& rng) {
  std::vector<double> row(width);
  double total = 0.0;
  for (double& v : row) {
    v = -std::log1p(-rng.uniform());  // Exp(1), i.e. Gamma(1)
    total += v;
  }
  for (double& v : row) v /= total;
  return row;
}

int categorical(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double c = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    c += probs[i];
    if (u < c) return static_cast<int>(i);
  }
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return static_cast<int>(i);
  return 0;
}

std::string hmm_step_text(std::size_t t, int state) {
  return " " + std::to_string(t) + ": state " + std::to_string(state) + "\n";
}

class HmmTransition final : public TransitionBackend {
 public:
  explicit HmmTransition(const DiscreteHMM& hmm) : hmm_(hmm) {}

  Step init_step(const Prompt&, Rng& rng) override {
    return make(1, categorical(hmm_.initial, rng));
  }

  Step next_step(const Prompt&, std::span<const Step> prior, Rng& rng) override {
    if (prior.empty()) return make(1, categorical(hmm_.initial, rng));
    const int prev = hmm_state_of(prior.back());
    return make(prior.size() + 1,
                categorical(hmm_.transition_matrix[static_cast<std::size_t>(prev)], rng));
  }

  double generation_temperature() const override { return 1.0; }

 private:
  Step make(std::size_t t, int state) const {
    const bool last = static_cast<int>(t) >= hmm_.horizon;
    return Step(hmm_step_text(t, state), last ? FinishReason::eos : FinishReason::continuing);
  }

  DiscreteHMM hmm_;
};

class HmmReward final : public RewardBackend {
 public:
  HmmReward(const DiscreteHMM& hmm, std::vector<int> observations)
      : hmm_(hmm), obs_(std::move(observations)) {}

  StepRewardVector score_steps(const Prompt&, std::span<const Step> steps, Rng&) override {
    if (steps.size() > obs_.size()) throw std::out_of_range("trajectory longer than horizon");
    StepRewardVector out;
    out.reserve(steps.size());
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const auto s = static_cast<std::size_t>(hmm_state_of(steps[t]));
      out.push_back(hmm_.emission_matrix[s][static_cast<std::size_t>(obs_[t])]);
    }
    return out;
  }

  double score_whole(const Prompt& prompt, std::span<const Step> steps, Rng& rng) override {
    const StepRewardVector v = score_steps(prompt, steps, rng);
    return std::accumulate(v.begin(), v.end(), 1.0, std::multiplies<>());
  }

 private:
  DiscreteHMM hmm_;
  std::vector<int> obs_;
};

std::string branch_step_text(const NoisyRewardTask& task, std::size_t t, int branch,
                             std::span<const Step> prior) {
  std::string text = " " + std::to_string(t) + ": take branch " +
                     std::string(1, static_cast<char>('A' + branch)) + "\n\n";
  if (static_cast<int>(t) == task.depth) {
    std::string path;
    for (const auto& s : prior) path += static_cast<char>('A' + noisy_branch_of(s));
    path += static_cast<char>('A' + branch);
    text += "Therefore, the final answer is: $\\boxed{" + path + "}$. I hope it is correct.";
  }
  return text;
}

class NoisyTransition final : public TransitionBackend {
 public:
  NoisyTransition(const NoisyRewardTask& task, double temperature)
      : task_(task), temperature_(temperature) {}

  Step init_step(const Prompt& prompt, Rng& rng) override { return next_step(prompt, {}, rng); }

  Step next_step(const Prompt&, std::span<const Step> prior, Rng& rng) override {
    const std::size_t t = prior.size() + 1;
    const int branch = static_cast<int>(rng.below(static_cast<std::size_t>(task_.branching)));
    const bool last = static_cast<int>(t) >= task_.depth;
    return Step(branch_step_text(task_, t, branch, prior),
                last ? FinishReason::eos : FinishReason::continuing);
  }

  double generation_temperature() const override { return temperature_; }

 private:
  NoisyRewardTask task_;
  double temperature_;
};

class NoisyReward final : public RewardBackend {
 public:
  explicit NoisyReward(const NoisyRewardTask& task) : task_(task) {}

  StepRewardVector score_steps(const Prompt&, std::span<const Step> steps, Rng& rng) override {
    const std::size_t good = task_.correct_prefix(steps);
    StepRewardVector out;
    out.reserve(steps.size());
    for (std::size_t t = 0; t < steps.size(); ++t)
      out.push_back(noisy(t < good ? 1.0 : task_.wrong_reward, steps.first(t + 1), rng));
    return out;
  }

  double score_whole(const Prompt&, std::span<const Step> steps, Rng& rng) override {
    if (steps.empty()) throw std::invalid_argument("score_whole on an empty trajectory");
    const bool good = task_.correct_prefix(steps) == steps.size();
    return noisy(good ? 1.0 : task_.wrong_reward, steps, rng);
  }

 private:
  double noisy(double base, std::span<const Step> prefix, Rng& rng) const {
    if (task_.reward_noise_sigma <= 0.0) return base;
    double z = 0.0;
    if (task_.noise == NoiseModel::per_draw) {
      z = rng.normal();
    } else {
      Rng keyed(task_.seed, std::stoull(digest(prefix), nullptr, 16));
      z = keyed.normal();
    }
    return std::clamp(base + task_.reward_noise_sigma * z, 0.0, 1.0);
  }

  NoisyRewardTask task_;
};

}  // namespace

void DiscreteHMM::validate() const {
  if (n_states < 1 || n_symbols < 1) throw std::invalid_argument("HMM needs states and symbols");
  if (horizon < 1) throw std::invalid_argument("HMM horizon must be >= 1");
  const auto s = static_cast<std::size_t>(n_states);
  check_row(initial, s, "initial");
  if (transition_matrix.size() != s || emission_matrix.size() != s)
    throw std::invalid_argument("HMM matrices need one row per state");
  for (const auto& row : transition_matrix) check_row(row, s, "transition");
  for (const auto& row : emission_matrix)
    check_row(row, static_cast<std::size_t>(n_symbols), "emission");
}

DiscreteHMM DiscreteHMM::random(int n_states, int n_symbols, int horizon, Rng& rng) {
  DiscreteHMM h;
  h.n_states = n_states;
  h.n_symbols = n_symbols;
  h.horizon = horizon;
  const auto s = static_cast<std::size_t>(n_states);
  h.initial = dirichlet_row(s, rng);
  for (std::size_t i = 0; i < s; ++i) h.transition_matrix.push_back(dirichlet_row(s, rng));
  for (std::size_t i = 0; i < s; ++i)
    h.emission_matrix.push_back(dirichlet_row(static_cast<std::size_t>(n_symbols), rng));
  return h;
}

std::vector<int> DiscreteHMM::sample_observations(Rng& rng) const {
  std::vector<int> obs;
  int x = categorical(initial, rng);
  for (int t = 0; t < horizon; ++t) {
    if (t > 0) x = categorical(transition_matrix[static_cast<std::size_t>(x)], rng);
    obs.push_back(categorical(emission_matrix[static_cast<std::size_t>(x)], rng));
  }
  return obs;
}

Marginals hmm_exact_filtering(const DiscreteHMM& hmm, std::span<const int> observations) {
  hmm.validate();
  if (static_cast<int>(observations.size()) != hmm.horizon)
    throw std::invalid_argument("observation count differs from the HMM horizon");
  const auto s = static_cast<std::size_t>(hmm.n_states);
  Marginals out;
  std::vector<double> alpha(s);
  for (std::size_t t = 0; t < observations.size(); ++t) {
    const int o = observations[t];
    if (o < 0 || o >= hmm.n_symbols) throw std::invalid_argument("observation symbol out of range");
    std::vector<double> next(s, 0.0);
    for (std::size_t j = 0; j < s; ++j) {
      double prior = 0.0;
      if (t == 0) {
        prior = hmm.initial[j];
      } else {
        for (std::size_t i = 0; i < s; ++i) prior += alpha[i] * hmm.transition_matrix[i][j];
      }
      next[j] = prior * hmm.emission_matrix[j][static_cast<std::size_t>(o)];
    }
    const double total = std::accumulate(next.begin(), next.end(), 0.0);
    if (!(total > 0.0))
      throw std::domain_error("observation sequence has zero likelihood at t=" + std::to_string(t));
    for (double& v : next) v /= total;
    alpha = next;
    out.push_back(std::move(next));
  }
  return out;
}

int hmm_state_of(const Step& step) {
  const std::size_t pos = step.text.rfind("state ");
  if (pos == std::string::npos) throw std::invalid_argument("step does not encode an HMM state");
  return std::stoi(step.text.substr(pos + 6));
}

BackendPair hmm_as_backends(const DiscreteHMM& hmm, std::vector<int> observations) {
  hmm.validate();
  if (static_cast<int>(observations.size()) != hmm.horizon)
    throw std::invalid_argument("observation count differs from the HMM horizon");
  return {std::make_unique<HmmTransition>(hmm),
          std::make_unique<HmmReward>(hmm, std::move(observations))};
}

PFConfig hmm_filter_config(const DiscreteHMM& hmm, int n_particles, std::uint64_t seed) {
  PFConfig cfg;
  cfg.n_particles = n_particles;
  cfg.max_steps = hmm.horizon;
  cfg.aggregation = AggregationMode::last;
  cfg.transform = WeightTransform::log;
  cfg.softmax_temperature = 1.0;
  cfg.generation_temperature = 1.0;
  cfg.seed = seed;
  return cfg;
}

Marginals hmm_particle_marginals(const DiscreteHMM& hmm, std::span<const int> observations,
                                 int n_particles, std::uint64_t seed) {
  auto backends = hmm_as_backends(hmm, std::vector<int>(observations.begin(), observations.end()));
  const PFConfig cfg = hmm_filter_config(hmm, n_particles, seed);
  const auto s = static_cast<std::size_t>(hmm.n_states);
  Marginals est(static_cast<std::size_t>(hmm.horizon), std::vector<double>(s, 0.0));
  const Prompt prompt("hmm", "hidden markov model");
  particle_filter(prompt, *backends.transition, *backends.reward, cfg, nullptr, nullptr, nullptr,
                  [&](int, std::span<const Particle> ps, const ResampleDistribution& dist) {
                    const std::size_t t = ps.front().size() - 1;
                    for (std::size_t i = 0; i < ps.size(); ++i)
                      est[t][static_cast<std::size_t>(hmm_state_of(ps[i].steps()[t]))] +=
                          dist.probs[i];
                  });
  return est;
}

double mean_tv_distance(const Marginals& a, const Marginals& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("marginal tables differ in length");
  double total = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].size() != b[t].size()) throw std::invalid_argument("marginal rows differ in width");
    double tv = 0.0;
    for (std::size_t s = 0; s < a[t].size(); ++s) tv += std::fabs(a[t][s] - b[t][s]);
    total += 0.5 * tv;
  }
  return total / static_cast<double>(a.size());
}

void NoisyRewardTask::validate() const {
  if (branching < 1 || branching > 26) throw std::invalid_argument("branching must be in [1, 26]");
  if (depth < 1) throw std::invalid_argument("depth must be >= 1");
  if (static_cast<int>(correct_path.size()) != depth)
    throw std::invalid_argument("correct_path length must equal depth");
  for (int b : correct_path)
    if (b < 0 || b >= branching) throw std::invalid_argument("correct_path entry out of range");
  if (!(reward_noise_sigma >= 0.0)) throw std::invalid_argument("reward_noise_sigma must be >= 0");
}

NoisyRewardTask NoisyRewardTask::random(int branching, int depth, double sigma, std::uint64_t seed) {
  NoisyRewardTask task;
  task.branching = branching;
  task.depth = depth;
  task.reward_noise_sigma = sigma;
  task.seed = seed;
  Rng rng(seed, 0x7a5c);
  for (int t = 0; t < depth; ++t)
    task.correct_path.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(branching))));
  task.validate();
  return task;
}

std::string NoisyRewardTask::gold_answer() const {
  std::string s;
  for (int b : correct_path) s += static_cast<char>('A' + b);
  return s;
}

std::string NoisyRewardTask::question_text() const {
  return "Find the hidden path of length " + std::to_string(depth) + " through a tree with " +
         std::to_string(branching) + " branches per node. Answer with the branch letters in order.";
}

std::size_t NoisyRewardTask::correct_prefix(std::span<const Step> steps) const {
  std::size_t n = 0;
  while (n < steps.size() && n < correct_path.size() && noisy_branch_of(steps[n]) == correct_path[n])
    ++n;
  return n;
}

bool NoisyRewardTask::is_correct(std::span<const Step> steps) const {
  return static_cast<int>(steps.size()) == depth && correct_prefix(steps) == steps.size();
}

nlohmann::json NoisyRewardTask::to_json() const {
  return {{"branching", branching},
          {"depth", depth},
          {"correct_path", correct_path},
          {"reward_noise_sigma", reward_noise_sigma},
          {"wrong_reward", wrong_reward},
          {"noise", noise == NoiseModel::per_draw ? "per_draw" : "per_prefix"},
          {"seed", seed}};
}

NoisyRewardTask NoisyRewardTask::from_json(const nlohmann::json& j) {
  NoisyRewardTask t;
  t.branching = j.at("branching").get<int>();
  t.depth = j.at("depth").get<int>();
  t.correct_path = j.at("correct_path").get<std::vector<int>>();
  t.reward_noise_sigma = j.at("reward_noise_sigma").get<double>();
  t.wrong_reward = j.value("wrong_reward", 0.0);
  const std::string noise = j.value("noise", "per_draw");
  if (noise == "per_draw") t.noise = NoiseModel::per_draw;
  else if (noise == "per_prefix") t.noise = NoiseModel::per_prefix;
  else throw std::invalid_argument("unknown noise model: " + noise);
  t.seed = j.value("seed", std::uint64_t{0});
  t.validate();
  return t;
}

NoisyRewardTask NoisyRewardTask::from_answer(std::string_view answer, int branching, double sigma,
                                             std::uint64_t seed) {
  NoisyRewardTask t;
  t.branching = branching;
  t.depth = static_cast<int>(answer.size());
  t.reward_noise_sigma = sigma;
  t.seed = seed;
  for (char c : answer) t.correct_path.push_back(c - 'A');
  t.validate();
  return t;
}

int noisy_branch_of(const Step& step) {
  const std::size_t pos = step.text.find("take branch ");
  if (pos == std::string::npos || pos + 12 >= step.text.size()) return -1;
  return step.text[pos + 12] - 'A';
}

BackendPair noisy_task_backends(const NoisyRewardTask& task, double generation_temperature) {
  task.validate();
  return {std::make_unique<NoisyTransition>(task, generation_temperature),
          std::make_unique<NoisyReward>(task)};
}

}  // namespace pfscale
