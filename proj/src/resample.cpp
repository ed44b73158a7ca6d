#include "pfscale/resample.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pfscale {

NonFiniteWeight::NonFiniteWeight(std::size_t index, double value)
    : std::invalid_argument("non-finite weight " + std::to_string(value) + " at index " +
                            std::to_string(index)),
      index_(index) {}

ResampleDistribution softmax_distribution(std::span<const double> weights, double temperature) {
  if (weights.empty()) throw std::invalid_argument("softmax over an empty weight vector");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw std::invalid_argument("softmax temperature must be positive and finite");
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (!std::isfinite(weights[i])) throw NonFiniteWeight(i, weights[i]);

  ResampleDistribution dist;
  dist.source_weights.assign(weights.begin(), weights.end());
  dist.softmax_temperature = temperature;

  const double top = *std::max_element(weights.begin(), weights.end());
  dist.probs.resize(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    dist.probs[i] = std::exp((weights[i] - top) / temperature);
    total += dist.probs[i];
  }
  for (double& p : dist.probs) p /= total;
  return dist;
}

int sample_index(const ResampleDistribution& dist, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < dist.probs.size(); ++i) {
    if (dist.probs[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cumulative += dist.probs[i];
    if (u < cumulative) return static_cast<int>(i);
  }
  // Rounding left the cumulative sum just below u.
  return last_positive;
}

std::vector<int> multinomial_resample(const ResampleDistribution& dist, int count, Rng& rng) {
  if (count < 0) throw std::invalid_argument("negative resample count");
  if (dist.probs.empty()) throw std::invalid_argument("empty resampling distribution");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(sample_index(dist, rng));
  return out;
}

double swap_probability(double w_this, double w_next, double t_this, double t_next) {
  if (!(t_this > 0.0) || !(t_next > 0.0))
    throw std::invalid_argument("chain temperatures must be positive");
  const double log_ratio = (w_next - w_this) * (1.0 / t_this - 1.0 / t_next);
  if (log_ratio >= 0.0) return 1.0;
  return std::exp(log_ratio);
}

SwapDecision decide_swap(double w_this, double w_next, double t_this, double t_next, Rng& rng) {
  SwapDecision d;
  d.probability = swap_probability(w_this, w_next, t_this, t_next);
  d.accepted = rng.uniform() < d.probability;
  return d;
}

}  // namespace pfscale
