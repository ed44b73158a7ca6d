#pragma once

#include "pfscale/rng.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace pfscale {

struct ResampleDistribution {
  std::vector<double> probs;
  std::vector<double> source_weights;
  double softmax_temperature = 1.0;
};

/// Non-finite weight handed to the softmax.
class NonFiniteWeight : public std::invalid_argument {
 public:
  NonFiniteWeight(std::size_t index, double value);
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// probs[i] = exp((w_i - max w) / temperature) / sum. Equal weights give an
/// exactly uniform vector.
ResampleDistribution softmax_distribution(std::span<const double> weights, double temperature = 1.0);

/// `count` i.i.d. multinomial draws (sampling with replacement), one
/// uniform per draw, in order.
std::vector<int> multinomial_resample(const ResampleDistribution& dist, int count, Rng& rng);

/// Single categorical draw.
int sample_index(const ResampleDistribution& dist, Rng& rng);

/// Replica-exchange acceptance for tempered targets pi_k(x) ~ exp(w(x)/T_k):
/// min(1, exp((w_next - w_this) * (1/T_this - 1/T_next))).
double swap_probability(double w_this, double w_next, double t_this, double t_next);

struct SwapDecision {
  double probability = 1.0;
  bool accepted = false;
};

/// Draws exactly one uniform and accepts when it falls below the swap probability.
SwapDecision decide_swap(double w_this, double w_next, double t_this, double t_next, Rng& rng);

}  // namespace pfscale
