#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ekd/guarantees.hpp"
#include "ekd/parallel.hpp"
#include "ekd/prob.hpp"

namespace ekd {

// Synthetic teacher errors eps_k around a shared base distribution.
// Each eps_k lives in the simplex tangent space (sums to zero) with marginal
// variance sigma^2 at every token; pairwise teacher correlation is rho via a
// shared common factor.
struct NoiseModel {
  Distribution base;
  double sigma = 0.01;
  double rho = 0.0;
  std::size_t teachers = 2;
  double clip_margin = 1e-3;

  // Half-width of the noise band the base must leave room for, in sigmas.
  static constexpr double kRangeSigmas = 6.0;

  void validate() const;
};

class NoiseTensor {
 public:
  NoiseTensor(std::size_t samples, std::size_t teachers, std::size_t vocab)
      : samples_(samples), teachers_(teachers), vocab_(vocab), data_(samples * teachers * vocab, 0.0) {}

  std::size_t samples() const noexcept { return samples_; }
  std::size_t teachers() const noexcept { return teachers_; }
  std::size_t vocab() const noexcept { return vocab_; }

  double& at(std::size_t s, std::size_t k, std::size_t i) { return data_[(s * teachers_ + k) * vocab_ + i]; }
  double at(std::size_t s, std::size_t k, std::size_t i) const { return data_[(s * teachers_ + k) * vocab_ + i]; }
  std::span<const double> raw() const noexcept { return data_; }

  // Mean over samples, summed antithetic pair by pair so it is exactly zero.
  double mean(std::size_t k, std::size_t i) const;

  std::size_t rejections = 0;
  std::size_t attempts = 0;

 private:
  std::size_t samples_, teachers_, vocab_;
  std::vector<double> data_;
};

inline constexpr std::size_t kNoiseBatchPairs = 256;

// n_samples must be even: samples 2j and 2j+1 are an antithetic (+eps, -eps)
// pair. Batches of kNoiseBatchPairs pairs draw from Rng::derive(seed, batch).
NoiseTensor sample_teacher_noise(const NoiseModel& model, std::uint64_t seed, std::size_t n_samples,
                                 Exec exec = Exec::Parallel);

double empirical_correlation(const NoiseTensor& noise, std::size_t teacher_a, std::size_t teacher_b,
                             std::size_t token);

struct TokenVariance {
  std::size_t token;
  double base_prob;
  double empirical;
  double theoretical;
  double relative_error;
};

struct VarianceReport {
  std::vector<TokenVariance> tokens;
  std::size_t rejections = 0;
  std::size_t attempts = 0;
  double max_relative_error = 0.0;
};

// sigma^2 (sum_k w_k^2 + rho sum_{j != l} w_j w_l).
double theoretical_aggregate_variance(double sigma, double rho, std::span<const double> weights);

VarianceReport variance_reduction_experiment(const NoiseModel& model, std::span<const double> weights,
                                             std::uint64_t seed, std::size_t n_samples,
                                             Exec exec = Exec::Parallel);

// Heterogeneous teacher conditional expectations and their weighted average.
struct BiasModel {
  std::vector<Distribution> teacher_means;
  std::vector<double> weights;
  Distribution mean_of_means;
};

BiasModel make_bias_model(std::vector<Distribution> teacher_means, std::span<const double> weights);

struct BiasReport {
  std::vector<double> teacher_bias;  // L1(mean_k, reference)
  double weighted_bias = 0.0;        // sum_k w_k bias_k
  double aggregate_bias = 0.0;       // L1(mean_of_means, reference)
  double attenuation = 0.0;          // weighted_bias - aggregate_bias
  bool strict = false;
  BoundCheckRecord record;           // aggregate_bias <= weighted_bias
};

BiasReport bias_attenuation_experiment(const BiasModel& bias, const Distribution& reference);

}  // namespace ekd
