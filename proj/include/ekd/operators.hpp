#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ekd/prob.hpp"

namespace ekd {

enum class OperatorFamily { LinearMixture, PowerMean, EntropicGeometric };

std::string to_string(OperatorFamily family);

// A configured member of one of the three aggregation families.
//
//   LinearMixture          q(i) = sum_k w_k p_k(i)
//   PowerMean(alpha)       q(i) ~ (sum_k w_k p_k(i)^alpha)^(1/alpha)
//   EntropicGeometric(b)   q(i) ~ (prod_k p_k(i)^w_k)^(1/(1+b)) * (1/V)^(b/(1+b))
//
// where p_k is teacher k's distribution after its own temperature. The
// entropic form is the closed-form minimizer of
// sum_k w_k KL(q || p_k) + b KL(q || uniform); b = 0 is the weighted
// geometric mean. alpha = 1 reduces PowerMean to LinearMixture exactly.
struct AggregationOperator {
  OperatorFamily family = OperatorFamily::LinearMixture;
  double alpha = 1.0;
  double beta = 0.0;
  double epsilon_floor = 0.0;

  static AggregationOperator linear();
  static AggregationOperator power_mean(double alpha, double epsilon_floor = 0.0);
  static AggregationOperator entropic_geometric(double beta, double epsilon_floor = 0.0);

  void validate() const;
  // Stable human/machine label, e.g. "PowerMean(alpha=0.5)".
  std::string descriptor() const;
  bool satisfies_assumption_l() const {
    return family == OperatorFamily::LinearMixture ||
           (family == OperatorFamily::PowerMean && alpha == 1.0);
  }
};

// Applies each teacher's temperature to its distribution.
std::vector<Distribution> tempered(const TeacherEnsemble& ensemble, std::span<const Distribution> dists);

Distribution aggregate(const AggregationOperator& op, const TeacherEnsemble& ensemble,
                       std::span<const Distribution> dists);

// Shorthand for aggregate(AggregationOperator::linear(), ...).
Distribution linear_mixture(const TeacherEnsemble& ensemble, std::span<const Distribution> dists);

struct PairDistance {
  std::size_t first;
  std::size_t second;
  double max_l1;
  bool distinct;
};

struct DistinctnessReport {
  std::vector<std::string> operators;
  std::size_t trials;
  std::vector<PairDistance> pairs;
};

inline constexpr double kDistinctThreshold = 1e-6;

// Max L1 distance between every pair of operators over `trials` random
// teacher-distribution draws for the given ensemble.
DistinctnessReport operator_distinctness(const TeacherEnsemble& ensemble,
                                         std::span<const AggregationOperator> ops, std::size_t trials,
                                         std::uint64_t seed);

}  // namespace ekd
