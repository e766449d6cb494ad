#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "ekd/operators.hpp"
#include "ekd/parallel.hpp"
#include "ekd/prob.hpp"

namespace ekd {

inline constexpr double kSlackTolerance = 1e-12;

// One inequality lhs <= rhs evaluated on one instance.
struct BoundCheckRecord {
  std::string claim_id;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // rhs - lhs
  bool pass = false;   // slack >= -kSlackTolerance
};

BoundCheckRecord make_record(std::string claim_id, double lhs, double rhs);

// KL(q || s_T) <= sum_k w_k KL(p_k || s_T) for the linear mixture q.
BoundCheckRecord jensen_gap(const TeacherEnsemble& ensemble, std::span<const Distribution> dists,
                            const Distribution& student, double student_temperature);
// Same measurement with q taken from an arbitrary operator. Only the linear
// case is a theorem; other families are observations.
BoundCheckRecord jensen_gap(const AggregationOperator& op, const TeacherEnsemble& ensemble,
                            std::span<const Distribution> dists, const Distribution& student,
                            double student_temperature);

// -log q(y) <= -sum_k w_k log p_k(y) for the linear mixture q.
BoundCheckRecord logloss_bound(const TeacherEnsemble& ensemble, std::span<const Distribution> dists,
                               std::size_t true_token);

struct AttenuationResult {
  // Strict attenuation q(i) <= p_max - max_k w_k (p_max - p_k(i)) < p_max.
  // Absent when no positively weighted teacher sits below p_max.
  std::optional<BoundCheckRecord> strict;
  // q(i) <= (1 - w*) max_{k != k*} p_k(i) + w* p_{k*}(i).
  BoundCheckRecord corollary;
};

AttenuationResult attenuation_check(const TeacherEnsemble& ensemble, std::span<const Distribution> dists,
                                    std::size_t token, std::size_t safety_teacher);
AttenuationResult attenuation_check(const AggregationOperator& op, const TeacherEnsemble& ensemble,
                                    std::span<const Distribution> dists, std::size_t token,
                                    std::size_t safety_teacher);

struct VarianceIdentityResult {
  BoundCheckRecord record;  // lhs = sum w^2 s^2, rhs = sum w s^2
  bool strict = false;      // at least two weights strictly inside (0, 1)
};

VarianceIdentityResult variance_identity_check(std::span<const double> weights, std::span<const double> variances);

// One randomized instance for the theorem sweeps, fully determined by
// (seed, trial): K in [2,8], V in [2,64], T in [0.25,4], strictly positive
// teachers and student.
struct TheoremInstance {
  TeacherEnsemble ensemble;
  std::vector<Distribution> dists;
  Distribution student;
  double student_temperature;
  std::size_t true_token;
  std::size_t token;
  std::size_t safety_teacher;
  std::vector<double> variances;
};

TheoremInstance make_theorem_instance(std::uint64_t seed, std::size_t trial);

struct SweepSummary {
  std::string claim_id;
  std::string op;
  bool asserted = true;
  std::size_t trials = 0;
  std::size_t evaluated = 0;  // trials whose premise held
  std::size_t failures = 0;
  double min_slack = 0.0;
  std::optional<std::size_t> worst_trial;

  SweepSummary() = default;
  SweepSummary(std::string claim, std::string subject, bool assert_it)
      : claim_id(std::move(claim)), op(std::move(subject)), asserted(assert_it) {}
};

// Runs every bound claim over `trials` random instances. Claims on the
// linear mixture are asserted; `observe` operators get jensen_mix_vs_multi
// and attenuation rows marked as observations.
std::vector<SweepSummary> sweep_theorems(std::uint64_t seed, std::size_t trials,
                                         std::span<const AggregationOperator> observe = {},
                                         Exec exec = Exec::Parallel);

}  // namespace ekd
