#include "ekd/guarantees.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ekd/error.hpp"

namespace ekd {

BoundCheckRecord make_record(std::string claim_id, double lhs, double rhs) {
  const double slack = rhs - lhs;
  return {std::move(claim_id), lhs, rhs, slack, slack >= -kSlackTolerance};
}

namespace {

double finite_kl(const Distribution& p, const Distribution& q) {
  const double d = kl_divergence(p, q);
  if (std::isinf(d)) throw Error(ErrorCode::InfiniteDivergence, "student lacks support on a teacher token");
  return d;
}

}  // namespace

BoundCheckRecord jensen_gap(const AggregationOperator& op, const TeacherEnsemble& ensemble,
                            std::span<const Distribution> dists, const Distribution& student,
                            double student_temperature) {
  if (student.size() != ensemble.vocab_size())
    throw Error(ErrorCode::DimensionMismatch, "student vocab differs from ensemble");
  const Distribution s = temperature_transform(student, student_temperature);
  const auto ps = tempered(ensemble, dists);
  const Distribution q = aggregate(op, ensemble, dists);
  const auto w = ensemble.weights();
  double rhs = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k)
    if (w[k] > 0.0) rhs += w[k] * finite_kl(ps[k], s);
  return make_record("jensen_mix_vs_multi", finite_kl(q, s), rhs);
}

BoundCheckRecord jensen_gap(const TeacherEnsemble& ensemble, std::span<const Distribution> dists,
                            const Distribution& student, double student_temperature) {
  return jensen_gap(AggregationOperator::linear(), ensemble, dists, student, student_temperature);
}

BoundCheckRecord logloss_bound(const TeacherEnsemble& ensemble, std::span<const Distribution> dists,
                               std::size_t true_token) {
  if (true_token >= ensemble.vocab_size()) throw Error(ErrorCode::InvalidArgument, "true token out of range");
  const auto ps = tempered(ensemble, dists);
  const auto w = ensemble.weights();
  double rhs = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    if (w[k] == 0.0) continue;
    if (!(ps[k][true_token] > 0.0))
      throw Error(ErrorCode::ZeroProbabilityAtTruth, "teacher " + std::to_string(k) + " gives the truth zero mass");
    rhs -= w[k] * std::log(ps[k][true_token]);
  }
  const Distribution q = linear_mixture(ensemble, dists);
  return make_record("logloss_bound", -std::log(q[true_token]), rhs);
}

AttenuationResult attenuation_check(const AggregationOperator& op, const TeacherEnsemble& ensemble,
                                    std::span<const Distribution> dists, std::size_t token,
                                    std::size_t safety_teacher) {
  if (token >= ensemble.vocab_size()) throw Error(ErrorCode::InvalidArgument, "token out of range");
  if (safety_teacher >= ensemble.size()) throw Error(ErrorCode::InvalidArgument, "safety teacher out of range");
  const auto ps = tempered(ensemble, dists);
  const auto w = ensemble.weights();
  const double q = aggregate(op, ensemble, dists)[token];

  double p_max = 0.0;
  for (const auto& p : ps) p_max = std::max(p_max, p[token]);
  double certificate = 0.0;
  bool premise = false;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    if (w[k] > 0.0 && ps[k][token] < p_max) {
      premise = true;
      certificate = std::max(certificate, w[k] * (p_max - ps[k][token]));
    }
  }

  AttenuationResult out;
  if (premise) out.strict = make_record("attenuation_strict", q, p_max - certificate);

  double other_max = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k)
    if (k != safety_teacher) other_max = std::max(other_max, ps[k][token]);
  const double ws = w[safety_teacher];
  out.corollary = make_record("safety_corollary", q, (1.0 - ws) * other_max + ws * ps[safety_teacher][token]);
  return out;
}

AttenuationResult attenuation_check(const TeacherEnsemble& ensemble, std::span<const Distribution> dists,
                                    std::size_t token, std::size_t safety_teacher) {
  return attenuation_check(AggregationOperator::linear(), ensemble, dists, token, safety_teacher);
}

VarianceIdentityResult variance_identity_check(std::span<const double> weights, std::span<const double> variances) {
  if (weights.size() != variances.size())
    throw Error(ErrorCode::LengthMismatch, "weights and variances differ in length");
  if (weights.empty()) throw Error(ErrorCode::InvalidArgument, "need at least one weight");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::NegativeWeight, "weights must be >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > kNormTolerance) throw Error(ErrorCode::NotNormalized, "weights must sum to 1");
  double lhs = 0.0, rhs = 0.0;
  std::size_t interior = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!(variances[k] >= 0.0)) throw Error(ErrorCode::InvalidArgument, "variances must be >= 0");
    lhs += weights[k] * weights[k] * variances[k];
    rhs += weights[k] * variances[k];
    if (weights[k] > 0.0 && weights[k] < 1.0) ++interior;
  }
  return {make_record("variance_identity", lhs, rhs), interior >= 2};
}

}  // namespace ekd

namespace ekd {

TheoremInstance make_theorem_instance(std::uint64_t seed, std::size_t trial) {
  Rng rng = Rng::derive(seed, trial);
  const auto k = static_cast<std::size_t>(rng.uniform_int(2, 8));
  const auto v = static_cast<std::size_t>(rng.uniform_int(2, 64));
  std::vector<double> temps(k);
  for (auto& t : temps) t = rng.uniform(0.25, 4.0);
  const auto w = random_weights(rng, k);
  const auto positive = [&](double conc) {
    auto p = random_distribution(rng, v, conc).vec();
    for (auto& x : p) x = x * (1.0 - 1e-9 * static_cast<double>(v)) + 1e-9;
    return Distribution::normalize(std::move(p));
  };
  std::vector<Distribution> dists;
  for (std::size_t i = 0; i < k; ++i) dists.push_back(positive(1.0));
  Distribution student = positive(1.0);
  const double student_t = rng.uniform(0.5, 2.0);
  const auto y = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(v) - 1));
  const auto token = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(v) - 1));
  const auto safety = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(k) - 1));
  std::vector<double> variances(k);
  for (auto& s : variances) s = rng.uniform(0.0, 1.0);
  return {TeacherEnsemble::from(w, temps, v), std::move(dists), std::move(student), student_t, y, token, safety,
          std::move(variances)};
}

namespace {

struct TrialSlacks {
  // NaN marks "premise not met" for this trial.
  std::vector<double> slack;
};

}  // namespace

std::vector<SweepSummary> sweep_theorems(std::uint64_t seed, std::size_t trials,
                                         std::span<const AggregationOperator> observe, Exec exec) {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
  std::vector<SweepSummary> claims = {
      {"jensen_mix_vs_multi", "LinearMixture", true},
      {"logloss_bound", "LinearMixture", true},
      {"attenuation_strict", "LinearMixture", true},
      {"safety_corollary", "LinearMixture", true},
      {"variance_identity", "LinearMixture", true},
  };
  for (const auto& op : observe) {
    claims.push_back({"jensen_mix_vs_multi", op.descriptor(), false});
    claims.push_back({"attenuation_strict", op.descriptor(), false});
    claims.push_back({"safety_corollary", op.descriptor(), false});
  }
  const double skip = std::numeric_limits<double>::quiet_NaN();

  const auto per_trial = map_indices<TrialSlacks>(trials, exec, [&](std::size_t t) {
    const auto inst = make_theorem_instance(seed, t);
    TrialSlacks out;
    out.slack.push_back(jensen_gap(inst.ensemble, inst.dists, inst.student, inst.student_temperature).slack);
    out.slack.push_back(logloss_bound(inst.ensemble, inst.dists, inst.true_token).slack);
    const auto att = attenuation_check(inst.ensemble, inst.dists, inst.token, inst.safety_teacher);
    out.slack.push_back(att.strict ? att.strict->slack : skip);
    out.slack.push_back(att.corollary.slack);
    out.slack.push_back(variance_identity_check(inst.ensemble.weights(), inst.variances).record.slack);
    for (const auto& op : observe) {
      out.slack.push_back(jensen_gap(op, inst.ensemble, inst.dists, inst.student, inst.student_temperature).slack);
      const auto a = attenuation_check(op, inst.ensemble, inst.dists, inst.token, inst.safety_teacher);
      out.slack.push_back(a.strict ? a.strict->slack : skip);
      out.slack.push_back(a.corollary.slack);
    }
    return out;
  });

  for (auto& c : claims) {
    c.trials = trials;
    c.min_slack = std::numeric_limits<double>::infinity();
  }
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t c = 0; c < claims.size(); ++c) {
      const double s = per_trial[t].slack[c];
      if (std::isnan(s)) continue;
      auto& claim = claims[c];
      ++claim.evaluated;
      if (s < -kSlackTolerance) ++claim.failures;
      if (s < claim.min_slack) {
        claim.min_slack = s;
        claim.worst_trial = t;
      }
    }
  }
  return claims;
}

}  // namespace ekd
