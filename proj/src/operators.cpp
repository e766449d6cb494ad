#include "ekd/operators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ekd/error.hpp"

namespace ekd {

std::string to_string(OperatorFamily family) {
  switch (family) {
    case OperatorFamily::LinearMixture: return "LinearMixture";
    case OperatorFamily::PowerMean: return "PowerMean";
    case OperatorFamily::EntropicGeometric: return "EntropicGeometric";
  }
  return "Unknown";
}

AggregationOperator AggregationOperator::linear() { return {}; }

AggregationOperator AggregationOperator::power_mean(double alpha, double epsilon_floor) {
  AggregationOperator op{OperatorFamily::PowerMean, alpha, 0.0, epsilon_floor};
  op.validate();
  return op;
}

AggregationOperator AggregationOperator::entropic_geometric(double beta, double epsilon_floor) {
  AggregationOperator op{OperatorFamily::EntropicGeometric, 1.0, beta, epsilon_floor};
  op.validate();
  return op;
}

void AggregationOperator::validate() const {
  if (family == OperatorFamily::PowerMean && !(alpha > 0.0 && alpha <= 1.0))
    throw Error(ErrorCode::InvalidOperator, "PowerMean alpha must lie in (0, 1]");
  if (family == OperatorFamily::EntropicGeometric && !(beta >= 0.0 && std::isfinite(beta)))
    throw Error(ErrorCode::InvalidOperator, "EntropicGeometric beta must be >= 0");
  if (!(epsilon_floor >= 0.0 && epsilon_floor <= 1e-6))
    throw Error(ErrorCode::InvalidOperator, "epsilon_floor must lie in [0, 1e-6]");
}

std::string AggregationOperator::descriptor() const {
  std::ostringstream os;
  os.precision(17);
  os << to_string(family);
  switch (family) {
    case OperatorFamily::LinearMixture: break;
    case OperatorFamily::PowerMean: os << "(alpha=" << alpha; break;
    case OperatorFamily::EntropicGeometric: os << "(beta=" << beta; break;
  }
  if (family != OperatorFamily::LinearMixture) {
    if (epsilon_floor > 0.0) os << ",epsilon_floor=" << epsilon_floor;
    os << ")";
  } else if (epsilon_floor > 0.0) {
    os << "(epsilon_floor=" << epsilon_floor << ")";
  }
  return os.str();
}

std::vector<Distribution> tempered(const TeacherEnsemble& ensemble, std::span<const Distribution> dists) {
  if (dists.size() != ensemble.size())
    throw Error(ErrorCode::DimensionMismatch,
                "got " + std::to_string(dists.size()) + " distributions for K=" + std::to_string(ensemble.size()));
  std::vector<Distribution> out;
  out.reserve(dists.size());
  for (std::size_t k = 0; k < dists.size(); ++k) {
    if (dists[k].size() != ensemble.vocab_size())
      throw Error(ErrorCode::DimensionMismatch, "teacher " + std::to_string(k) + " has wrong vocab size");
    out.push_back(temperature_transform(dists[k], ensemble[k].temperature));
  }
  return out;
}

namespace {

Distribution floor_entries(const Distribution& p, double eps) {
  std::vector<double> v = p.vec();
  for (double& x : v) x = std::max(x, eps);
  return Distribution::normalize(std::move(v));
}

Distribution linear_kernel(std::span<const double> w, std::span<const Distribution> ps, std::size_t vocab) {
  std::vector<double> q(vocab, 0.0);
  for (std::size_t k = 0; k < ps.size(); ++k)
    for (std::size_t i = 0; i < vocab; ++i) q[i] += w[k] * ps[k][i];
  return Distribution::normalize(std::move(q));
}

Distribution power_kernel(double alpha, std::span<const double> w, std::span<const Distribution> ps,
                          std::size_t vocab) {
  std::vector<double> q(vocab, 0.0);
  for (std::size_t k = 0; k < ps.size(); ++k)
    for (std::size_t i = 0; i < vocab; ++i) q[i] += w[k] * std::pow(ps[k][i], alpha);
  // Scale by the largest inner sum before the 1/alpha power so small alpha
  // cannot overflow; the factor cancels in normalization.
  double top = 0.0;
  for (double x : q) top = std::max(top, x);
  for (double& x : q) x = std::pow(x / top, 1.0 / alpha);
  return Distribution::normalize(std::move(q));
}

Distribution entropic_kernel(double beta, std::span<const double> w, std::span<const Distribution> ps,
                             std::size_t vocab) {
  std::vector<double> logq(vocab, 0.0);
  const double log_uniform = -std::log(static_cast<double>(vocab));
  for (std::size_t i = 0; i < vocab; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < ps.size(); ++k)
      if (w[k] > 0.0) acc += w[k] * std::log(ps[k][i]);
    logq[i] = (acc + beta * log_uniform) / (1.0 + beta);
  }
  double top = logq[0];
  for (double x : logq) top = std::max(top, x);
  for (double& x : logq) x = std::exp(x - top);
  return Distribution::normalize(std::move(logq));
}

}  // namespace

Distribution aggregate(const AggregationOperator& op, const TeacherEnsemble& ensemble,
                       std::span<const Distribution> dists) {
  op.validate();
  std::vector<Distribution> ps = tempered(ensemble, dists);
  if (op.epsilon_floor > 0.0)
    for (auto& p : ps) p = floor_entries(p, op.epsilon_floor);
  const std::vector<double> w = ensemble.weights();
  const std::size_t vocab = ensemble.vocab_size();

  switch (op.family) {
    case OperatorFamily::LinearMixture:
      return linear_kernel(w, ps, vocab);
    case OperatorFamily::PowerMean:
      if (op.alpha == 1.0) return linear_kernel(w, ps, vocab);
      return power_kernel(op.alpha, w, ps, vocab);
    case OperatorFamily::EntropicGeometric:
      for (std::size_t k = 0; k < ps.size(); ++k)
        if (w[k] > 0.0 && !ps[k].strictly_positive())
          throw Error(ErrorCode::ZeroProbabilityForGeometric,
                      "teacher " + std::to_string(k) + " assigns zero probability; set epsilon_floor > 0");
      return entropic_kernel(op.beta, w, ps, vocab);
  }
  throw Error(ErrorCode::InvalidOperator, "unknown operator family");
}

Distribution linear_mixture(const TeacherEnsemble& ensemble, std::span<const Distribution> dists) {
  return aggregate(AggregationOperator::linear(), ensemble, dists);
}

DistinctnessReport operator_distinctness(const TeacherEnsemble& ensemble,
                                         std::span<const AggregationOperator> ops, std::size_t trials,
                                         std::uint64_t seed) {
  if (ops.size() < 2) throw Error(ErrorCode::InvalidArgument, "distinctness needs at least two operators");
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");

  DistinctnessReport report;
  report.trials = trials;
  for (const auto& op : ops) report.operators.push_back(op.descriptor());
  for (std::size_t a = 0; a < ops.size(); ++a)
    for (std::size_t b = a + 1; b < ops.size(); ++b) report.pairs.push_back({a, b, 0.0, false});

  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = Rng::derive(seed, t);
    std::vector<Distribution> dists;
    for (std::size_t k = 0; k < ensemble.size(); ++k)
      dists.push_back(random_distribution(rng, ensemble.vocab_size(), 1.0));
    std::vector<Distribution> outs;
    for (const auto& op : ops) outs.push_back(aggregate(op, ensemble, dists));
    for (auto& pair : report.pairs)
      pair.max_l1 = std::max(pair.max_l1, l1_distance(outs[pair.first].probs(), outs[pair.second].probs()));
  }
  for (auto& pair : report.pairs) pair.distinct = pair.max_l1 > kDistinctThreshold;
  return report;
}

}  // namespace ekd
