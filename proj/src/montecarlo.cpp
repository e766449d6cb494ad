#include "ekd/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ekd/error.hpp"

namespace ekd {

void NoiseModel::validate() const {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be > 0");
  if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorCode::InvalidArgument, "rho must lie in [0, 1)");
  if (teachers < 1) throw Error(ErrorCode::EmptyEnsemble, "need at least one teacher");
  if (!(clip_margin > 0.0)) throw Error(ErrorCode::InvalidArgument, "clip_margin must be > 0");
  if (base.size() < 2) throw Error(ErrorCode::VocabTooSmall, "base distribution missing");
  if (base.min_entry() < clip_margin + kRangeSigmas * sigma)
    throw Error(ErrorCode::BaseTooCloseToBoundary,
                "base entries must be >= clip_margin + 6 sigma = " + std::to_string(clip_margin + kRangeSigmas * sigma));
}

double NoiseTensor::mean(std::size_t k, std::size_t i) const {
  double total = 0.0;
  std::size_t s = 0;
  for (; s + 1 < samples_; s += 2) total += at(s, k, i) + at(s + 1, k, i);
  if (s < samples_) total += at(s, k, i);
  return total / static_cast<double>(samples_);
}

namespace {

// Standard normal vector projected onto sum-zero and rescaled so each
// coordinate has unit variance.
void tangent_draw(Rng& rng, std::span<double> out) {
  const double v = static_cast<double>(out.size());
  double mean = 0.0;
  for (double& x : out) {
    x = rng.normal();
    mean += x;
  }
  mean /= v;
  const double scale = std::sqrt(v / (v - 1.0));
  for (double& x : out) x = (x - mean) * scale;
}

constexpr std::size_t kMaxAttemptsPerPair = 1000;

}  // namespace

NoiseTensor sample_teacher_noise(const NoiseModel& model, std::uint64_t seed, std::size_t n_samples, Exec exec) {
  model.validate();
  if (n_samples < 2 || n_samples % 2 != 0)
    throw Error(ErrorCode::InvalidArgument, "n_samples must be even and >= 2 (antithetic pairs)");

  const std::size_t k_count = model.teachers;
  const std::size_t v = model.base.size();
  const std::size_t pairs = n_samples / 2;
  const std::size_t batches = (pairs + kNoiseBatchPairs - 1) / kNoiseBatchPairs;
  const double shared = std::sqrt(model.rho);
  const double own = std::sqrt(1.0 - model.rho);

  NoiseTensor noise(n_samples, k_count, v);
  std::vector<std::size_t> batch_attempts(batches, 0);

  for_each_index(batches, exec, [&](std::size_t b) {
    Rng rng = Rng::derive(seed, b);
    std::vector<double> common(v), eps(k_count * v);
    const std::size_t first = b * kNoiseBatchPairs;
    const std::size_t last = std::min(pairs, first + kNoiseBatchPairs);
    std::size_t attempts = 0;
    for (std::size_t pair = first; pair < last; ++pair) {
      for (std::size_t tries = 0;; ++tries) {
        if (tries == kMaxAttemptsPerPair)
          throw Error(ErrorCode::ExcessiveRejection, "noise draws keep leaving the simplex");
        ++attempts;
        tangent_draw(rng, common);
        bool inside = true;
        for (std::size_t k = 0; k < k_count; ++k) {
          std::span<double> row(eps.data() + k * v, v);
          tangent_draw(rng, row);
          for (std::size_t i = 0; i < v; ++i) {
            row[i] = model.sigma * (shared * common[i] + own * row[i]);
            const double p = model.base[i];
            if (p - std::abs(row[i]) < model.clip_margin) inside = false;
          }
        }
        if (!inside) continue;
        for (std::size_t k = 0; k < k_count; ++k)
          for (std::size_t i = 0; i < v; ++i) {
            noise.at(2 * pair, k, i) = eps[k * v + i];
            noise.at(2 * pair + 1, k, i) = -eps[k * v + i];
          }
        break;
      }
    }
    batch_attempts[b] = attempts;
  });

  noise.attempts = std::accumulate(batch_attempts.begin(), batch_attempts.end(), std::size_t{0});
  noise.rejections = noise.attempts - pairs;
  if (2 * noise.rejections > noise.attempts)
    throw Error(ErrorCode::ExcessiveRejection, std::to_string(noise.rejections) + " of " +
                                                   std::to_string(noise.attempts) + " draws rejected");
  return noise;
}

double empirical_correlation(const NoiseTensor& noise, std::size_t a, std::size_t b, std::size_t token) {
  const double ma = noise.mean(a, token), mb = noise.mean(b, token);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t s = 0; s < noise.samples(); ++s) {
    const double x = noise.at(s, a, token) - ma;
    const double y = noise.at(s, b, token) - mb;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  return sab / std::sqrt(saa * sbb);
}

double theoretical_aggregate_variance(double sigma, double rho, std::span<const double> weights) {
  double sum = 0.0, sum_sq = 0.0;
  for (double w : weights) {
    sum += w;
    sum_sq += w * w;
  }
  // sum_{j != l} w_j w_l = (sum w)^2 - sum w^2
  return sigma * sigma * (sum_sq + rho * (sum * sum - sum_sq));
}

VarianceReport variance_reduction_experiment(const NoiseModel& model, std::span<const double> weights,
                                             std::uint64_t seed, std::size_t n_samples, Exec exec) {
  if (weights.size() != model.teachers) throw Error(ErrorCode::LengthMismatch, "weight count != K");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::NegativeWeight, "weights must be >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > kNormTolerance) throw Error(ErrorCode::NotNormalized, "weights must sum to 1");

  const NoiseTensor noise = sample_teacher_noise(model, seed, n_samples, exec);
  const double theory = theoretical_aggregate_variance(model.sigma, model.rho, weights);

  VarianceReport rep;
  rep.rejections = noise.rejections;
  rep.attempts = noise.attempts;
  for (std::size_t i = 0; i < noise.vocab(); ++i) {
    // The aggregate has exact zero mean (antithetic pairs), so the second
    // moment is the variance.
    double second = 0.0;
    for (std::size_t s = 0; s < noise.samples(); ++s) {
      double agg = 0.0;
      for (std::size_t k = 0; k < noise.teachers(); ++k) agg += weights[k] * noise.at(s, k, i);
      second += agg * agg;
    }
    const double empirical = second / static_cast<double>(noise.samples());
    const double rel = std::abs(empirical - theory) / theory;
    rep.tokens.push_back({i, model.base[i], empirical, theory, rel});
    rep.max_relative_error = std::max(rep.max_relative_error, rel);
  }
  return rep;
}

BiasModel make_bias_model(std::vector<Distribution> teacher_means, std::span<const double> weights) {
  if (teacher_means.empty()) throw Error(ErrorCode::EmptyEnsemble, "need at least one teacher mean");
  if (weights.size() != teacher_means.size()) throw Error(ErrorCode::LengthMismatch, "weight count != K");
  const std::size_t v = teacher_means.front().size();
  for (const auto& m : teacher_means)
    if (m.size() != v) throw Error(ErrorCode::DimensionMismatch, "teacher means differ in vocab size");
  // Reuses the ensemble's weight validation and normalization.
  const auto ensemble = TeacherEnsemble::from(weights, std::vector<double>(weights.size(), 1.0), v);
  const auto w = ensemble.weights();
  std::vector<double> mix(v, 0.0);
  for (std::size_t k = 0; k < teacher_means.size(); ++k)
    for (std::size_t i = 0; i < v; ++i) mix[i] += w[k] * teacher_means[k][i];
  return {std::move(teacher_means), w, Distribution::normalize(std::move(mix))};
}

BiasReport bias_attenuation_experiment(const BiasModel& bias, const Distribution& reference) {
  const auto& means = bias.teacher_means;
  if (reference.size() != bias.mean_of_means.size())
    throw Error(ErrorCode::DimensionMismatch, "reference vocab differs from teacher means");
  double spread = 0.0;
  for (std::size_t a = 0; a < means.size(); ++a)
    for (std::size_t b = a + 1; b < means.size(); ++b)
      spread = std::max(spread, l1_distance(means[a].probs(), means[b].probs()));
  if (spread <= 0.01)
    throw Error(ErrorCode::DegenerateCase, "teacher means coincide (max pairwise L1 <= 0.01); nothing to attenuate");

  BiasReport rep;
  for (std::size_t k = 0; k < means.size(); ++k) {
    rep.teacher_bias.push_back(l1_distance(means[k].probs(), reference.probs()));
    rep.weighted_bias += bias.weights[k] * rep.teacher_bias.back();
  }
  rep.aggregate_bias = l1_distance(bias.mean_of_means.probs(), reference.probs());
  rep.attenuation = rep.weighted_bias - rep.aggregate_bias;
  rep.strict = rep.attenuation > kSlackTolerance;
  rep.record = make_record("bias_attenuation", rep.aggregate_bias, rep.weighted_bias);
  return rep;
}

}  // namespace ekd
