#include "ekd/prob.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ekd/error.hpp"

namespace ekd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::ZeroSum: return "ZeroSum";
    case ErrorCode::LengthTooSmall: return "LengthTooSmall";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InfiniteDivergence: return "InfiniteDivergence";
    case ErrorCode::VocabTooSmall: return "VocabTooSmall";
    case ErrorCode::EmptyEnsemble: return "EmptyEnsemble";
    case ErrorCode::ZeroProbabilityForGeometric: return "ZeroProbabilityForGeometric";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidOperator: return "InvalidOperator";
    case ErrorCode::NoEligibleTokenPair: return "NoEligibleTokenPair";
    case ErrorCode::ZeroProbabilityAtTruth: return "ZeroProbabilityAtTruth";
    case ErrorCode::BaseTooCloseToBoundary: return "BaseTooCloseToBoundary";
    case ErrorCode::ExcessiveRejection: return "ExcessiveRejection";
    case ErrorCode::DegenerateCase: return "DegenerateCase";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::MissingTruth: return "MissingTruth";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InconsistentTeacherSet: return "InconsistentTeacherSet";
    case ErrorCode::InconsistentVocabSize: return "InconsistentVocabSize";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

void check_entries(const std::vector<double>& raw) {
  if (raw.size() < 2) throw Error(ErrorCode::LengthTooSmall, "distribution needs at least 2 entries");
  for (double x : raw) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NegativeEntry, "non-finite entry");
    if (x < 0.0) throw Error(ErrorCode::NegativeEntry, "entry " + std::to_string(x) + " < 0");
  }
}

double sum_of(std::span<const double> xs) { return std::accumulate(xs.begin(), xs.end(), 0.0); }

}  // namespace

Distribution Distribution::normalize(std::vector<double> raw) {
  check_entries(raw);
  const double total = sum_of(raw);
  if (!(total > 0.0)) throw Error(ErrorCode::ZeroSum, "entries sum to zero");
  if (total != 1.0)
    for (double& x : raw) x /= total;
  return Distribution(std::move(raw));
}

Distribution Distribution::validated(std::vector<double> raw) {
  check_entries(raw);
  const double total = sum_of(raw);
  if (std::abs(total - 1.0) > kAcceptTolerance)
    throw Error(ErrorCode::InvalidDistribution,
                "entries sum to " + std::to_string(total) + ", outside 1e-6 of 1");
  // Already-normalized vectors keep their exact bits so that serialized
  // instances replay identically.
  if (std::abs(total - 1.0) <= 1e-12) return Distribution(std::move(raw));
  return normalize(std::move(raw));
}

Distribution Distribution::uniform(std::size_t vocab) {
  if (vocab < 2) throw Error(ErrorCode::VocabTooSmall, "vocab must be >= 2");
  return Distribution(std::vector<double>(vocab, 1.0 / static_cast<double>(vocab)));
}

Distribution Distribution::one_hot(std::size_t vocab, std::size_t index) {
  if (vocab < 2) throw Error(ErrorCode::VocabTooSmall, "vocab must be >= 2");
  if (index >= vocab) throw Error(ErrorCode::InvalidArgument, "one-hot index out of range");
  std::vector<double> v(vocab, 0.0);
  v[index] = 1.0;
  return Distribution(std::move(v));
}

bool Distribution::strictly_positive() const {
  return std::all_of(probs_.begin(), probs_.end(), [](double x) { return x > 0.0; });
}

double Distribution::min_entry() const { return *std::min_element(probs_.begin(), probs_.end()); }

std::size_t Distribution::argmax() const {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

TeacherEnsemble::TeacherEnsemble(std::vector<TeacherSpec> teachers, std::size_t vocab_size)
    : teachers_(std::move(teachers)), vocab_size_(vocab_size) {
  if (teachers_.empty()) throw Error(ErrorCode::EmptyEnsemble, "ensemble needs at least one teacher");
  if (vocab_size_ < 2) throw Error(ErrorCode::VocabTooSmall, "vocab must be >= 2");
  double total = 0.0;
  for (const auto& t : teachers_) {
    if (!(t.temperature > 0.0) || !std::isfinite(t.temperature))
      throw Error(ErrorCode::NonPositiveTemperature, "teacher '" + t.id + "' temperature must be > 0");
    if (!(t.weight >= 0.0) || !std::isfinite(t.weight))
      throw Error(ErrorCode::NegativeWeight, "teacher '" + t.id + "' weight must be >= 0");
    total += t.weight;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::ZeroSum, "teacher weights sum to zero");
  if (std::abs(total - 1.0) > 1e-12)
    for (auto& t : teachers_) t.weight /= total;
}

TeacherEnsemble TeacherEnsemble::uniform(std::size_t k, std::size_t vocab_size) {
  std::vector<TeacherSpec> ts;
  for (std::size_t i = 0; i < k; ++i) ts.push_back({"t" + std::to_string(i), 1.0, 1.0});
  return TeacherEnsemble(std::move(ts), vocab_size);
}

TeacherEnsemble TeacherEnsemble::from(std::span<const double> weights, std::span<const double> temperatures,
                                      std::size_t vocab_size) {
  if (weights.size() != temperatures.size())
    throw Error(ErrorCode::LengthMismatch, "weights and temperatures differ in length");
  std::vector<TeacherSpec> ts;
  for (std::size_t i = 0; i < weights.size(); ++i)
    ts.push_back({"t" + std::to_string(i), temperatures[i], weights[i]});
  return TeacherEnsemble(std::move(ts), vocab_size);
}

std::vector<double> TeacherEnsemble::weights() const {
  std::vector<double> w;
  w.reserve(teachers_.size());
  for (const auto& t : teachers_) w.push_back(t.weight);
  return w;
}

std::vector<double> TeacherEnsemble::temperatures() const {
  std::vector<double> ts;
  ts.reserve(teachers_.size());
  for (const auto& t : teachers_) ts.push_back(t.temperature);
  return ts;
}

TeacherEnsemble TeacherEnsemble::with_weights(std::span<const double> weights) const {
  if (weights.size() != teachers_.size()) throw Error(ErrorCode::LengthMismatch, "weight count != K");
  auto ts = teachers_;
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i].weight = weights[i];
  return TeacherEnsemble(std::move(ts), vocab_size_);
}

TeacherEnsemble TeacherEnsemble::with_temperatures(std::span<const double> temperatures) const {
  if (temperatures.size() != teachers_.size())
    throw Error(ErrorCode::LengthMismatch, "temperature count != K");
  auto ts = teachers_;
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i].temperature = temperatures[i];
  return TeacherEnsemble(std::move(ts), vocab_size_);
}

Distribution make_distribution(std::vector<double> raw) { return Distribution::normalize(std::move(raw)); }

Distribution temperature_transform(const Distribution& p, double temperature) {
  if (!(temperature > 0.0) || std::isnan(temperature))
    throw Error(ErrorCode::NonPositiveTemperature, "temperature must be > 0");
  if (temperature == 1.0) return p;

  const std::size_t n = p.size();
  std::vector<double> out(n, 0.0);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (p[i] > 0.0) top = std::max(top, std::log(p[i]) / temperature);
  for (std::size_t i = 0; i < n; ++i)
    if (p[i] > 0.0) out[i] = std::exp(std::log(p[i]) / temperature - top);
  return Distribution::normalize(std::move(out));
}

double kl_divergence(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) throw Error(ErrorCode::LengthMismatch, "KL arguments differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    total += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  // Rounding can leave a tiny negative value when p == q.
  return std::max(total, 0.0);
}

double entropy(const Distribution& p) {
  double h = 0.0;
  for (double x : p.probs())
    if (x > 0.0) h -= x * std::log(x);
  return std::max(h, 0.0);
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "L1 arguments differ in length");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

double linf_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "Linf arguments differ in length");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

Distribution random_distribution(Rng& rng, std::size_t vocab, double concentration) {
  if (vocab < 2) throw Error(ErrorCode::VocabTooSmall, "vocab must be >= 2");
  if (!(concentration > 0.0)) throw Error(ErrorCode::InvalidArgument, "concentration must be > 0");
  std::vector<double> draws(vocab);
  for (auto& x : draws) {
    do {
      x = rng.gamma(concentration);
    } while (!(x > 0.0));
  }
  return Distribution::normalize(std::move(draws));
}

Distribution random_distribution(std::uint64_t seed, std::size_t vocab, double concentration) {
  Rng rng(seed);
  return random_distribution(rng, vocab, concentration);
}

std::vector<double> random_weights(Rng& rng, std::size_t k, double floor) {
  if (k == 0) throw Error(ErrorCode::EmptyEnsemble, "need at least one weight");
  if (floor < 0.0 || floor * static_cast<double>(k) >= 1.0)
    throw Error(ErrorCode::InvalidArgument, "weight floor infeasible");
  std::vector<double> w(k);
  double total = 0.0;
  for (auto& x : w) {
    do {
      x = rng.gamma(1.0);
    } while (!(x > 0.0));
    total += x;
  }
  const double free_mass = 1.0 - floor * static_cast<double>(k);
  for (auto& x : w) x = floor + free_mass * x / total;
  return w;
}

}  // namespace ekd
