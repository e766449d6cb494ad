#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ekd/rng.hpp"

namespace ekd {

inline constexpr double kNormTolerance = 1e-9;
inline constexpr double kAcceptTolerance = 1e-6;

// A point on the probability simplex. Immutable once built; every factory
// either normalizes exactly or rejects.
class Distribution {
 public:
  Distribution() = default;

  // Normalizes any non-negative vector with positive mass (length >= 2).
  static Distribution normalize(std::vector<double> raw);
  // Accepts a vector that already sums to 1 within kAcceptTolerance and
  // renormalizes it; rejects larger deviations with InvalidDistribution.
  static Distribution validated(std::vector<double> raw);
  static Distribution uniform(std::size_t vocab);
  static Distribution one_hot(std::size_t vocab, std::size_t index);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }
  const std::vector<double>& vec() const noexcept { return probs_; }

  bool strictly_positive() const;
  double min_entry() const;
  std::size_t argmax() const;

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  explicit Distribution(std::vector<double> probs) : probs_(std::move(probs)) {}
  std::vector<double> probs_;
};

struct TeacherSpec {
  std::string id;
  double temperature = 1.0;
  double weight = 1.0;
};

// K teachers sharing vocabulary size V. Weights are renormalized on
// construction so they always lie on the simplex.
class TeacherEnsemble {
 public:
  TeacherEnsemble(std::vector<TeacherSpec> teachers, std::size_t vocab_size);

  // Uniform weights, unit temperatures, ids "t0".."t{K-1}".
  static TeacherEnsemble uniform(std::size_t k, std::size_t vocab_size);
  static TeacherEnsemble from(std::span<const double> weights, std::span<const double> temperatures,
                              std::size_t vocab_size);

  std::size_t size() const noexcept { return teachers_.size(); }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  const std::vector<TeacherSpec>& teachers() const noexcept { return teachers_; }
  const TeacherSpec& operator[](std::size_t k) const { return teachers_[k]; }

  std::vector<double> weights() const;
  std::vector<double> temperatures() const;
  TeacherEnsemble with_weights(std::span<const double> weights) const;
  TeacherEnsemble with_temperatures(std::span<const double> temperatures) const;

 private:
  std::vector<TeacherSpec> teachers_;
  std::size_t vocab_size_;
};

Distribution make_distribution(std::vector<double> raw);

// p(i)^(1/T) renormalized, evaluated in the log domain so that tiny and huge
// temperatures neither underflow nor overflow. T == 1 returns p unchanged.
// Zero entries stay zero for every finite T.
Distribution temperature_transform(const Distribution& p, double temperature);

// Natural-log KL(p || q); +infinity when q(i) == 0 < p(i).
double kl_divergence(const Distribution& p, const Distribution& q);

double entropy(const Distribution& p);

double l1_distance(std::span<const double> a, std::span<const double> b);
double linf_distance(std::span<const double> a, std::span<const double> b);

// Symmetric Dirichlet(concentration) draw with strictly positive entries.
Distribution random_distribution(std::uint64_t seed, std::size_t vocab, double concentration);
Distribution random_distribution(Rng& rng, std::size_t vocab, double concentration);

// Uniform draw from the weight simplex, each weight at least `floor`.
std::vector<double> random_weights(Rng& rng, std::size_t k, double floor = 0.0);

}  // namespace ekd
