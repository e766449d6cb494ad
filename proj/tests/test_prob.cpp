#include <cmath>
#include <limits>

#include "doctest.h"
#include "ekd/error.hpp"
#include "ekd/prob.hpp"
#include "support.hpp"

using namespace ekd;
using ekd::test::check_close;
using ekd::test::check_error;
using ekd::test::dist;

TEST_CASE("make_distribution normalizes and rejects bad input") {
  check_close(make_distribution({2.0, 1.0, 1.0}), {0.5, 0.25, 0.25}, 1e-15);
  check_error(ErrorCode::NegativeEntry, [] { make_distribution({0.5, -0.1, 0.6}); });
  check_error(ErrorCode::ZeroSum, [] { make_distribution({0.0, 0.0}); });
  check_error(ErrorCode::LengthTooSmall, [] { make_distribution({1.0}); });
  check_error(ErrorCode::NegativeEntry, [] { make_distribution({std::nan(""), 1.0}); });
}

TEST_CASE("validated accepts within 1e-6 and keeps exact inputs bit-for-bit") {
  const std::vector<double> raw = {0.1, 0.2, 0.7};
  CHECK(Distribution::validated(raw).vec() == raw);
  check_error(ErrorCode::InvalidDistribution, [] { Distribution::validated({0.5, 0.6}); });
  const auto d = Distribution::validated({0.5, 0.5000005});
  CHECK(std::abs(d[0] + d[1] - 1.0) < 1e-15);
}

TEST_CASE("temperature transform oracle values") {
  check_close(temperature_transform(dist({0.7, 0.2, 0.1}), 2.0),
              {0.52287938300786971, 0.27949078654617094, 0.19762983044595936}, 1e-15);
  const auto p = dist({0.6, 0.3, 0.1});
  CHECK(temperature_transform(p, 1.0) == p);
  check_close(temperature_transform(dist({0.5, 0.0, 0.5}), 3.0), {0.5, 0.0, 0.5}, 1e-15);
  check_close(temperature_transform(p, 1e8), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-8);
  check_close(temperature_transform(p, 1e-3), {1.0, 0.0, 0.0}, 1e-12);
  check_error(ErrorCode::NonPositiveTemperature, [&] { temperature_transform(p, 0.0); });
  check_error(ErrorCode::NonPositiveTemperature, [&] { temperature_transform(p, -1.0); });
}

TEST_CASE("temperature transform composes multiplicatively") {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const auto p = random_distribution(rng, 10, 1.0);
    const double a = rng.uniform(0.3, 3.0), b = rng.uniform(0.3, 3.0);
    check_close(temperature_transform(temperature_transform(p, a), b).probs(),
                temperature_transform(p, a * b).probs(), 1e-12);
  }
}

TEST_CASE("kl divergence and entropy") {
  CHECK(kl_divergence(dist({0.5, 0.5}), dist({0.9, 0.1})) == doctest::Approx(0.51082562376599068).epsilon(1e-14));
  CHECK(kl_divergence(dist({1.0, 0.0}), dist({0.5, 0.5})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(std::isinf(kl_divergence(dist({0.5, 0.5}), dist({1.0, 0.0}))));
  const auto p = dist({0.2, 0.3, 0.5});
  CHECK(kl_divergence(p, p) == 0.0);
  CHECK(entropy(dist({0.5, 0.25, 0.25})) == doctest::Approx(1.039720770839918).epsilon(1e-14));
  CHECK(entropy(Distribution::one_hot(4, 2)) == 0.0);
}

TEST_CASE("kl divergence is nonnegative on random pairs") {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    const std::size_t v = 2 + rng.uniform_int(0, 30);
    const auto p = random_distribution(rng, v, 0.5), q = random_distribution(rng, v, 0.5);
    CHECK(kl_divergence(p, q) >= 0.0);
  }
}

TEST_CASE("distances") {
  const std::vector<double> a = {0.2, 0.8}, b = {0.5, 0.5};
  CHECK(l1_distance(a, b) == doctest::Approx(0.6));
  CHECK(linf_distance(a, b) == doctest::Approx(0.3));
  check_error(ErrorCode::LengthMismatch, [] {
    const std::vector<double> x = {1.0}, y = {0.5, 0.5};
    l1_distance(x, y);
  });
}

TEST_CASE("teacher ensemble validation") {
  const auto ens = TeacherEnsemble::from(std::vector<double>{2.0, 2.0}, std::vector<double>{1.0, 2.0}, 4);
  check_close(ens.weights(), std::vector<double>{0.5, 0.5}, 0.0);
  check_error(ErrorCode::EmptyEnsemble, [] { TeacherEnsemble({}, 4); });
  check_error(ErrorCode::NegativeWeight, [] {
    TeacherEnsemble::from(std::vector<double>{1.0, -0.5}, std::vector<double>{1.0, 1.0}, 4);
  });
  check_error(ErrorCode::NonPositiveTemperature, [] {
    TeacherEnsemble::from(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 0.0}, 4);
  });
  check_error(ErrorCode::VocabTooSmall, [] { TeacherEnsemble::uniform(2, 1); });
  check_error(ErrorCode::ZeroSum, [] {
    TeacherEnsemble::from(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 1.0}, 4);
  });
}

TEST_CASE("random generators are seeded and valid") {
  CHECK(random_distribution(42, 16, 1.0) == random_distribution(42, 16, 1.0));
  CHECK_FALSE(random_distribution(42, 16, 1.0) == random_distribution(43, 16, 1.0));
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto w = random_weights(rng, 4, 0.1);
    double s = 0.0;
    for (double x : w) {
      CHECK(x >= 0.1 - 1e-15);
      s += x;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("derived streams differ and are reproducible") {
  Rng a = Rng::derive(9, 0), b = Rng::derive(9, 1), c = Rng::derive(9, 0);
  const auto x = a(), y = b(), z = c();
  CHECK(x != y);
  CHECK(x == z);
}

TEST_CASE("normalization and entropy examples") {
  check_close(make_distribution({2, 2}), {0.5, 0.5}, 0.0);
  check_close(make_distribution({1, 0, 0}), {1, 0, 0}, 0.0);
  check_close(make_distribution({0.3, 0.3, 0.3}), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-16);
  CHECK(entropy(dist({0.5, 0.5})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(entropy(Distribution::uniform(4)) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  check_close(temperature_transform(dist({0.7, 0.2, 0.1}), 1e6), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-4);
}

TEST_CASE("high concentration gives near-uniform draws") {
  for (std::uint64_t s = 0; s < 20; ++s) check_close(random_distribution(s, 4, 1e4), {0.25, 0.25, 0.25, 0.25}, 0.05);
  check_error(ErrorCode::VocabTooSmall, [] { random_distribution(1, 1, 1.0); });
}

TEST_CASE("temperature preserves the argmax") {
  Rng rng(21);
  for (int t = 0; t < 300; ++t) {
    const auto p = random_distribution(rng, 2 + rng.uniform_int(0, 20), 1.0);
    const double temp = std::exp(rng.uniform(-3.0, 3.0));
    CHECK(temperature_transform(p, temp).argmax() == p.argmax());
  }
}
