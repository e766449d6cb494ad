#include <algorithm>

#include "doctest.h"
#include "ekd/axioms.hpp"
#include "ekd/error.hpp"
#include "ekd/operators.hpp"
#include "support.hpp"

using namespace ekd;
using ekd::test::dist;

namespace {

Subject linear() { return make_subject(AggregationOperator::linear()); }

// Broken subjects used as negative controls.
Subject unnormalized() {
  return {"Unnormalized", [](const TeacherEnsemble& e, std::span<const Distribution> d) {
            auto q = linear_mixture(e, d).vec();
            for (auto& x : q) x *= 1.01;
            return q;
          }};
}

Subject zeroes_smallest() {
  return {"ZeroSmallest", [](const TeacherEnsemble& e, std::span<const Distribution> d) {
            auto q = linear_mixture(e, d).vec();
            auto it = std::min_element(q.begin(), q.end());
            const double m = *it;
            *it = 0.0;
            for (auto& x : q) x /= 1.0 - m;
            return q;
          }};
}

Subject argmax_one_hot() {
  return {"ArgmaxOneHot", [](const TeacherEnsemble& e, std::span<const Distribution> d) {
            const auto q = linear_mixture(e, d);
            return Distribution::one_hot(q.size(), q.argmax()).vec();
          }};
}

// Weights 1 - w_k (renormalized): moving weight toward a teacher lowers its influence.
Subject inverted_weights() {
  return {"InvertedWeights", [](const TeacherEnsemble& e, std::span<const Distribution> d) {
            auto w = e.weights();
            for (auto& x : w) x = (1.0 - x) / static_cast<double>(w.size() - 1);
            return linear_mixture(e.with_weights(w), d).vec();
          }};
}

}  // namespace

TEST_CASE("linear mixture passes every axiom") {
  const auto s = linear();
  CHECK(check_axiom1(s, 2000, 1).failures == 0);
  CHECK(check_axiom2(s, 2000, 1).failures == 0);
  const auto a3 = check_axiom3(s, 2000, 1);
  CHECK(a3.failures == 0);
  CHECK(a3.skipped < a3.trials / 2);
  CHECK(check_axiom4(s, 2000, 1).failures == 0);
  CHECK(check_axiom5(s, 2000, 1).failures == 0);
}

TEST_CASE("power mean passes the structural axioms") {
  const auto s = make_subject(AggregationOperator::power_mean(0.5));
  CHECK(check_axiom1(s, 1000, 2).failures == 0);
  CHECK(check_axiom2(s, 1000, 2).failures == 0);
  CHECK(check_axiom5(s, 1000, 2).failures == 0);
}

TEST_CASE("entropic geometric with beta > 0 is not temperature coherent at T=1") {
  const auto rep = check_axiom5(make_subject(AggregationOperator::entropic_geometric(0.5)), 200, 3);
  CHECK(rep.failures > 0);
  REQUIRE(rep.counterexample);
  const auto replay = replay_counterexample(make_subject(AggregationOperator::entropic_geometric(0.5)),
                                            *rep.counterexample);
  CHECK(replay.failed);
  CHECK(replay.magnitude == rep.worst_violation);
}

TEST_CASE("unnormalized subject fails convexity") {
  const auto rep = check_axiom1(unnormalized(), 200, 4);
  CHECK(rep.failures == rep.trials);
  REQUIRE(rep.counterexample);
  CHECK(replay_counterexample(unnormalized(), *rep.counterexample).failed);
}

TEST_CASE("zeroing the smallest entry fails positivity") {
  const auto rep = check_axiom2(zeroes_smallest(), 200, 5);
  CHECK(rep.failures == rep.trials);
  REQUIRE(rep.counterexample);
  const auto replay = replay_counterexample(zeroes_smallest(), *rep.counterexample);
  CHECK(replay.failed);
  CHECK(replay.magnitude == rep.worst_violation);
}

TEST_CASE("argmax one-hot fails continuity near a tie") {
  // Two teachers that disagree exactly: the mixture is tied, so an
  // infinitesimal perturbation flips the argmax.
  const auto ens = TeacherEnsemble::from(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 1.0}, 2);
  const Instance base{ens, {dist({0.6, 0.4}), dist({0.4, 0.6})}};
  const Instance pert{ens, {dist({0.6 - 1e-9, 0.4 + 1e-9}), dist({0.4, 0.6})}};
  const auto out = axiom4_trial(argmax_one_hot(), base, pert, 1e4);
  CHECK(out.failed);
  CHECK_FALSE(axiom4_trial(linear(), base, pert, 1e4).failed);
  CHECK(check_axiom4(argmax_one_hot(), 2000, 6).failures == 0);  // random draws rarely sit on a tie
}

TEST_CASE("inverted weights fail monotonicity") {
  const auto rep = check_axiom3(inverted_weights(), 500, 7);
  CHECK(rep.failures > 0);
  REQUIRE(rep.counterexample);
  CHECK(replay_counterexample(inverted_weights(), *rep.counterexample).failed);
}

TEST_CASE("entropic geometric monotonicity counterexamples replay exactly") {
  const auto s = make_subject(AggregationOperator::entropic_geometric(0.0));
  const auto rep = check_axiom3(s, 5000, 8);
  if (rep.failures > 0) {
    REQUIRE(rep.counterexample);
    const auto j = nlohmann::json::parse(rep.counterexample->dump());
    const auto replay = replay_counterexample(s, j);
    CHECK(replay.failed);
    CHECK(replay.magnitude == rep.worst_violation);
  }
}

TEST_CASE("serial and parallel execution agree") {
  const auto s = make_subject(AggregationOperator::entropic_geometric(0.0));
  for (int a = 1; a <= 5; ++a) {
    AxiomReport x, y;
    switch (a) {
      case 1: x = check_axiom1(s, 300, 9, Exec::Serial), y = check_axiom1(s, 300, 9, Exec::Parallel); break;
      case 2: x = check_axiom2(s, 300, 9, Exec::Serial), y = check_axiom2(s, 300, 9, Exec::Parallel); break;
      case 3: x = check_axiom3(s, 300, 9, {}, Exec::Serial), y = check_axiom3(s, 300, 9, {}, Exec::Parallel); break;
      case 4: x = check_axiom4(s, 300, 9, {}, Exec::Serial), y = check_axiom4(s, 300, 9, {}, Exec::Parallel); break;
      default: x = check_axiom5(s, 300, 9, Exec::Serial), y = check_axiom5(s, 300, 9, Exec::Parallel); break;
    }
    CHECK(x.failures == y.failures);
    CHECK(x.skipped == y.skipped);
    CHECK(x.worst_violation == y.worst_violation);
    CHECK(x.counterexample == y.counterexample);
  }
}

TEST_CASE("instance json round trip is exact") {
  Rng rng(10);
  const auto ens = TeacherEnsemble::from(random_weights(rng, 3), std::vector<double>{0.3, 1.7, 3.9}, 5);
  const Instance inst{ens, {random_distribution(rng, 5, 1.0), random_distribution(rng, 5, 1.0),
                            random_distribution(rng, 5, 1.0)}};
  const auto back = instance_from_json(nlohmann::json::parse(instance_to_json(inst).dump()));
  CHECK(back.ensemble.weights() == inst.ensemble.weights());
  CHECK(back.ensemble.temperatures() == inst.ensemble.temperatures());
  for (std::size_t k = 0; k < 3; ++k) CHECK(back.dists[k] == inst.dists[k]);
}

TEST_CASE("input distance") {
  const auto e1 = TeacherEnsemble::from(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 1.0}, 2);
  const auto e2 = TeacherEnsemble::from(std::vector<double>{0.6, 0.4}, std::vector<double>{1.0, 1.5}, 2);
  const Instance a{e1, {dist({0.5, 0.5}), dist({0.5, 0.5})}};
  const Instance b{e2, {dist({0.6, 0.4}), dist({0.5, 0.5})}};
  CHECK(input_distance(a, b) == doctest::Approx(0.2 + 0.5 + 0.2));
}

TEST_CASE("trial count must be positive") {
  ekd::test::check_error(ErrorCode::InvalidArgument, [] { check_axiom1(linear(), 0, 1); });
}

TEST_CASE("entropic geometric keeps the simplex") {
  CHECK(check_axiom1(make_subject(AggregationOperator::entropic_geometric(0.5)), 1000, 12).failures == 0);
}

TEST_CASE("continuity with a tight modulus and zero perturbation") {
  CHECK(check_axiom4(linear(), 1000, 13, {1e-6, 10.0}).failures == 0);
  Rng rng(14);
  const auto ens = TeacherEnsemble::from(random_weights(rng, 3), std::vector<double>{0.5, 1.0, 2.0}, 6);
  const Instance inst{ens, {random_distribution(rng, 6, 1.0), random_distribution(rng, 6, 1.0),
                            random_distribution(rng, 6, 1.0)}};
  for (const auto& op : {AggregationOperator::linear(), AggregationOperator::power_mean(0.5),
                         AggregationOperator::entropic_geometric(0.0)}) {
    const auto out = axiom4_trial(make_subject(op), inst, inst, 10.0);
    CHECK_FALSE(out.failed);
    CHECK(out.magnitude == 0.0);
  }
}
