#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ekd/operators.hpp"
#include "ekd/parallel.hpp"
#include "ekd/prob.hpp"
#include "json.hpp"

namespace ekd {

// Anything that maps (ensemble, teacher distributions) to an output vector.
// The output is a raw vector rather than a Distribution so that deliberately
// broken fixtures can be expressed.
using AggregateFn =
    std::function<std::vector<double>(const TeacherEnsemble&, std::span<const Distribution>)>;

struct Subject {
  std::string name;
  AggregateFn fn;
};

Subject make_subject(const AggregationOperator& op);

struct AxiomReport {
  int axiom_id = 0;
  std::string op;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::size_t failures = 0;
  std::size_t skipped = 0;
  // Largest amount by which a failing trial exceeded its criterion; 0 when
  // nothing failed.
  double worst_violation = 0.0;
  // Serialized worst failing instance; present iff failures > 0.
  std::optional<nlohmann::json> counterexample;
};

struct Axiom3Params {
  double delta = 1e-4;
};

struct Axiom4Params {
  double input_perturbation = 1e-6;
  double modulus_bound = 1e4;
};

AxiomReport check_axiom1(const Subject& op, std::size_t trials, std::uint64_t seed, Exec exec = Exec::Parallel);
AxiomReport check_axiom2(const Subject& op, std::size_t trials, std::uint64_t seed, Exec exec = Exec::Parallel);
AxiomReport check_axiom3(const Subject& op, std::size_t trials, std::uint64_t seed, Axiom3Params params = {},
                         Exec exec = Exec::Parallel);
AxiomReport check_axiom4(const Subject& op, std::size_t trials, std::uint64_t seed, Axiom4Params params = {},
                         Exec exec = Exec::Parallel);
AxiomReport check_axiom5(const Subject& op, std::size_t trials, std::uint64_t seed, Exec exec = Exec::Parallel);

// Outcome of a single instance, as recomputed from a counterexample.
struct TrialOutcome {
  bool skipped = false;
  bool failed = false;
  double magnitude = 0.0;
};

// Re-runs one serialized counterexample through the same per-instance check
// that produced it.
TrialOutcome replay_counterexample(const Subject& op, const nlohmann::json& counterexample);

// Per-instance checks, exposed for hand-built instances (negative controls).
struct Instance {
  TeacherEnsemble ensemble;
  std::vector<Distribution> dists;
};

nlohmann::json instance_to_json(const Instance& inst);
Instance instance_from_json(const nlohmann::json& j);

TrialOutcome axiom1_trial(const Subject& op, const Instance& inst);
TrialOutcome axiom2_trial(const Subject& op, const Instance& inst);
TrialOutcome axiom3_trial(const Subject& op, const Instance& inst, std::size_t k_up, std::size_t k_down,
                          std::size_t token, double delta);
TrialOutcome axiom4_trial(const Subject& op, const Instance& base, const Instance& perturbed,
                          double modulus_bound);
TrialOutcome axiom5_trial(const Subject& op, const Distribution& p);

// Total input perturbation between two instances of the same shape:
// sum of L1 distances between distributions plus absolute temperature and
// weight changes.
double input_distance(const Instance& a, const Instance& b);

}  // namespace ekd
