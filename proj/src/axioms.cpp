#include "ekd/axioms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ekd/error.hpp"

namespace ekd {

using nlohmann::json;

namespace {

constexpr double kNegativeTolerance = 1e-12;
constexpr double kMonotoneTolerance = 1e-12;
constexpr double kEligibleGap = 1e-6;
constexpr double kIdentityTolerance = 1e-12;
constexpr double kLimitTolerance = 1e-3;
constexpr double kHotTemperature = 1e6;
constexpr double kColdTemperature = 1e-3;
constexpr double kTieGap = 0.05;
constexpr double kPositiveFloor = 1e-9;
// Interior margin for the continuity generator: the compact region on which
// the empirical modulus is measured.
constexpr double kContinuityMargin = 0.05;

// Mixes p with uniform so that every entry is at least eta / V.
Distribution pull_inside(const Distribution& p, double eta) {
  const double v = static_cast<double>(p.size());
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = (1.0 - eta) * p[i] + eta / v;
  return Distribution::normalize(std::move(out));
}

Instance random_instance(Rng& rng, double margin, double weight_floor = 0.0) {
  const auto k = static_cast<std::size_t>(rng.uniform_int(2, 8));
  const auto v = static_cast<std::size_t>(rng.uniform_int(2, 64));
  std::vector<double> temps(k);
  for (auto& t : temps) t = rng.uniform(0.25, 4.0);
  const auto w = random_weights(rng, k, weight_floor);
  const double eta = std::max(margin, kPositiveFloor * static_cast<double>(v));
  std::vector<Distribution> dists;
  for (std::size_t i = 0; i < k; ++i) dists.push_back(pull_inside(random_distribution(rng, v, 1.0), eta));
  return {TeacherEnsemble::from(w, temps, v), std::move(dists)};
}

std::vector<double> run(const Subject& op, const Instance& inst) { return op.fn(inst.ensemble, inst.dists); }

struct Reduced {
  std::size_t failures = 0;
  std::size_t skipped = 0;
  double worst = 0.0;
  std::optional<std::size_t> worst_trial;
};

Reduced reduce(const std::vector<TrialOutcome>& outcomes) {
  Reduced r;
  for (std::size_t t = 0; t < outcomes.size(); ++t) {
    const auto& o = outcomes[t];
    if (o.skipped) {
      ++r.skipped;
      continue;
    }
    if (!o.failed) continue;
    ++r.failures;
    if (!r.worst_trial || o.magnitude > r.worst) {
      r.worst = o.magnitude;
      r.worst_trial = t;
    }
  }
  return r;
}

// Per-axiom generated case: everything needed to run and to serialize it.
struct Axiom3Case {
  Instance inst;
  bool eligible = false;
  std::size_t k_up = 0, k_down = 0, token = 0;
};

Axiom3Case axiom3_case(std::uint64_t seed, std::size_t trial, double delta) {
  Rng rng = Rng::derive(seed, trial);
  Axiom3Case c{random_instance(rng, 0.0, 2.0 * delta)};
  const auto ps = tempered(c.inst.ensemble, c.inst.dists);
  const auto w = c.inst.ensemble.weights();
  struct Triple {
    std::size_t up, down, token;
  };
  std::vector<Triple> eligible;
  for (std::size_t a = 0; a < ps.size(); ++a)
    for (std::size_t b = 0; b < ps.size(); ++b) {
      if (a == b || w[b] < 2.0 * delta) continue;
      for (std::size_t i = 0; i < c.inst.ensemble.vocab_size(); ++i)
        if (ps[a][i] > ps[b][i] + kEligibleGap) eligible.push_back({a, b, i});
    }
  if (eligible.empty()) return c;
  const auto& pick = eligible[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(eligible.size()) - 1))];
  c.eligible = true;
  c.k_up = pick.up;
  c.k_down = pick.down;
  c.token = pick.token;
  return c;
}

struct Axiom4Case {
  Instance base;
  Instance perturbed;
};

Axiom4Case axiom4_case(std::uint64_t seed, std::size_t trial, double eps) {
  Rng rng = Rng::derive(seed, trial);
  Instance base = random_instance(rng, kContinuityMargin);
  const std::size_t v = base.ensemble.vocab_size();

  std::vector<Distribution> dists;
  for (const auto& p : base.dists) {
    const auto r = random_distribution(rng, v, 1.0);
    std::vector<double> moved(v);
    for (std::size_t i = 0; i < v; ++i) moved[i] = (1.0 - eps / 2.0) * p[i] + (eps / 2.0) * r[i];
    dists.push_back(Distribution::normalize(std::move(moved)));
  }
  auto temps = base.ensemble.temperatures();
  for (auto& t : temps) t += rng.uniform() < 0.5 ? -eps : eps;
  auto w = base.ensemble.weights();
  for (auto& x : w) x = std::max(0.0, x + eps * rng.uniform(-1.0, 1.0));
  Instance perturbed{TeacherEnsemble::from(w, temps, v), std::move(dists)};
  return {std::move(base), std::move(perturbed)};
}

Distribution axiom5_case(std::uint64_t seed, std::size_t trial) {
  Rng rng = Rng::derive(seed, trial);
  const auto v = static_cast<std::size_t>(rng.uniform_int(2, 64));
  return pull_inside(random_distribution(rng, v, 1.0), kPositiveFloor * static_cast<double>(v));
}

json base_json(int axiom, const Subject& op, std::uint64_t seed, std::size_t trial) {
  return json{{"axiom", axiom}, {"op", op.name}, {"seed", seed}, {"trial", trial}};
}

AxiomReport finish(int axiom, const Subject& op, std::uint64_t seed, std::size_t trials,
                   const std::vector<TrialOutcome>& outcomes) {
  const Reduced r = reduce(outcomes);
  AxiomReport rep;
  rep.axiom_id = axiom;
  rep.op = op.name;
  rep.seed = seed;
  rep.trials = trials;
  rep.failures = r.failures;
  rep.skipped = r.skipped;
  rep.worst_violation = r.worst;
  return rep;
}

void require_trials(std::size_t trials) {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
}

}  // namespace

Subject make_subject(const AggregationOperator& op) {
  op.validate();
  return {op.descriptor(), [op](const TeacherEnsemble& e, std::span<const Distribution> d) {
            return aggregate(op, e, d).vec();
          }};
}

json instance_to_json(const Instance& inst) {
  json dists = json::array();
  for (const auto& d : inst.dists) dists.push_back(d.vec());
  return json{{"weights", inst.ensemble.weights()},
              {"temperatures", inst.ensemble.temperatures()},
              {"vocab_size", inst.ensemble.vocab_size()},
              {"dists", std::move(dists)}};
}

Instance instance_from_json(const json& j) {
  const auto w = j.at("weights").get<std::vector<double>>();
  const auto t = j.at("temperatures").get<std::vector<double>>();
  const auto v = j.at("vocab_size").get<std::size_t>();
  std::vector<Distribution> dists;
  for (const auto& d : j.at("dists")) dists.push_back(Distribution::validated(d.get<std::vector<double>>()));
  return {TeacherEnsemble::from(w, t, v), std::move(dists)};
}

double input_distance(const Instance& a, const Instance& b) {
  if (a.dists.size() != b.dists.size() || a.ensemble.size() != b.ensemble.size())
    throw Error(ErrorCode::DimensionMismatch, "instances differ in shape");
  double d = 0.0;
  for (std::size_t k = 0; k < a.dists.size(); ++k) d += l1_distance(a.dists[k].probs(), b.dists[k].probs());
  d += l1_distance(a.ensemble.temperatures(), b.ensemble.temperatures());
  d += l1_distance(a.ensemble.weights(), b.ensemble.weights());
  return d;
}

TrialOutcome axiom1_trial(const Subject& op, const Instance& inst) {
  const auto q = run(op, inst);
  double excess = 0.0;
  bool failed = false;
  double total = 0.0;
  for (double x : q) {
    total += x;
    if (!(x >= -kNegativeTolerance)) {
      failed = true;
      excess = std::max(excess, std::isnan(x) ? INFINITY : -x - kNegativeTolerance);
    }
  }
  const double err = std::abs(total - 1.0);
  if (!(err <= kNormTolerance)) {
    failed = true;
    excess = std::max(excess, std::isnan(err) ? INFINITY : err - kNormTolerance);
  }
  return {false, failed, excess};
}

TrialOutcome axiom2_trial(const Subject& op, const Instance& inst) {
  const auto q = run(op, inst);
  double lowest = INFINITY;
  for (double x : q) lowest = std::min(lowest, x);
  const bool failed = !(lowest > 0.0);
  return {false, failed, failed ? -lowest : 0.0};
}

TrialOutcome axiom3_trial(const Subject& op, const Instance& inst, std::size_t k_up, std::size_t k_down,
                          std::size_t token, double delta) {
  auto w = inst.ensemble.weights();
  w[k_up] += delta;
  w[k_down] -= delta;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= total;
  const Instance shifted{inst.ensemble.with_weights(w), inst.dists};
  const double before = run(op, inst).at(token);
  const double after = run(op, shifted).at(token);
  const double gap = after - before;
  const bool failed = gap < -kMonotoneTolerance;
  return {false, failed, failed ? -gap : 0.0};
}

TrialOutcome axiom4_trial(const Subject& op, const Instance& base, const Instance& perturbed,
                          double modulus_bound) {
  const double din = input_distance(base, perturbed);
  const double dout = l1_distance(run(op, base), run(op, perturbed));
  const double allowed = modulus_bound * din;
  const bool failed = !(dout <= allowed);
  return {false, failed, failed ? dout - allowed : 0.0};
}

TrialOutcome axiom5_trial(const Subject& op, const Distribution& p) {
  const std::size_t v = p.size();
  const auto single = [&](double temperature) {
    TeacherEnsemble e({{"t0", temperature, 1.0}}, v);
    const Distribution one[] = {p};
    return op.fn(e, one);
  };

  double excess = 0.0;
  bool failed = false;
  const double identity_err = linf_distance(single(1.0), p.probs());
  if (!(identity_err <= kIdentityTolerance)) {
    failed = true;
    excess = std::max(excess, identity_err - kIdentityTolerance);
  }
  const auto uni = Distribution::uniform(v);
  const double hot_err = linf_distance(single(kHotTemperature), uni.probs());
  if (!(hot_err <= kLimitTolerance)) {
    failed = true;
    excess = std::max(excess, hot_err - kLimitTolerance);
  }
  std::vector<double> sorted = p.vec();
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  if (sorted[0] - sorted[1] >= kTieGap) {
    const auto hot = Distribution::one_hot(v, p.argmax());
    std::vector<double> cold;
    try {
      cold = single(kColdTemperature);
    } catch (const Error& e) {
      // Tempering underflows to exact zeros, where a geometric subject is undefined.
      if (e.code() != ErrorCode::ZeroProbabilityForGeometric) throw;
      return {false, failed, excess};
    }
    const double cold_err = linf_distance(cold, hot.probs());
    if (!(cold_err <= kLimitTolerance)) {
      failed = true;
      excess = std::max(excess, cold_err - kLimitTolerance);
    }
  }
  return {false, failed, excess};
}

AxiomReport check_axiom1(const Subject& op, std::size_t trials, std::uint64_t seed, Exec exec) {
  require_trials(trials);
  const auto make = [seed](std::size_t t) {
    Rng rng = Rng::derive(seed, t);
    return random_instance(rng, 0.0);
  };
  const auto outcomes =
      map_indices<TrialOutcome>(trials, exec, [&](std::size_t t) { return axiom1_trial(op, make(t)); });
  auto rep = finish(1, op, seed, trials, outcomes);
  if (rep.failures > 0) {
    const std::size_t t = reduce(outcomes).worst_trial.value();
    auto j = base_json(1, op, seed, t);
    j["instance"] = instance_to_json(make(t));
    rep.counterexample = std::move(j);
  }
  return rep;
}

AxiomReport check_axiom2(const Subject& op, std::size_t trials, std::uint64_t seed, Exec exec) {
  require_trials(trials);
  const auto make = [seed](std::size_t t) {
    Rng rng = Rng::derive(seed, t);
    return random_instance(rng, 0.0);
  };
  const auto outcomes =
      map_indices<TrialOutcome>(trials, exec, [&](std::size_t t) { return axiom2_trial(op, make(t)); });
  auto rep = finish(2, op, seed, trials, outcomes);
  if (rep.failures > 0) {
    const std::size_t t = reduce(outcomes).worst_trial.value();
    auto j = base_json(2, op, seed, t);
    j["instance"] = instance_to_json(make(t));
    rep.counterexample = std::move(j);
  }
  return rep;
}

AxiomReport check_axiom3(const Subject& op, std::size_t trials, std::uint64_t seed, Axiom3Params params,
                         Exec exec) {
  require_trials(trials);
  if (!(params.delta > 0.0) || params.delta * 16.0 >= 1.0)
    throw Error(ErrorCode::InvalidArgument, "axiom 3 delta must lie in (0, 1/16)");
  const auto outcomes = map_indices<TrialOutcome>(trials, exec, [&](std::size_t t) {
    const auto c = axiom3_case(seed, t, params.delta);
    if (!c.eligible) return TrialOutcome{true, false, 0.0};
    return axiom3_trial(op, c.inst, c.k_up, c.k_down, c.token, params.delta);
  });
  auto rep = finish(3, op, seed, trials, outcomes);
  if (rep.failures > 0) {
    const std::size_t t = reduce(outcomes).worst_trial.value();
    const auto c = axiom3_case(seed, t, params.delta);
    auto j = base_json(3, op, seed, t);
    j["instance"] = instance_to_json(c.inst);
    j["k_up"] = c.k_up;
    j["k_down"] = c.k_down;
    j["token"] = c.token;
    j["delta"] = params.delta;
    rep.counterexample = std::move(j);
  }
  return rep;
}

AxiomReport check_axiom4(const Subject& op, std::size_t trials, std::uint64_t seed, Axiom4Params params,
                         Exec exec) {
  require_trials(trials);
  if (!(params.input_perturbation >= 0.0) || !(params.modulus_bound > 0.0))
    throw Error(ErrorCode::InvalidArgument, "axiom 4 needs perturbation >= 0 and modulus_bound > 0");
  const auto outcomes = map_indices<TrialOutcome>(trials, exec, [&](std::size_t t) {
    const auto c = axiom4_case(seed, t, params.input_perturbation);
    return axiom4_trial(op, c.base, c.perturbed, params.modulus_bound);
  });
  auto rep = finish(4, op, seed, trials, outcomes);
  if (rep.failures > 0) {
    const std::size_t t = reduce(outcomes).worst_trial.value();
    const auto c = axiom4_case(seed, t, params.input_perturbation);
    auto j = base_json(4, op, seed, t);
    j["instance"] = instance_to_json(c.base);
    j["perturbed"] = instance_to_json(c.perturbed);
    j["modulus_bound"] = params.modulus_bound;
    rep.counterexample = std::move(j);
  }
  return rep;
}

AxiomReport check_axiom5(const Subject& op, std::size_t trials, std::uint64_t seed, Exec exec) {
  require_trials(trials);
  const auto outcomes = map_indices<TrialOutcome>(
      trials, exec, [&](std::size_t t) { return axiom5_trial(op, axiom5_case(seed, t)); });
  auto rep = finish(5, op, seed, trials, outcomes);
  if (rep.failures > 0) {
    const std::size_t t = reduce(outcomes).worst_trial.value();
    auto j = base_json(5, op, seed, t);
    j["probs"] = axiom5_case(seed, t).vec();
    rep.counterexample = std::move(j);
  }
  return rep;
}

TrialOutcome replay_counterexample(const Subject& op, const json& cx) {
  const int axiom = cx.at("axiom").get<int>();
  switch (axiom) {
    case 1: return axiom1_trial(op, instance_from_json(cx.at("instance")));
    case 2: return axiom2_trial(op, instance_from_json(cx.at("instance")));
    case 3:
      return axiom3_trial(op, instance_from_json(cx.at("instance")), cx.at("k_up").get<std::size_t>(),
                          cx.at("k_down").get<std::size_t>(), cx.at("token").get<std::size_t>(),
                          cx.at("delta").get<double>());
    case 4:
      return axiom4_trial(op, instance_from_json(cx.at("instance")), instance_from_json(cx.at("perturbed")),
                          cx.at("modulus_bound").get<double>());
    case 5: return axiom5_trial(op, Distribution::validated(cx.at("probs").get<std::vector<double>>()));
    default: throw Error(ErrorCode::InvalidArgument, "unknown axiom id " + std::to_string(axiom));
  }
}

}  // namespace ekd
