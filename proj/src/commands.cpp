#include "ekd/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "ekd/axioms.hpp"
#include "ekd/distill.hpp"
#include "ekd/error.hpp"
#include "ekd/guarantees.hpp"
#include "ekd/io.hpp"
#include "ekd/montecarlo.hpp"
#include "ekd/operators.hpp"

namespace ekd {

using nlohmann::json;

namespace {

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json load_config(const CommandLine& cmd) {
  if (!cmd.config) return json::object();
  std::ifstream in(*cmd.config);
  if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open config " + cmd.config->string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, cmd.config->string() + ": " + e.what());
  }
}

// The resolved config: file contents with CLI overrides applied. Reports
// embed it so any row can be re-executed from its run_config row.
json resolve(const CommandLine& cmd) {
  json cfg = load_config(cmd);
  if (!cfg.is_object()) throw Error(ErrorCode::ConfigInvalid, "config must be a JSON object");
  if (cmd.seed) cfg["seed"] = *cmd.seed;
  if (cmd.trials) cfg["trials"] = *cmd.trials;
  if (!cfg.contains("seed")) throw Error(ErrorCode::ConfigInvalid, "a seed is required (config key 'seed' or --seed)");
  if (!cfg["seed"].is_number_unsigned())
    throw Error(ErrorCode::ConfigInvalid, "seed must be a non-negative integer");
  return cfg;
}

json header_row(const std::string& command, const json& cfg) {
  return json{{"claim_id", "run_config"},
              {"command", command},
              {"seed", cfg.at("seed")},
              {"instance_hash", instance_hash(cfg)},
              {"config", cfg}};
}

std::string status_of(const json& row) {
  if (!row.contains("asserted") || !row.contains("pass")) return "";
  if (!row["asserted"].get<bool>()) return "OBSERVED";
  return row["pass"].get<bool>() ? "PASS" : "FAIL";
}

bool rows_ok(const std::vector<json>& rows) {
  for (const auto& r : rows)
    if (status_of(r) == "FAIL") return false;
  return true;
}

std::string detail_of(const json& row) {
  std::ostringstream os;
  os << std::setprecision(6);
  const auto put = [&](const char* key) {
    if (row.contains(key) && !row[key].is_null()) os << key << '=' << row[key] << ' ';
  };
  for (const char* key : {"trials", "evaluated", "failures", "worst_violation", "min_slack", "max_l1",
                          "relative_error", "attenuation", "steps", "final_max_kl", "violations"})
    put(key);
  std::string s = os.str();
  if (!s.empty()) s.pop_back();
  return s;
}

std::string summarize(const std::string& command, const std::vector<json>& rows, bool ok) {
  std::ostringstream os;
  os << command << " summary\n\n";
  os << std::left << std::setw(26) << "claim_id" << std::setw(52) << "subject" << std::setw(10) << "status"
     << "detail\n";
  os << std::string(112, '-') << '\n';
  for (const auto& r : rows) {
    const auto status = status_of(r);
    if (status.empty()) continue;
    std::string subject = r.value("op", std::string{});
    if (r.contains("subject")) subject = r["subject"].get<std::string>();
    os << std::left << std::setw(26) << r["claim_id"].get<std::string>() << std::setw(52) << subject
       << std::setw(10) << status << detail_of(r) << '\n';
  }
  os << '\n' << "overall: " << (ok ? "PASS" : "FAIL") << " (asserted checks only)\n";
  return os.str();
}

// --- verify-axioms -----------------------------------------------------------

std::vector<AggregationOperator> parse_operator_list(ConfigReader& r, const std::string& key,
                                                     std::vector<AggregationOperator> fallback) {
  if (!r.has(key)) return fallback;
  const auto& arr = r.raw(key);
  if (!arr.is_array()) r.fail(key + " must be an array");
  std::vector<AggregationOperator> ops;
  for (std::size_t i = 0; i < arr.size(); ++i) ops.push_back(parse_operator(arr[i], key + "[" + std::to_string(i) + "]"));
  return ops;
}

std::vector<AggregationOperator> default_operators() {
  return {AggregationOperator::linear(), AggregationOperator::power_mean(0.5),
          AggregationOperator::entropic_geometric(0.0)};
}

bool axiom_asserted(const AggregationOperator& op, int axiom) {
  return op.satisfies_assumption_l() || axiom <= 2;
}

CommandResult verify_axioms(const CommandLine& cmd) {
  const json cfg = resolve(cmd);
  ConfigReader r(cfg, "verify-axioms");
  const auto seed = r.get<std::uint64_t>("seed");
  const auto trials = r.get_or<std::size_t>("trials", 10000);
  const auto ops = parse_operator_list(r, "operators", default_operators());
  const auto axioms = r.get_or<std::vector<int>>("axioms", {1, 2, 3, 4, 5});
  Axiom3Params p3{r.get_or<double>("delta", 1e-4)};
  Axiom4Params p4{r.get_or<double>("input_perturbation", 1e-6), r.get_or<double>("modulus_bound", 1e4)};
  const auto distinct_trials = r.get_or<std::size_t>("distinctness_trials", 100);
  r.finish();
  for (int a : axioms)
    if (a < 1 || a > 5) throw Error(ErrorCode::ConfigInvalid, "axioms entries must lie in 1..5");

  std::vector<json> rows{header_row("verify-axioms", cfg)};
  for (const auto& op : ops) {
    const Subject subject = make_subject(op);
    for (int a : axioms) {
      AxiomReport rep;
      json params = json::object();
      switch (a) {
        case 1: rep = check_axiom1(subject, trials, seed); break;
        case 2: rep = check_axiom2(subject, trials, seed); break;
        case 3:
          rep = check_axiom3(subject, trials, seed, p3);
          params = {{"delta", p3.delta}};
          break;
        case 4:
          rep = check_axiom4(subject, trials, seed, p4);
          params = {{"input_perturbation", p4.input_perturbation}, {"modulus_bound", p4.modulus_bound}};
          break;
        case 5: rep = check_axiom5(subject, trials, seed); break;
      }
      const bool asserted = axiom_asserted(op, a);
      json row{{"claim_id", "axiom" + std::to_string(a)},
               {"op", rep.op},
               {"operator", operator_to_json(op)},
               {"seed", seed},
               {"trials", rep.trials},
               {"failures", rep.failures},
               {"skipped", rep.skipped},
               {"worst_violation", finite_or_null(rep.worst_violation)},
               {"params", params},
               {"asserted", asserted},
               {"pass", rep.failures == 0}};
      row["instance_hash"] = instance_hash(json{{"claim_id", row["claim_id"]},
                                                {"operator", row["operator"]},
                                                {"seed", seed},
                                                {"trials", trials},
                                                {"params", params}});
      if (rep.counterexample) row["counterexample"] = *rep.counterexample;
      rows.push_back(std::move(row));
    }
  }

  if (ops.size() >= 2 && distinct_trials > 0) {
    const auto ensemble = TeacherEnsemble::from(std::vector<double>{0.7, 0.3}, std::vector<double>{1.0, 1.0}, 8);
    const auto rep = operator_distinctness(ensemble, ops, distinct_trials, seed);
    for (const auto& pair : rep.pairs) {
      const auto& a = ops[pair.first];
      const auto& b = ops[pair.second];
      // Linear-equivalent pairs must coincide; all other pairs must differ.
      const bool same_family = a.satisfies_assumption_l() && b.satisfies_assumption_l();
      json row{{"claim_id", "operator_distinctness"},
               {"subject", rep.operators[pair.first] + " vs " + rep.operators[pair.second]},
               {"seed", seed},
               {"trials", rep.trials},
               {"max_l1", pair.max_l1},
               {"distinct", pair.distinct},
               {"expected_distinct", !same_family},
               {"asserted", true},
               {"pass", pair.distinct != same_family}};
      row["instance_hash"] = instance_hash(json{{"claim_id", "operator_distinctness"},
                                                {"ops", {operator_to_json(a), operator_to_json(b)}},
                                                {"seed", seed},
                                                {"trials", rep.trials}});
      rows.push_back(std::move(row));
    }
  }
  return {"verify-axioms", rows, "", rows_ok(rows)};
}

// --- verify-theorems ---------------------------------------------------------

json sweep_row(const SweepSummary& s, std::uint64_t seed, const json& source) {
  json row{{"claim_id", s.claim_id},
           {"op", s.op},
           {"seed", seed},
           {"trials", s.trials},
           {"evaluated", s.evaluated},
           {"failures", s.failures},
           {"min_slack", s.evaluated ? finite_or_null(s.min_slack) : json(nullptr)},
           {"worst_trial", s.worst_trial ? json(*s.worst_trial) : json(nullptr)},
           {"asserted", s.asserted},
           {"pass", s.failures == 0}};
  row["instance_hash"] =
      instance_hash(json{{"claim_id", s.claim_id}, {"op", s.op}, {"seed", seed}, {"source", source}});
  return row;
}

std::vector<SweepSummary> sweep_teacher_file(const TeacherFile& file, const TeacherEnsemble& ensemble,
                                             std::size_t safety, double student_t, std::uint64_t seed) {
  const SyntheticTask task = task_from_teacher_file(file, ensemble);
  std::vector<SweepSummary> claims = {{"jensen_mix_vs_multi", "LinearMixture", true},
                                      {"logloss_bound", "LinearMixture", true},
                                      {"attenuation_strict", "LinearMixture", true},
                                      {"safety_corollary", "LinearMixture", true}};
  for (auto& c : claims) {
    c.trials = task.contexts();
    c.min_slack = INFINITY;
  }
  const auto note = [&](SweepSummary& c, double slack, std::size_t n) {
    ++c.evaluated;
    if (slack < -kSlackTolerance) ++c.failures;
    if (slack < c.min_slack) {
      c.min_slack = slack;
      c.worst_trial = n;
    }
  };
  for (std::size_t n = 0; n < task.contexts(); ++n) {
    Rng rng = Rng::derive(seed, n);
    const auto student = random_distribution(rng, task.vocab(), 1.0);
    const auto& dists = task.teacher_bank[n];
    const auto q = linear_mixture(ensemble, dists);
    const std::size_t y = q.argmax();
    note(claims[0], jensen_gap(ensemble, dists, student, student_t).slack, n);
    // Teachers may put exact zeros on the token; the bound is then vacuous.
    try {
      note(claims[1], logloss_bound(ensemble, dists, y).slack, n);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroProbabilityAtTruth) throw;
    }
    const auto att = attenuation_check(ensemble, dists, y, safety);
    if (att.strict) note(claims[2], att.strict->slack, n);
    note(claims[3], att.corollary.slack, n);
  }
  return claims;
}

CommandResult verify_theorems(const CommandLine& cmd) {
  const json cfg = resolve(cmd);
  ConfigReader r(cfg, "verify-theorems");
  const auto seed = r.get<std::uint64_t>("seed");
  const auto trials = r.get_or<std::size_t>("trials", 10000);
  const auto observe = parse_operator_list(r, "observe_operators",
                                           {AggregationOperator::power_mean(0.5),
                                            AggregationOperator::entropic_geometric(0.0)});
  std::optional<std::string> teacher_file;
  if (r.has("teacher_file")) teacher_file = r.get<std::string>("teacher_file");
  json teachers = r.has("teachers") ? r.raw("teachers") : json(nullptr);
  const auto safety_id = r.get_or<std::string>("safety_teacher", "");
  const auto student_t = r.get_or<double>("student_temperature", 1.0);
  r.finish();

  std::vector<json> rows{header_row("verify-theorems", cfg)};
  if (teacher_file) {
    if (teachers.is_null()) throw Error(ErrorCode::ConfigInvalid, "teacher_file requires a 'teachers' block");
    std::filesystem::path path = *teacher_file;
    if (path.is_relative() && cmd.config) path = cmd.config->parent_path() / path;
    const auto file = load_teacher_file(path);
    const auto ensemble = parse_ensemble(teachers, file.vocab, "verify-theorems.teachers");
    std::size_t safety = 0;
    if (!safety_id.empty()) {
      const auto& ts = ensemble.teachers();
      const auto it = std::find_if(ts.begin(), ts.end(), [&](const TeacherSpec& t) { return t.id == safety_id; });
      if (it == ts.end()) throw Error(ErrorCode::ConfigInvalid, "safety_teacher '" + safety_id + "' not in teachers");
      safety = static_cast<std::size_t>(it - ts.begin());
    }
    for (const auto& s : sweep_teacher_file(file, ensemble, safety, student_t, seed))
      rows.push_back(sweep_row(s, seed, json{{"teacher_file", path.filename().string()}}));
  } else {
    for (const auto& s : sweep_theorems(seed, trials, observe))
      rows.push_back(sweep_row(s, seed, json{{"trials", trials}}));
  }
  return {"verify-theorems", rows, "", rows_ok(rows)};
}

// --- simulate-variance -------------------------------------------------------

CommandResult simulate_variance(const CommandLine& cmd) {
  const json cfg = resolve(cmd);
  ConfigReader r(cfg, "simulate-variance");
  const auto seed = r.get<std::uint64_t>("seed");
  const auto samples = r.get_or<std::size_t>("samples", 100000);
  const auto k = r.get_or<std::size_t>("teachers", 5);
  const auto sigma = r.get_or<double>("sigma", 0.01);
  const auto rhos = r.get_or<std::vector<double>>("rhos", {0.0, 0.25, 0.5, 0.75});
  const auto vocab = r.get_or<std::size_t>("vocab", 8);
  const auto clip = r.get_or<double>("clip_margin", 1e-3);
  const auto tolerance = r.get_or<double>("tolerance", 0.05);
  std::vector<double> base_raw = r.get_or<std::vector<double>>("base", {});
  std::vector<double> weights = r.get_or<std::vector<double>>("weights", {});
  r.finish();
  if (base_raw.empty()) base_raw.assign(vocab, 1.0 / static_cast<double>(vocab));
  if (weights.empty()) weights.assign(k, 1.0 / static_cast<double>(k));
  if (weights.size() != k) throw Error(ErrorCode::ConfigInvalid, "weights length must equal teachers");
  const Distribution base = Distribution::validated(base_raw);

  std::vector<json> rows{header_row("simulate-variance", cfg)};
  std::vector<double> sorted = rhos;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::vector<double>> by_rho;
  for (double rho : sorted) {
    NoiseModel model{base, sigma, rho, k, clip};
    const auto rep = variance_reduction_experiment(model, weights, seed, samples);
    std::vector<double> empirical;
    for (const auto& t : rep.tokens) {
      // The tolerance applies to tokens well inside the simplex.
      const bool asserted = t.base_prob >= 0.1 && t.base_prob <= 0.9;
      json row{{"claim_id", "variance_reduction"},
               {"subject", "rho=" + json(rho).dump() + " token=" + std::to_string(t.token)},
               {"seed", seed},
               {"rho", rho},
               {"token", t.token},
               {"base_prob", t.base_prob},
               {"samples", samples},
               {"empirical", t.empirical},
               {"theoretical", t.theoretical},
               {"relative_error", t.relative_error},
               {"tolerance", tolerance},
               {"asserted", asserted},
               {"pass", t.relative_error <= tolerance}};
      row["instance_hash"] = instance_hash(json{{"claim_id", "variance_reduction"},
                                                {"seed", seed},
                                                {"rho", rho},
                                                {"token", t.token},
                                                {"config", cfg}});
      rows.push_back(std::move(row));
      empirical.push_back(t.empirical);
    }
    rows.push_back(json{{"claim_id", "noise_rejections"},
                        {"subject", "rho=" + json(rho).dump()},
                        {"seed", seed},
                        {"rho", rho},
                        {"rejections", rep.rejections},
                        {"attempts", rep.attempts},
                        {"instance_hash", instance_hash(json{{"claim_id", "noise_rejections"}, {"rho", rho}, {"config", cfg}})}});
    by_rho.push_back(std::move(empirical));
  }

  std::size_t violations = 0;
  for (std::size_t j = 1; j < by_rho.size(); ++j)
    for (std::size_t i = 0; i < by_rho[j].size(); ++i)
      if (by_rho[j][i] < by_rho[j - 1][i]) ++violations;
  rows.push_back(json{{"claim_id", "variance_monotone_rho"},
                      {"subject", "rhos=" + json(sorted).dump()},
                      {"seed", seed},
                      {"violations", violations},
                      {"asserted", sorted.size() >= 2},
                      {"pass", violations == 0},
                      {"instance_hash", instance_hash(json{{"claim_id", "variance_monotone_rho"}, {"config", cfg}})}});

  const auto ident = variance_identity_check(weights, std::vector<double>(k, sigma * sigma));
  rows.push_back(json{{"claim_id", "variance_identity"},
                      {"subject", "sigma^2 per teacher"},
                      {"seed", seed},
                      {"lhs", ident.record.lhs},
                      {"rhs", ident.record.rhs},
                      {"min_slack", ident.record.slack},
                      {"strict", ident.strict},
                      {"asserted", true},
                      {"pass", ident.record.pass},
                      {"instance_hash", instance_hash(json{{"claim_id", "variance_identity"}, {"config", cfg}})}});
  return {"simulate-variance", rows, "", rows_ok(rows)};
}

// --- simulate-bias -----------------------------------------------------------

json bias_row(const BiasReport& rep, std::uint64_t seed, const std::string& subject, const json& source) {
  json row{{"claim_id", "bias_attenuation"},
           {"subject", subject},
           {"seed", seed},
           {"teacher_bias", rep.teacher_bias},
           {"weighted_bias", rep.weighted_bias},
           {"aggregate_bias", rep.aggregate_bias},
           {"attenuation", rep.attenuation},
           {"strict", rep.strict},
           {"asserted", true},
           {"pass", rep.record.pass}};
  row["instance_hash"] = instance_hash(json{{"claim_id", "bias_attenuation"}, {"seed", seed}, {"source", source}});
  return row;
}

CommandResult simulate_bias(const CommandLine& cmd) {
  const json cfg = resolve(cmd);
  ConfigReader r(cfg, "simulate-bias");
  const auto seed = r.get<std::uint64_t>("seed");
  std::vector<json> rows{header_row("simulate-bias", cfg)};

  if (r.has("teacher_means")) {
    const auto means_raw = r.get<std::vector<std::vector<double>>>("teacher_means");
    const auto weights = r.get<std::vector<double>>("weights");
    const auto reference = Distribution::validated(r.get<std::vector<double>>("reference"));
    r.get_or<std::size_t>("trials", 0);
    r.finish();
    std::vector<Distribution> means;
    for (const auto& m : means_raw) means.push_back(Distribution::validated(m));
    const auto rep = bias_attenuation_experiment(make_bias_model(std::move(means), weights), reference);
    rows.push_back(bias_row(rep, seed, "configured", json{{"config", cfg}}));
    return {"simulate-bias", rows, "", rows_ok(rows)};
  }

  const auto trials = r.get_or<std::size_t>("trials", 1000);
  const auto k = r.get_or<std::size_t>("teachers", 3);
  const auto vocab = r.get_or<std::size_t>("vocab", 6);
  r.finish();
  std::size_t failures = 0, strict = 0, evaluated = 0;
  double min_slack = INFINITY, mean_attenuation = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = Rng::derive(seed, t);
    std::vector<Distribution> means;
    for (std::size_t i = 0; i < k; ++i) means.push_back(random_distribution(rng, vocab, 1.0));
    const auto w = random_weights(rng, k);
    const auto reference = random_distribution(rng, vocab, 1.0);
    BiasReport rep;
    try {
      rep = bias_attenuation_experiment(make_bias_model(std::move(means), w), reference);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateCase) throw;
      continue;
    }
    ++evaluated;
    if (!rep.record.pass) ++failures;
    if (rep.strict) ++strict;
    min_slack = std::min(min_slack, rep.record.slack);
    mean_attenuation += rep.attenuation;
  }
  json row{{"claim_id", "bias_attenuation"},
           {"subject", "random K=" + std::to_string(k) + " V=" + std::to_string(vocab)},
           {"seed", seed},
           {"trials", trials},
           {"evaluated", evaluated},
           {"failures", failures},
           {"strict_count", strict},
           {"min_slack", finite_or_null(min_slack)},
           {"attenuation", evaluated ? mean_attenuation / static_cast<double>(evaluated) : 0.0},
           {"asserted", true},
           {"pass", failures == 0}};
  row["instance_hash"] = instance_hash(json{{"claim_id", "bias_attenuation"}, {"config", cfg}});
  rows.push_back(std::move(row));
  return {"simulate-bias", rows, "", rows_ok(rows)};
}

// --- distill -----------------------------------------------------------------

Objective parse_objective(const std::string& s) {
  if (s == "mixture") return Objective::Mixture;
  if (s == "sum_of_kls") return Objective::SumOfKls;
  throw Error(ErrorCode::ConfigInvalid, "objective must be 'mixture' or 'sum_of_kls'");
}

TrainingConfig parse_training(ConfigReader r) {
  TrainingConfig tc;
  tc.objective = parse_objective(r.get_or<std::string>("objective", "mixture"));
  if (r.has("operator")) tc.op = parse_operator(r.raw("operator"), "distill.training.operator");
  tc.learning_rate = r.get_or<double>("learning_rate", 1.0);
  tc.max_steps = r.get_or<std::size_t>("max_steps", 20000);
  tc.convergence_kl = r.get_or<double>("convergence_kl", 1e-6);
  tc.log_every = r.get_or<std::size_t>("log_every", 100);
  tc.student_rank = r.get_or<std::size_t>("student_rank", 0);
  tc.student_temperature = r.get_or<double>("student_temperature", 1.0);
  r.finish();
  try {
    tc.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("distill.training: ") + e.what());
  }
  return tc;
}

constexpr std::size_t kMonotoneFromStep = 10;

CommandResult distill(const CommandLine& cmd) {
  const json cfg = resolve(cmd);
  ConfigReader r(cfg, "distill");
  const auto seed = r.get<std::uint64_t>("seed");
  json teachers;
  std::string label;
  if (r.has("preset")) {
    label = r.get<std::string>("preset");
    teachers = preset_ensemble(label);
  }
  if (r.has("teachers")) {
    if (!teachers.is_null()) r.fail("give either 'preset' or 'teachers', not both");
    teachers = r.raw("teachers");
    label = "custom";
  }
  if (teachers.is_null()) r.fail("one of 'preset' or 'teachers' is required");
  const auto contexts = r.get_or<std::size_t>("contexts", 64);
  const auto vocab = r.get_or<std::size_t>("vocab", 32);
  const auto concentration = r.get_or<double>("concentration", 1.0);
  const auto with_truth = r.get_or<bool>("with_truth", true);
  std::optional<std::string> teacher_file;
  if (r.has("teacher_file")) teacher_file = r.get<std::string>("teacher_file");
  const TrainingConfig tc = r.has("training") ? parse_training(r.child("training")) : parse_training(ConfigReader(json::object(), "distill.training"));
  r.finish();

  SyntheticTask task{TeacherEnsemble::uniform(1, 2), {}, {}};
  if (teacher_file) {
    std::filesystem::path path = *teacher_file;
    if (path.is_relative() && cmd.config) path = cmd.config->parent_path() / path;
    const auto file = load_teacher_file(path);
    task = task_from_teacher_file(file, parse_ensemble(teachers, file.vocab, "distill.teachers"));
  } else {
    task = make_random_task(parse_ensemble(teachers, vocab, "distill.teachers"), contexts, concentration, with_truth,
                            seed);
  }

  const auto result = train(task, tc, seed);
  const std::string hash = instance_hash(cfg);
  const bool linear = tc.op.satisfies_assumption_l();

  std::vector<json> rows{header_row("distill", cfg)};
  bool jensen_all = true, monotone = true;
  std::optional<double> previous;
  for (const auto& row : result.trace.rows) {
    const double slack = row.sum_of_kls - row.mixture;
    const bool jensen_ok = slack >= -kSlackTolerance;
    jensen_all = jensen_all && jensen_ok;
    const double optimized = tc.objective == Objective::Mixture ? row.mixture : row.sum_of_kls;
    if (row.step > kMonotoneFromStep && previous && optimized > *previous) monotone = false;
    if (row.step >= kMonotoneFromStep) previous = optimized;
    json j{{"claim_id", "distill_trace"},
           {"subject", label},
           {"seed", seed},
           {"instance_hash", hash},
           {"step", row.step},
           {"mixture", row.mixture},
           {"sum_of_kls", row.sum_of_kls},
           {"max_kl", row.max_kl},
           {"jensen_slack", slack},
           {"jensen_ok", jensen_ok}};
    if (row.student_logloss) j["student_logloss"] = *row.student_logloss;
    if (row.student_logloss_t1) j["student_logloss_t1"] = *row.student_logloss_t1;
    rows.push_back(std::move(j));
  }
  const double final_kl = result.trace.rows.back().max_kl;
  rows.push_back(json{{"claim_id", "distill_jensen_ordering"}, {"subject", label}, {"seed", seed},
                      {"instance_hash", hash}, {"steps", result.trace.steps}, {"asserted", linear},
                      {"pass", jensen_all}});
  rows.push_back(json{{"claim_id", "distill_monotone"}, {"subject", label}, {"seed", seed},
                      {"instance_hash", hash}, {"objective", to_string(tc.objective)}, {"asserted", true},
                      {"pass", monotone}});
  rows.push_back(json{{"claim_id", "distill_convergence"}, {"subject", label}, {"seed", seed},
                      {"instance_hash", hash}, {"steps", result.trace.steps}, {"final_max_kl", final_kl},
                      {"converged", result.trace.converged}, {"asserted", false},
                      {"pass", result.trace.converged}});
  if (!task.true_tokens.empty()) {
    const auto eval = meta_teacher_eval(result.student, task);
    rows.push_back(json{{"claim_id", "meta_teacher_chain"},
                        {"subject", label},
                        {"seed", seed},
                        {"instance_hash", hash},
                        {"student_logloss", eval.student_logloss},
                        {"student_logloss_t1", eval.student_logloss_t1},
                        {"aggregate_logloss", eval.aggregate_logloss},
                        {"teacher_logloss", eval.teacher_logloss},
                        {"violations", eval.chain_violations},
                        {"asserted", true},
                        {"pass", eval.chain_violations == 0}});
  }
  return {"distill", rows, "", rows_ok(rows)};
}

// --- report-merge ------------------------------------------------------------

CommandResult report_merge(const CommandLine& cmd) {
  if (cmd.inputs.empty()) throw Error(ErrorCode::ConfigInvalid, "report-merge needs at least one input report");
  struct Keyed {
    std::string claim, hash;
    std::size_t order;
    json row;
  };
  std::vector<Keyed> all;
  for (const auto& path : cmd.inputs)
    for (auto& row : read_jsonl(path)) {
      if (!row.is_object() || !row.contains("claim_id"))
        throw Error(ErrorCode::ParseError, path.string() + ": row without claim_id");
      all.push_back({row["claim_id"].get<std::string>(), row.value("instance_hash", std::string{}), all.size(),
                     std::move(row)});
    }
  std::stable_sort(all.begin(), all.end(), [](const Keyed& a, const Keyed& b) {
    return std::tie(a.claim, a.hash) < std::tie(b.claim, b.hash);
  });
  std::vector<json> rows;
  for (auto& k : all) rows.push_back(std::move(k.row));
  return {"report-merge", rows, "", rows_ok(rows)};
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"verify-axioms",   "verify-theorems", "simulate-variance",
                                                 "simulate-bias",   "distill",         "report-merge"};
  return names;
}

std::vector<std::string> preset_names() { return {"balanced", "heterogeneous-safety", "reasoning-heavy"}; }

json preset_ensemble(const std::string& name) {
  const auto teacher = [](const char* id, const char* role, double t, double w) {
    return json{{"id", id}, {"role", role}, {"temperature", t}, {"weight", w}};
  };
  if (name == "heterogeneous-safety")
    return json::array({teacher("safety", "safety", 1.0, 0.5), teacher("reasoning", "reasoning", 2.5, 0.25),
                        teacher("factual", "factual", 1.5, 0.25)});
  if (name == "balanced")
    return json::array({teacher("safety", "safety", 1.0, 1.0), teacher("reasoning", "reasoning", 2.0, 1.0),
                        teacher("factual", "factual", 1.5, 1.0)});
  if (name == "reasoning-heavy")
    return json::array({teacher("safety", "safety", 1.0, 0.2), teacher("reasoning", "reasoning", 3.0, 0.5),
                        teacher("factual", "factual", 1.5, 0.3)});
  throw Error(ErrorCode::ConfigInvalid, "unknown preset '" + name + "'");
}

CommandResult execute(const CommandLine& cmd) {
  CommandResult res;
  if (cmd.command == "verify-axioms") res = verify_axioms(cmd);
  else if (cmd.command == "verify-theorems") res = verify_theorems(cmd);
  else if (cmd.command == "simulate-variance") res = simulate_variance(cmd);
  else if (cmd.command == "simulate-bias") res = simulate_bias(cmd);
  else if (cmd.command == "distill") res = distill(cmd);
  else if (cmd.command == "report-merge") res = report_merge(cmd);
  else throw Error(ErrorCode::ConfigInvalid, "unknown command '" + cmd.command + "'");
  res.summary = summarize(res.name, res.rows, res.ok);
  return res;
}

int run_command(const CommandLine& cmd, std::ostream* echo) {
  try {
    const auto res = execute(cmd);
    write_jsonl(cmd.out_dir / (res.name + ".jsonl"), res.rows);
    write_text(cmd.out_dir / (res.name + "_summary.txt"), res.summary);
    if (echo) *echo << res.summary;
    return res.ok ? kExitOk : kExitCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "ekd " << cmd.command << ": " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace ekd
