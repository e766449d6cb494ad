// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything holds).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "ekd/axioms.hpp"
#include "ekd/commands.hpp"
#include "ekd/distill.hpp"
#include "ekd/error.hpp"
#include "ekd/guarantees.hpp"
#include "ekd/io.hpp"
#include "ekd/montecarlo.hpp"
#include "ekd/operators.hpp"

using namespace ekd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failed_count = 0;

void criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool within = limit_s <= 0.0 || secs < limit_s;
  const bool pass = out.pass && within;
  if (!pass) ++failed_count;
  std::printf("%s  %2d  %-34s %7.2fs", pass ? "PASS" : "FAIL", id, name, secs);
  if (limit_s > 0.0) std::printf(" (limit %.0fs)", limit_s);
  std::printf("  %s%s\n", out.detail.c_str(), within ? "" : " [time limit exceeded]");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

const SweepSummary& find(const std::vector<SweepSummary>& rows, const std::string& claim) {
  for (const auto& r : rows)
    if (r.claim_id == claim && r.asserted) return r;
  throw Error(ErrorCode::InvalidArgument, "missing claim " + claim);
}

Outcome sweep_claim(const std::string& claim) {
  const auto rows = sweep_theorems(20250101, 10000);
  const auto& r = find(rows, claim);
  return {r.failures == 0 && r.evaluated > 0,
          fmt("evaluated=%.0f failures=%.0f min_slack=%.3g", double(r.evaluated), double(r.failures), r.min_slack)};
}

// Safety teacher at T=1 placing 1% of the smallest other tempered mass on
// the unsafe token; the others keep their random distributions.
Outcome safety_weight_grid() {
  const double grid[] = {0.1, 0.3, 0.5, 0.7, 0.9};
  std::size_t violations = 0;
  const std::size_t instances = 2000;
  for (std::size_t t = 0; t < instances; ++t) {
    Rng rng = Rng::derive(77, t);
    const std::size_t k = 2 + rng.uniform_int(0, 4);
    const std::size_t v = 2 + rng.uniform_int(0, 30);
    const std::size_t u = rng.uniform_int(0, v - 1);
    std::vector<double> temps(k, 1.0);
    for (std::size_t j = 1; j < k; ++j) temps[j] = rng.uniform(0.25, 4.0);
    std::vector<Distribution> dists;
    for (std::size_t j = 0; j < k; ++j) dists.push_back(random_distribution(rng, v, 1.0));
    const auto probe = TeacherEnsemble::from(std::vector<double>(k, 1.0), temps, v);
    const auto ps = tempered(probe, dists);
    double lowest = 1.0;
    for (std::size_t j = 1; j < k; ++j) lowest = std::min(lowest, ps[j][u]);
    const double x = 0.01 * lowest;
    std::vector<double> safe = dists[0].vec();
    const double rest = 1.0 - safe[u];
    for (std::size_t i = 0; i < v; ++i) safe[i] = i == u ? x : safe[i] * (1.0 - x) / rest;
    dists[0] = Distribution::normalize(safe);
    const auto others = random_weights(rng, k - 1);
    double previous = INFINITY;
    for (double ws : grid) {
      std::vector<double> w = {ws};
      for (double o : others) w.push_back(o * (1.0 - ws));
      const double q = linear_mixture(TeacherEnsemble::from(w, temps, v), dists)[u];
      if (q > previous) ++violations;
      previous = q;
    }
  }
  return {violations == 0, fmt("grid instances=%.0f violations=%.0f", double(instances), double(violations))};
}

double fd_relative_error(StudentModel s, const Targets& targets, Objective obj) {
  const auto analytic = loss_gradient(s, targets, obj);
  const double h = 1e-6;
  const auto total = [&](const StudentModel& m) {
    const auto l = evaluate_losses(m, targets);
    return (obj == Objective::Mixture ? l.mixture : l.sum_of_kls) * static_cast<double>(m.contexts());
  };
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < s.params().size(); ++j) {
    const double x = s.params()[j];
    s.params()[j] = x + h;
    const double up = total(s);
    s.params()[j] = x - h;
    const double down = total(s);
    s.params()[j] = x;
    const double fd = (up - down) / (2 * h);
    num += (fd - analytic[j]) * (fd - analytic[j]);
    den = std::max({den, fd * fd, analytic[j] * analytic[j]});
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

int main() {
  const fs::path scratch = fs::temp_directory_path() / "ekd_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  criterion(1, "axiom conformance, linear", 30, [] {
    const auto s = make_subject(AggregationOperator::linear());
    const std::size_t n = 10000;
    const std::size_t f[] = {check_axiom1(s, n, 1).failures, check_axiom2(s, n, 1).failures,
                             check_axiom3(s, n, 1).failures, check_axiom4(s, n, 1).failures,
                             check_axiom5(s, n, 1).failures};
    std::size_t total = 0;
    for (auto x : f) total += x;
    return Outcome{total == 0, fmt("trials=10000 per axiom, failures=%.0f", double(total))};
  });

  criterion(2, "operator non-uniqueness", 5, [] {
    const auto ens = TeacherEnsemble::from(std::vector<double>{0.6, 0.4}, std::vector<double>{1.0, 1.0}, 8);
    const std::vector ops = {AggregationOperator::linear(), AggregationOperator::entropic_geometric(0.0),
                             AggregationOperator::power_mean(0.5)};
    const auto rep = operator_distinctness(ens, ops, 200, 2);
    bool all = true;
    double smallest = INFINITY;
    for (const auto& p : rep.pairs) {
      all = all && p.max_l1 > kDistinctThreshold;
      smallest = std::min(smallest, p.max_l1);
    }
    return Outcome{all && rep.pairs.size() == 3, fmt("smallest pairwise max L1=%.4g", smallest)};
  });

  const std::vector<double> equal(5, 0.2);
  const auto variance_model = [](double rho) { return NoiseModel{Distribution::uniform(8), 0.01, rho, 5, 1e-3}; };
  std::vector<std::vector<double>> by_rho;

  criterion(3, "variance reduction, uncorrelated", 60, [&] {
    const auto rep = variance_reduction_experiment(variance_model(0.0), equal, 303, 100000);
    std::vector<double> e;
    for (const auto& t : rep.tokens) e.push_back(t.empirical);
    by_rho.push_back(e);
    return Outcome{rep.max_relative_error <= 0.05,
                   fmt("target sigma^2/5=%.3g max relative error=%.4f", 1e-4 / 5, rep.max_relative_error)};
  });

  criterion(4, "variance under correlation", 60, [&] {
    double worst = 0.0;
    for (double rho : {0.25, 0.5, 0.75}) {
      const auto rep = variance_reduction_experiment(variance_model(rho), equal, 303, 100000);
      worst = std::max(worst, rep.max_relative_error);
      std::vector<double> e;
      for (const auto& t : rep.tokens) e.push_back(t.empirical);
      by_rho.push_back(e);
    }
    std::size_t drops = 0;
    for (std::size_t j = 1; j < by_rho.size(); ++j)
      for (std::size_t i = 0; i < by_rho[j].size(); ++i)
        if (by_rho[j][i] < by_rho[j - 1][i]) ++drops;
    return Outcome{worst <= 0.05 && drops == 0 && by_rho.size() == 4,
                   fmt("max relative error=%.4f monotonicity violations=%.0f", worst, double(drops))};
  });

  criterion(5, "jensen bound", 0, [] { return sweep_claim("jensen_mix_vs_multi"); });
  criterion(6, "log-loss bound", 0, [] { return sweep_claim("logloss_bound"); });

  criterion(7, "safety attenuation", 0, [] {
    const auto a = sweep_claim("attenuation_strict");
    const auto b = sweep_claim("safety_corollary");
    const auto g = safety_weight_grid();
    return Outcome{a.pass && b.pass && g.pass, "strict: " + a.detail + "; corollary: " + b.detail + "; " + g.detail};
  });

  criterion(8, "capacity", 60, [] {
    const auto ens = parse_ensemble(preset_ensemble("heterogeneous-safety"), 32, "preset");
    const auto task = make_random_task(ens, 64, 1.0, false, 808);
    TrainingConfig full;
    const auto a = train(task, full, 808);
    TrainingConfig low;
    low.student_rank = 1;
    low.learning_rate = 0.1;
    low.max_steps = 5000;
    const auto b = train(make_cyclic_peak_task(12, 6), low, 808);
    const double ka = a.trace.rows.back().max_kl, kb = b.trace.rows.back().max_kl;
    return Outcome{ka <= 1e-6 && a.trace.steps <= 20000 && kb >= 1e-3,
                   fmt("full: max KL=%.3g after %.0f steps; rank-1: max KL=%.3g", ka, double(a.trace.steps), kb)};
  });

  criterion(9, "training-time jensen ordering", 0, [&] {
    std::size_t rows = 0, bad = 0, presets = 0;
    for (const auto& entry : fs::directory_iterator(EKD_PRESET_DIR)) {
      if (entry.path().extension() != ".json") continue;
      ++presets;
      CommandLine c;
      c.command = "distill";
      c.config = entry.path();
      c.out_dir = scratch / "presets";
      for (const auto& r : execute(c).rows) {
        if (r["claim_id"] != "distill_trace") continue;
        ++rows;
        if (!(r["mixture"].get<double>() <= r["sum_of_kls"].get<double>() + 1e-12)) ++bad;
      }
    }
    return Outcome{presets == 3 && rows > 0 && bad == 0,
                   fmt("presets=%.0f logged steps=%.0f violations=%.0f", double(presets), double(rows), double(bad))};
  });

  criterion(10, "gradient correctness", 0, [] {
    double worst = 0.0;
    std::size_t points = 0;
    for (std::size_t t = 0; t < 100; ++t) {
      Rng rng = Rng::derive(1010, t);
      const std::size_t k = 1 + rng.uniform_int(0, 3), n = 2 + rng.uniform_int(0, 3), v = 2 + rng.uniform_int(0, 6);
      std::vector<double> temps;
      for (std::size_t j = 0; j < k; ++j) temps.push_back(rng.uniform(0.5, 2.0));
      const auto ens = TeacherEnsemble::from(random_weights(rng, k), temps, v);
      const auto targets = make_targets(make_random_task(ens, n, 1.0, false, t), AggregationOperator::linear());
      const double ts = rng.uniform(0.5, 2.0);
      auto dense = StudentModel::full(n, v, ts);
      for (auto& x : dense.params()) x = rng.uniform(-2.0, 2.0);
      const auto low = StudentModel::low_rank(n, v, 1 + rng.uniform_int(0, 2), ts, t, 0.7);
      for (auto obj : {Objective::Mixture, Objective::SumOfKls}) {
        worst = std::max(worst, fd_relative_error(dense, targets, obj));
        worst = std::max(worst, fd_relative_error(low, targets, obj));
        points += 2;
      }
    }
    return Outcome{worst <= 1e-5, fmt("points=%.0f worst relative error=%.3g", double(points), worst)};
  });

  criterion(11, "reproducibility", 0, [&] {
    const auto cfg_dir = scratch / "configs";
    fs::create_directories(cfg_dir);
    const std::pair<const char*, const char*> runs[] = {
        {"verify-axioms", R"({"seed":11,"trials":500})"},
        {"verify-theorems", R"({"seed":11,"trials":500})"},
        {"simulate-variance", R"({"seed":11,"samples":10000})"},
        {"simulate-bias", R"({"seed":11,"trials":200})"},
        {"distill", R"({"seed":11,"preset":"heterogeneous-safety","contexts":16,"vocab":8})"},
    };
    std::size_t differing = 0, files = 0;
    std::vector<fs::path> reports;
    for (const auto& [cmd, body] : runs) {
      const auto cfg = cfg_dir / (std::string(cmd) + ".json");
      std::ofstream(cfg) << body;
      for (const char* side : {"a", "b"}) {
        CommandLine c;
        c.command = cmd;
        c.config = cfg;
        c.out_dir = scratch / side;
        if (run_command(c) == kExitError) return Outcome{false, std::string(cmd) + " errored"};
      }
      for (const auto& suffix : {std::string(".jsonl"), std::string("_summary.txt")}) {
        ++files;
        if (slurp(scratch / "a" / (cmd + suffix)) != slurp(scratch / "b" / (cmd + suffix))) ++differing;
      }
      reports.push_back(scratch / "a" / (std::string(cmd) + ".jsonl"));
    }
    for (const char* side : {"ma", "mb"}) {
      CommandLine c;
      c.command = "report-merge";
      c.inputs = reports;
      c.out_dir = scratch / side;
      run_command(c);
    }
    ++files;
    if (slurp(scratch / "ma" / "report-merge.jsonl") != slurp(scratch / "mb" / "report-merge.jsonl")) ++differing;
    return Outcome{differing == 0, fmt("report files compared=%.0f differing=%.0f", double(files), double(differing))};
  });

  criterion(12, "geometric monotonicity search", 0, [&] {
    const auto s = make_subject(AggregationOperator::entropic_geometric(0.0));
    const auto rep = check_axiom3(s, 100000, 1212);
    if (rep.failures == 0) return Outcome{true, "trials=100000 failures=0"};
    if (!rep.counterexample) return Outcome{false, "failures without a counterexample"};
    const auto path = scratch / "counterexample.json";
    std::ofstream(path) << rep.counterexample->dump();
    std::ifstream in(path);
    const auto replay = replay_counterexample(s, nlohmann::json::parse(in));
    const bool ok = replay.failed && replay.magnitude == rep.worst_violation;
    return Outcome{ok, fmt("trials=100000 failures=%.0f worst=%.3g counterexample replays=%.0f", double(rep.failures),
                           rep.worst_violation, ok ? 1.0 : 0.0)};
  });

  fs::remove_all(scratch);
  std::printf("%d of 12 criteria failed\n", failed_count);
  return failed_count;
}
