#include "ekd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ekd/error.hpp"

namespace ekd {

std::string to_string(Objective objective) {
  return objective == Objective::Mixture ? "mixture" : "sum_of_kls";
}

void SyntheticTask::validate() const {
  if (teacher_bank.empty()) throw Error(ErrorCode::InvalidArgument, "task has no contexts");
  for (std::size_t n = 0; n < teacher_bank.size(); ++n) {
    if (teacher_bank[n].size() != ensemble.size())
      throw Error(ErrorCode::InconsistentTeacherSet, "context " + std::to_string(n) + " has wrong teacher count");
    for (const auto& d : teacher_bank[n])
      if (d.size() != ensemble.vocab_size())
        throw Error(ErrorCode::InconsistentVocabSize, "context " + std::to_string(n) + " has wrong vocab size");
  }
  if (!true_tokens.empty()) {
    if (true_tokens.size() != teacher_bank.size())
      throw Error(ErrorCode::InvalidArgument, "true token count differs from context count");
    for (auto y : true_tokens)
      if (y >= ensemble.vocab_size()) throw Error(ErrorCode::InvalidArgument, "true token out of range");
  }
}

SyntheticTask make_random_task(const TeacherEnsemble& ensemble, std::size_t contexts, double concentration,
                               bool with_truth, std::uint64_t seed) {
  if (contexts == 0) throw Error(ErrorCode::InvalidArgument, "need at least one context");
  SyntheticTask task{ensemble, {}, {}};
  for (std::size_t n = 0; n < contexts; ++n) {
    Rng rng = Rng::derive(seed, n);
    std::vector<Distribution> row;
    for (std::size_t k = 0; k < ensemble.size(); ++k)
      row.push_back(random_distribution(rng, ensemble.vocab_size(), concentration));
    if (with_truth) {
      const Distribution q = linear_mixture(ensemble, row);
      double u = rng.uniform(), acc = 0.0;
      std::size_t y = q.size() - 1;
      for (std::size_t i = 0; i < q.size(); ++i) {
        acc += q[i];
        if (u < acc) {
          y = i;
          break;
        }
      }
      task.true_tokens.push_back(y);
    }
    task.teacher_bank.push_back(std::move(row));
  }
  return task;
}

SyntheticTask make_cyclic_peak_task(std::size_t contexts, std::size_t vocab) {
  if (vocab < 3) throw Error(ErrorCode::VocabTooSmall, "cyclic peak task needs vocab >= 3");
  if (contexts < 3) throw Error(ErrorCode::InvalidArgument, "cyclic peak task needs >= 3 contexts");
  const auto peaked = [vocab](std::size_t peak, double mass) {
    std::vector<double> v(vocab, (1.0 - mass) / static_cast<double>(vocab - 1));
    v[peak] = mass;
    return Distribution::normalize(std::move(v));
  };
  SyntheticTask task{TeacherEnsemble::uniform(2, vocab), {}, {}};
  for (std::size_t n = 0; n < contexts; ++n) {
    task.teacher_bank.push_back({peaked(n % 3, 0.85), peaked(n % 3, 0.95)});
    task.true_tokens.push_back(n % 3);
  }
  return task;
}

StudentModel::StudentModel(std::size_t n, std::size_t v, std::size_t r, double t)
    : contexts_(n), vocab_(v), rank_(r), temperature_(t) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "student needs at least one context");
  if (v < 2) throw Error(ErrorCode::VocabTooSmall, "vocab must be >= 2");
  if (!(t > 0.0)) throw Error(ErrorCode::NonPositiveTemperature, "student temperature must be > 0");
  params_.assign(r == 0 ? n * v : r * (n + v), 0.0);
}

StudentModel StudentModel::full(std::size_t contexts, std::size_t vocab, double temperature) {
  return StudentModel(contexts, vocab, 0, temperature);
}

StudentModel StudentModel::low_rank(std::size_t contexts, std::size_t vocab, std::size_t rank, double temperature,
                                    std::uint64_t seed, double init_scale) {
  if (rank == 0) throw Error(ErrorCode::InvalidArgument, "low-rank student needs rank >= 1");
  StudentModel s(contexts, vocab, rank, temperature);
  Rng rng(seed);
  for (double& x : s.params_) x = rng.uniform(-init_scale, init_scale);
  return s;
}

void StudentModel::logits(std::size_t n, std::span<double> out) const {
  if (dense()) {
    std::copy_n(params_.begin() + static_cast<std::ptrdiff_t>(n * vocab_), vocab_, out.begin());
    return;
  }
  const double* a = params_.data() + n * rank_;
  const double* b = params_.data() + contexts_ * rank_;
  for (std::size_t v = 0; v < vocab_; ++v) {
    double acc = 0.0;
    for (std::size_t r = 0; r < rank_; ++r) acc += a[r] * b[r * vocab_ + v];
    out[v] = acc;
  }
}

std::vector<double> StudentModel::log_probs(std::size_t n, double temperature) const {
  std::vector<double> z(vocab_);
  logits(n, z);
  double top = -std::numeric_limits<double>::infinity();
  for (double& x : z) {
    x /= temperature;
    top = std::max(top, x);
  }
  double total = 0.0;
  for (double x : z) total += std::exp(x - top);
  const double lse = top + std::log(total);
  for (double& x : z) x -= lse;
  return z;
}

Distribution StudentModel::distribution(std::size_t n) const {
  auto lp = log_probs(n);
  for (double& x : lp) x = std::exp(x);
  return Distribution::normalize(std::move(lp));
}

void TrainingConfig::validate() const {
  op.validate();
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (max_steps < 1) throw Error(ErrorCode::InvalidArgument, "max_steps must be >= 1");
  if (!(convergence_kl > 0.0)) throw Error(ErrorCode::InvalidArgument, "convergence_kl must be > 0");
  if (log_every < 1) throw Error(ErrorCode::InvalidArgument, "log_every must be >= 1");
  if (!(student_temperature > 0.0)) throw Error(ErrorCode::NonPositiveTemperature, "student temperature must be > 0");
}

Targets make_targets(const SyntheticTask& task, const AggregationOperator& op) {
  task.validate();
  Targets t;
  t.weights = task.ensemble.weights();
  for (const auto& row : task.teacher_bank) {
    t.aggregate.push_back(aggregate(op, task.ensemble, row));
    t.linear.push_back(linear_mixture(task.ensemble, row));
    t.tempered.push_back(tempered(task.ensemble, row));
  }
  return t;
}

namespace {

// KL(t || s) given log s; t(i) = 0 terms vanish.
double kl_from_log(const Distribution& t, std::span<const double> log_s) {
  double total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] > 0.0) total += t[i] * (std::log(t[i]) - log_s[i]);
  return std::max(total, 0.0);
}

void check_shape(const StudentModel& student, const Targets& targets) {
  if (student.contexts() != targets.aggregate.size() || student.vocab() != targets.aggregate.front().size())
    throw Error(ErrorCode::DimensionMismatch, "student shape does not match task");
}

}  // namespace

LossValues evaluate_losses(const StudentModel& student, const Targets& targets, Exec exec) {
  check_shape(student, targets);
  const std::size_t n = student.contexts();
  struct PerContext {
    double mix, multi;
  };
  const auto per = map_indices<PerContext>(n, exec, [&](std::size_t c) {
    const auto log_s = student.log_probs(c);
    double multi = 0.0;
    for (std::size_t k = 0; k < targets.weights.size(); ++k)
      if (targets.weights[k] > 0.0) multi += targets.weights[k] * kl_from_log(targets.tempered[c][k], log_s);
    return PerContext{kl_from_log(targets.aggregate[c], log_s), multi};
  });
  LossValues out;
  for (const auto& p : per) {
    out.mixture += p.mix;
    out.sum_of_kls += p.multi;
    out.max_kl = std::max(out.max_kl, p.mix);
  }
  out.mixture /= static_cast<double>(n);
  out.sum_of_kls /= static_cast<double>(n);
  return out;
}

double student_loss(const StudentModel& student, const SyntheticTask& task, const TrainingConfig& config) {
  const auto values = evaluate_losses(student, make_targets(task, config.op));
  return config.objective == Objective::Mixture ? values.mixture : values.sum_of_kls;
}

std::vector<double> loss_gradient(const StudentModel& student, const Targets& targets, Objective objective,
                                  Exec exec) {
  check_shape(student, targets);
  const std::size_t n = student.contexts(), v = student.vocab();
  const double temp = student.temperature();
  const double weight_total = std::accumulate(targets.weights.begin(), targets.weights.end(), 0.0);

  // Gradient with respect to the logit table, one row per context.
  std::vector<double> g(n * v);
  for_each_index(n, exec, [&](std::size_t c) {
    const auto log_s = student.log_probs(c);
    const Distribution& t = objective == Objective::Mixture ? targets.aggregate[c] : targets.linear[c];
    const double scale = objective == Objective::Mixture ? 1.0 : weight_total;
    for (std::size_t i = 0; i < v; ++i) g[c * v + i] = (scale * std::exp(log_s[i]) - t[i]) / temp;
  });
  if (student.dense()) return g;

  const std::size_t r = student.rank();
  const auto& p = student.params();
  const double* a = p.data();
  const double* b = p.data() + n * r;
  std::vector<double> out(p.size(), 0.0);
  // dA = G B^T, row by row.
  for_each_index(n, exec, [&](std::size_t c) {
    for (std::size_t k = 0; k < r; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < v; ++i) acc += g[c * v + i] * b[k * v + i];
      out[c * r + k] = acc;
    }
  });
  // dB = A^T G, accumulated in context order so every run is bit-identical.
  double* db = out.data() + n * r;
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t k = 0; k < r; ++k) {
      const double ack = a[c * r + k];
      for (std::size_t i = 0; i < v; ++i) db[k * v + i] += ack * g[c * v + i];
    }
  return out;
}

std::vector<double> loss_gradient(const StudentModel& student, const SyntheticTask& task,
                                  const TrainingConfig& config) {
  return loss_gradient(student, make_targets(task, config.op), config.objective);
}

namespace {

std::pair<double, double> truth_logloss(const StudentModel& student, const SyntheticTask& task) {
  double at_ts = 0.0, at_one = 0.0;
  for (std::size_t c = 0; c < task.contexts(); ++c) {
    const auto y = task.true_tokens[c];
    at_ts -= student.log_probs(c)[y];
    at_one -= student.log_probs(c, 1.0)[y];
  }
  const double n = static_cast<double>(task.contexts());
  return {at_ts / n, at_one / n};
}

}  // namespace

TrainingResult train(const SyntheticTask& task, const TrainingConfig& config, std::uint64_t seed, Exec exec) {
  config.validate();
  const Targets targets = make_targets(task, config.op);
  StudentModel student =
      config.student_rank == 0
          ? StudentModel::full(task.contexts(), task.vocab(), config.student_temperature)
          : StudentModel::low_rank(task.contexts(), task.vocab(), config.student_rank, config.student_temperature, seed);

  TrainingTrace trace;
  const auto log_row = [&](std::size_t step, const LossValues& values) {
    TraceRow row{step, values.mixture, values.sum_of_kls, values.max_kl, std::nullopt, std::nullopt};
    if (!task.true_tokens.empty()) {
      const auto [ts, one] = truth_logloss(student, task);
      row.student_logloss = ts;
      row.student_logloss_t1 = one;
    }
    trace.rows.push_back(row);
  };

  double previous = std::numeric_limits<double>::infinity();
  std::size_t rising = 0;
  for (std::size_t step = 0;; ++step) {
    const LossValues values = evaluate_losses(student, targets, exec);
    const double current = config.objective == Objective::Mixture ? values.mixture : values.sum_of_kls;
    if (!std::isfinite(current) || !std::isfinite(values.max_kl))
      throw Error(ErrorCode::Divergence, "objective became non-finite at step " + std::to_string(step) +
                                             "; lower the learning rate");
    if (current > previous) {
      if (++rising >= kDivergencePatience)
        throw Error(ErrorCode::Divergence, "objective rose for " + std::to_string(rising) +
                                               " consecutive steps; lower the learning rate");
    } else {
      rising = 0;
    }
    previous = current;

    const bool converged = values.max_kl <= config.convergence_kl;
    const bool last = step == config.max_steps;
    if (step % config.log_every == 0 || converged || last) log_row(step, values);
    if (converged || last) {
      trace.converged = converged;
      trace.steps = step;
      break;
    }

    const auto grad = loss_gradient(student, targets, config.objective, exec);
    auto& p = student.params();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= config.learning_rate * grad[i];
  }
  return {std::move(trace), std::move(student)};
}

EvalReport meta_teacher_eval(const StudentModel& student, const SyntheticTask& task) {
  if (task.true_tokens.empty()) throw Error(ErrorCode::MissingTruth, "task carries no true tokens");
  task.validate();
  if (student.contexts() != task.contexts() || student.vocab() != task.vocab())
    throw Error(ErrorCode::DimensionMismatch, "student shape does not match task");
  EvalReport rep;
  const auto [ts, one] = truth_logloss(student, task);
  rep.student_logloss = ts;
  rep.student_logloss_t1 = one;
  const auto w = task.ensemble.weights();
  for (std::size_t c = 0; c < task.contexts(); ++c) {
    const auto y = task.true_tokens[c];
    const auto ps = tempered(task.ensemble, task.teacher_bank[c]);
    const double agg = -std::log(linear_mixture(task.ensemble, task.teacher_bank[c])[y]);
    double teach = 0.0;
    for (std::size_t k = 0; k < ps.size(); ++k)
      if (w[k] > 0.0) teach -= w[k] * std::log(ps[k][y]);
    if (agg > teach + 1e-12) ++rep.chain_violations;
    rep.aggregate_logloss += agg;
    rep.teacher_logloss += teach;
  }
  const double n = static_cast<double>(task.contexts());
  rep.aggregate_logloss /= n;
  rep.teacher_logloss /= n;
  return rep;
}

}  // namespace ekd
