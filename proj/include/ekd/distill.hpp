#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ekd/operators.hpp"
#include "ekd/parallel.hpp"
#include "ekd/prob.hpp"

namespace ekd {

// N training contexts, each with one distribution per teacher.
struct SyntheticTask {
  TeacherEnsemble ensemble;
  std::vector<std::vector<Distribution>> teacher_bank;  // [context][teacher]
  std::vector<std::size_t> true_tokens;                 // empty when no truth is known

  std::size_t contexts() const noexcept { return teacher_bank.size(); }
  std::size_t vocab() const noexcept { return ensemble.vocab_size(); }
  void validate() const;
};

// Random Dirichlet(concentration) teachers; true tokens drawn from the
// linear mixture of the tempered teachers when with_truth is set.
SyntheticTask make_random_task(const TeacherEnsemble& ensemble, std::size_t contexts, double concentration,
                               bool with_truth, std::uint64_t seed);

// Context n puts most of its mass on token n mod 3, so the centered
// log-target matrix has rank >= 2 and no rank-1 logit table can match it.
SyntheticTask make_cyclic_peak_task(std::size_t contexts, std::size_t vocab);

// Per-context logit table, either a dense N x V matrix or a product of
// N x r and r x V factors. Student distribution = softmax(logits / T_S).
class StudentModel {
 public:
  static StudentModel full(std::size_t contexts, std::size_t vocab, double temperature = 1.0);
  static StudentModel low_rank(std::size_t contexts, std::size_t vocab, std::size_t rank, double temperature,
                               std::uint64_t seed, double init_scale = 0.1);

  std::size_t contexts() const noexcept { return contexts_; }
  std::size_t vocab() const noexcept { return vocab_; }
  std::size_t rank() const noexcept { return rank_; }  // 0 for dense
  bool dense() const noexcept { return rank_ == 0; }
  double temperature() const noexcept { return temperature_; }

  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }

  void logits(std::size_t context, std::span<double> out) const;
  // log softmax(logits / t) for context n.
  std::vector<double> log_probs(std::size_t context, double temperature) const;
  std::vector<double> log_probs(std::size_t context) const { return log_probs(context, temperature_); }
  Distribution distribution(std::size_t context) const;

 private:
  StudentModel(std::size_t n, std::size_t v, std::size_t r, double t);
  std::size_t contexts_, vocab_, rank_;
  double temperature_;
  std::vector<double> params_;  // dense: N*V; low rank: A (N*r) then B (r*V)
};

enum class Objective { Mixture, SumOfKls };

std::string to_string(Objective objective);

struct TrainingConfig {
  Objective objective = Objective::Mixture;
  AggregationOperator op = AggregationOperator::linear();
  double learning_rate = 1.0;
  std::size_t max_steps = 20000;
  double convergence_kl = 1e-6;
  std::size_t log_every = 100;
  std::size_t student_rank = 0;  // 0 = dense table
  double student_temperature = 1.0;

  void validate() const;
};

// Per-context supervision derived once from the task.
struct Targets {
  std::vector<Distribution> aggregate;            // operator output per context
  std::vector<Distribution> linear;               // linear mixture per context
  std::vector<std::vector<Distribution>> tempered;  // [context][teacher]
  std::vector<double> weights;
};

Targets make_targets(const SyntheticTask& task, const AggregationOperator& op);

struct LossValues {
  double mixture = 0.0;      // mean_n KL(q_n || s_n)
  double sum_of_kls = 0.0;   // mean_n sum_k w_k KL(p_nk || s_n)
  double max_kl = 0.0;       // max_n KL(q_n || s_n)
};

LossValues evaluate_losses(const StudentModel& student, const Targets& targets, Exec exec = Exec::Serial);

// Mean over contexts of the configured objective.
double student_loss(const StudentModel& student, const SyntheticTask& task, const TrainingConfig& config);

// Gradient of the per-context objectives summed over contexts (N times the
// gradient of student_loss). For a dense table each context's block is
// (softmax(l / T_S) - t) / T_S with t the objective's effective target.
std::vector<double> loss_gradient(const StudentModel& student, const Targets& targets, Objective objective,
                                  Exec exec = Exec::Serial);
std::vector<double> loss_gradient(const StudentModel& student, const SyntheticTask& task,
                                  const TrainingConfig& config);

struct TraceRow {
  std::size_t step = 0;
  double mixture = 0.0;
  double sum_of_kls = 0.0;
  double max_kl = 0.0;
  std::optional<double> student_logloss;     // at T_S
  std::optional<double> student_logloss_t1;  // at T = 1
};

struct TrainingTrace {
  std::vector<TraceRow> rows;
  bool converged = false;
  std::size_t steps = 0;
};

struct TrainingResult {
  TrainingTrace trace;
  StudentModel student;
};

inline constexpr std::size_t kDivergencePatience = 50;

// Plain gradient descent from zero logits (dense) or small seeded factors
// (low rank). Throws Divergence after kDivergencePatience consecutive
// increases of the optimized objective.
TrainingResult train(const SyntheticTask& task, const TrainingConfig& config, std::uint64_t seed,
                     Exec exec = Exec::Serial);

struct EvalReport {
  double student_logloss = 0.0;     // mean -log s(y) at T_S
  double student_logloss_t1 = 0.0;  // mean -log s(y) at T = 1
  double aggregate_logloss = 0.0;   // mean -log q(y), linear mixture
  double teacher_logloss = 0.0;     // mean -sum_k w_k log p_k(y)
  std::size_t chain_violations = 0; // contexts where -log q(y) > -sum_k w_k log p_k(y) + 1e-12
};

EvalReport meta_teacher_eval(const StudentModel& student, const SyntheticTask& task);

}  // namespace ekd
