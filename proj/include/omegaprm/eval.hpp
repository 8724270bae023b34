#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "omegaprm/core.hpp"
#include "omegaprm/mcts.hpp"
#include "omegaprm/policy.hpp"
#include "omegaprm/prm.hpp"

namespace omegaprm {

struct CandidateSolution {
  StepSeq steps;
  std::string final_answer;
  std::optional<double> aggregate_score;
  bool is_correct = false;
  std::string source;  // e.g. "<question id>#<index>"
};

// Groups candidates into answers_equivalent classes and returns the index
// of the first member of the best class (sum of aggregate_score when
// weighted, member count otherwise). Ties go to the class whose first member
// comes earliest. Throws Error on an empty list or, when weighted, on a
// candidate without a score.
std::size_t weighted_vote_index(std::span<const CandidateSolution> candidates, bool weighted);
std::string weighted_vote(std::span<const CandidateSolution> candidates, bool weighted);

// A fixed pool of sampled solutions for one problem.
struct CandidatePool {
  Question question;
  std::vector<CandidateSolution> candidates;
  bool skipped = false;
  std::string error;
};

// pool_size root rollouts per problem, scored by `model` when given.
std::vector<CandidatePool> sample_candidate_pools(const std::vector<Question>& problems, Completer& completer,
                                                  std::uint32_t pool_size, const EngineConfig& cfg,
                                                  const ToyPrmModel* model, Aggregation agg = Aggregation::product,
                                                  std::size_t parallelism = 1);

struct EvalOptions {
  std::uint32_t k_max = 16;
  std::uint32_t pool_size = 0;  // solutions sampled per problem; 0 means k_max
  std::uint32_t n_resamples = 100;
  std::uint64_t seed = 0;
  bool operator==(const EvalOptions&) const = default;
};

// 1, 2, 4, ... below k_max, then k_max.
std::vector<std::uint32_t> k_schedule(std::uint32_t k_max);

struct KAccuracy {
  std::uint32_t k = 0;
  double accuracy = 0.0;  // mean over resamples
  double stddev = 0.0;    // sample standard deviation over resamples
};

struct ProblemOutcome {
  std::string question_id;
  bool skipped = false;
  std::string error;
  std::size_t pool_size = 0;
  std::size_t pool_correct = 0;
  bool full_pool_vote_correct = false;
};

struct EvalReport {
  std::string method;  // majority | prm_weighted
  EvalOptions options;
  std::vector<KAccuracy> table;
  std::vector<ProblemOutcome> problems;

  const KAccuracy* at(std::uint32_t k) const;
};

// For each k, n_resamples rounds; in each round every problem draws a
// k-subset of its pool (kept in pool order) and votes. A round's accuracy is
// the mean over non-skipped problems. Subsets depend only on (seed,
// question id, k, round), so both methods see the same draws.
EvalReport evaluate_pools(const std::vector<CandidatePool>& pools, bool weighted, const EvalOptions& opts);

EvalReport accuracy_curve(const std::vector<Question>& problems, Completer& completer, const ToyPrmModel* model,
                          const EvalOptions& opts, const EngineConfig& cfg, Aggregation agg = Aggregation::product,
                          std::size_t parallelism = 1);

std::string eval_report_json(const std::vector<EvalReport>& reports, const std::string& config_echo_json);
std::string eval_table_csv(const std::vector<EvalReport>& reports);

// ---------------------------------------------------------------------------
// Efficiency benchmark
// ---------------------------------------------------------------------------

struct ArmReport {
  std::uint64_t policy_calls = 0;
  std::uint64_t examples = 0;
  double examples_per_call = 0.0;
};

struct QuestionBench {
  std::string question_id;
  ArmReport brute_force;
  ArmReport omegaprm;
  std::string failure;
};

struct EfficiencyReport {
  std::uint64_t budget = 0;
  std::uint64_t per_question_budget = 0;
  ArmReport brute_force;
  ArmReport omegaprm;
  double ratio = 0.0;  // omegaprm / brute_force examples-per-call; 0 when undefined
  std::vector<QuestionBench> questions;
};

using CompleterFactory = std::function<std::unique_ptr<Completer>()>;

// Splits `budget` policy calls evenly over the questions and spends each
// share twice: brute force samples one root solution and annotates every
// step with k rollouts (repeating while budget remains); OmegaPRM runs
// build_tree capped at the share. Each arm gets its own completer.
EfficiencyReport efficiency_benchmark(const std::vector<Question>& questions, const CompleterFactory& make_completer,
                                      const EngineConfig& cfg, std::uint64_t budget, std::size_t parallelism = 1);

std::string efficiency_report_json(const EfficiencyReport& report, const std::string& config_echo_json);

}  // namespace omegaprm
