#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "omegaprm/policy.hpp"

namespace omegaprm {

// A simulated question is a running-total chain: "Start with 17. Add 5.
// Subtract 3. ... What is the result?". Step j of a solution is written as
// "a + b = c". An erroneous step writes a result larger than the true one;
// later steps carry the wrong running value forward, so (absent recovery)
// the final answer is wrong iff some step was wrong.
struct SimOp {
  char op = '+';  // '+' or '-'
  std::int64_t operand = 0;

  bool operator==(const SimOp&) const = default;
};

// Per-question difficulty. Unset fields fall back to SimPolicySpec.
struct SimQuestionOverrides {
  std::optional<double> error_prob;
  std::optional<double> recovery_prob;
  // A "trap": at this 1-based step, with trap_prob, the policy makes the
  // same mistake (result + trap_delta), so wrong answers cluster.
  std::uint32_t trap_step = 0;  // 0 = no trap
  double trap_prob = 0.0;
  std::int64_t trap_delta = 1;

  bool operator==(const SimQuestionOverrides&) const = default;
};

struct SimQuestion {
  std::int64_t start = 0;
  std::vector<SimOp> ops;

  std::int64_t answer() const;
  std::string statement() const;
  // The error-free solution.
  StepSeq ground_truth_chain() const;
  // Parses a statement produced by statement(); nullopt on anything else.
  static std::optional<SimQuestion> parse(std::string_view statement);
};

struct SimPolicySpec {
  double per_step_error_prob = 0.0;
  double recovery_prob = 0.0;
  std::int64_t max_error_delta = 9;
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic stand-in for the LM completer. Each call draws from a
// stream derived from (seed, question id, state key, per-state call
// ordinal), so concurrent callers working on different states stay
// reproducible.
class SimulatedPolicy final : public Completer {
 public:
  explicit SimulatedPolicy(SimPolicySpec spec);

  void set_overrides(const std::string& question_id, SimQuestionOverrides overrides);
  const SimPolicySpec& spec() const noexcept { return spec_; }

  std::vector<Rollout> sample_rollouts(const CompleterRequest& req) override;

  // Full solution from the root with errors injected at the given 1-based
  // steps (each adds `delta` to that step's result). No randomness.
  Rollout make_solution(const Question& question, const std::vector<std::size_t>& error_steps,
                        std::int64_t delta = 1) const;

  // Ground truth used by tests: does this step sequence (from the root)
  // contain a wrong step?
  static bool has_error(std::span<const Step> steps, const SimQuestion& q);
  static std::optional<std::size_t> first_error(std::span<const Step> steps, const SimQuestion& q);

  static std::string format_step(std::int64_t a, const SimOp& op, std::int64_t c);

 private:
  struct Resolved {
    SimQuestion chain;
    double error_prob;
    double recovery_prob;
    SimQuestionOverrides overrides;
  };
  Resolved resolve(const Question& q) const;
  Rollout finish(const Question& q, const Resolved& r, const State& state, Rng* rng,
                 const std::vector<std::size_t>* forced_errors, std::int64_t forced_delta) const;
  std::uint64_t next_ordinal(std::uint64_t state_hash);

  SimPolicySpec spec_;
  std::map<std::string, SimQuestionOverrides> overrides_;
  mutable std::mutex mu_;
  std::unordered_map<std::uint64_t, std::uint64_t> ordinals_;
};

struct SimCorpusOptions {
  std::size_t n_questions = 10;
  std::size_t n_steps = 8;
  std::uint64_t seed = 0;
  std::int64_t max_operand = 20;
  // Drawn uniformly per question when hi > lo; fixed otherwise.
  double error_prob_lo = 0.05;
  double error_prob_hi = 0.05;
  double trap_prob_lo = 0.0;
  double trap_prob_hi = 0.0;
  std::optional<double> recovery_prob;
  std::string id_prefix = "sim";
};

struct SimCorpusItem {
  Question question;
  SimQuestionOverrides overrides;
};

std::vector<SimCorpusItem> make_sim_corpus(const SimCorpusOptions& opts);

}  // namespace omegaprm
