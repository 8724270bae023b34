#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace omegaprm {

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

using Tokenizer = std::function<std::size_t(std::string_view)>;

std::size_t whitespace_token_count(std::string_view text);
// Rough LLM token estimate: ceil(chars / 4).
std::size_t char_quarter_token_count(std::string_view text);

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct Question {
  std::string id;
  std::string statement;
  std::string golden_answer;

  bool operator==(const Question&) const = default;
};

void validate(const Question& q);

struct Step {
  std::string text;
  std::size_t token_len = 0;

  static Step make(std::string text, const Tokenizer& tokenizer = whitespace_token_count);

  bool operator==(const Step&) const = default;
};

using StepSeq = std::vector<Step>;

std::size_t total_tokens(std::span<const Step> steps);
// Newline-joined step texts.
std::string join_steps(std::span<const Step> steps);

// Bookkeeping written by the simulated policy. The engine never reads it.
struct InjectionTrace {
  bool prefix_had_error = false;
  std::vector<std::size_t> error_steps;  // 1-based positions within Rollout::steps
  bool recovered = false;

  bool operator==(const InjectionTrace&) const = default;
};

struct Rollout {
  StepSeq steps;
  std::string final_answer;
  bool is_correct = false;
  std::size_t token_len = 0;
  std::optional<InjectionTrace> trace;

  static Rollout make(StepSeq steps, std::string final_answer, bool is_correct);

  // Identity of the sampled text, used for pool de-duplication.
  std::string text_key() const;

  bool operator==(const Rollout&) const = default;
};

struct State {
  std::string question_id;
  StepSeq prefix;

  static State root(std::string question_id) { return State{std::move(question_id), {}}; }

  bool is_root() const noexcept { return prefix.empty(); }
  std::size_t prefix_tokens() const noexcept { return total_tokens(prefix); }
  // Node identity: the ordered step texts.
  std::string key() const;

  bool operator==(const State&) const = default;
};

// s' = s ++ action. Throws InvalidAction if the action is empty.
State state_transition(const State& s, std::span<const Step> action);

// Monte Carlo estimate kept as an exact fraction so that MC == 0 and
// MC == 1 are exact predicates.
struct McEstimate {
  std::uint32_t correct = 0;
  std::uint32_t total = 0;

  double value() const noexcept {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
  bool is_zero() const noexcept { return total > 0 && correct == 0; }
  bool is_one() const noexcept { return total > 0 && correct == total; }
  bool is_positive() const noexcept { return correct > 0; }
  // 0 < MC < 1
  bool is_mixed() const noexcept { return correct > 0 && correct < total; }

  static McEstimate count(std::span<const Rollout> rollouts);

  bool operator==(const McEstimate&) const = default;
};

struct NodeStats {
  std::uint64_t visit_count = 0;
  McEstimate mc;
  std::vector<Rollout> rollouts;

  bool operator==(const NodeStats&) const = default;
};

struct EngineConfig {
  double alpha = 0.5;
  double beta = 0.9;
  double len_scale = 500.0;
  double c_puct = 0.125;
  std::uint32_t k_rollouts = 8;
  std::uint32_t search_limit = 100;
  std::uint32_t step_split_target = 16;
  std::uint64_t rng_seed = 0;
  // Passed through to the completer.
  double temperature = 1.0;
  std::uint32_t max_tokens = 1024;

  // Throws InvalidConfig naming the first offending field.
  void validate() const;

  bool operator==(const EngineConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Deterministic hashing and random streams
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

// SplitMix64 stream; output is identical across platforms and standard
// libraries, unlike the <random> distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform index in [0, n).
  std::size_t index(std::size_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace omegaprm
